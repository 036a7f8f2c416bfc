/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "canet/errors.hpp"
#include "canet/mat.hpp"

namespace canet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_coord;  // "tensor[i]" of the worst offender
  bool pass(double tol) const { return max_rel_err < tol; }
};

/// Central-difference check of an analytic gradient, double precision.
///
/// `loss_fn` re-evaluates the scalar objective at the current contents of
/// `params` (the same buffers are perturbed in place). `analytic` holds the
/// gradient at the unperturbed point, one entry per parameter tensor. When a
/// tensor has more than `max_coords_per_tensor` entries a random subset of at
/// least 64 coordinates is checked.
inline GradCheckReport grad_check(const std::function<double()>& loss_fn,
                                  const std::vector<Mat<double>*>& params,
                                  const std::vector<std::string>& names,
                                  const std::vector<Mat<double>>& analytic,
                                  double eps, std::mt19937_64& rng,
                                  int max_coords_per_tensor = 64) {
  if (params.size() != analytic.size() || params.size() != names.size())
    throw ConfigError("grad_check: params/names/analytic size mismatch");
  GradCheckReport rep;
  for (size_t t = 0; t < params.size(); ++t) {
    Mat<double>& p = *params[t];
    if (!p.same_shape(analytic[t]))
      throw ShapeError("grad_check: gradient shape mismatch for " + names[t]);
    std::vector<size_t> coords(p.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    int budget = std::max(64, max_coords_per_tensor);
    if (int(coords.size()) > budget) {
      for (size_t i = coords.size() - 1; i > 0; --i) {
        size_t j = rng() % (i + 1);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(size_t(budget));
    }
    for (size_t i : coords) {
      double saved = p.data[i];
      p.data[i] = saved + eps;
      double fp = loss_fn();
      p.data[i] = saved - eps;
      double fm = loss_fn();
      p.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite loss while perturbing " + names[t]);
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[t].data[i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      double rel = std::abs(a - numeric) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_coord = names[t] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace canet
