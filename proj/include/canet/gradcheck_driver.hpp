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

#include <random>
#include <string>
#include <vector>

#include "canet/gradcheck.hpp"
#include "canet/model.hpp"

namespace canet {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

namespace detail {

inline Mat<double> random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat<double> m(r, c);
  for (auto& v : m.data) v = n(rng);
  return m;
}

}  // namespace detail

/// Central-difference check of the combined objective on a tiny model,
/// double precision, dropout off, recognized objects frozen at the base
/// point. `corrupt` plants a deliberate error in one analytic gradient
/// (test hook for the failure path).
inline GradCheckReport full_loss_gradcheck(uint64_t seed, double eps = 1e-5,
                                           Variant variant = Variant::full,
                                           bool corrupt = false) {
  ModelConfig mc;
  mc.num_attrs = 3;
  mc.num_objs = 3;
  mc.d_x = 24;
  mc.d_w = 24;
  mc.tau = 0.1;
  mc.dropout_p = 0.0;  // masks are not differentiable surrogates
  mc.variant = variant;
  ModelParams<double> params = init_params(mc, seed).cast<double>();
  // Word embeddings included in the check.
  params.cfg.train_embeddings = true;

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  int B = 4;
  Mat<double> features = detail::random_mat(B, mc.d_x, rng);
  std::vector<Pair> candidates = {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}};
  std::vector<int> attr_t(static_cast<size_t>(B)), obj_t(static_cast<size_t>(B)),
      comp_t(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) {
    comp_t[size_t(i)] = int(rng() % candidates.size());
    attr_t[size_t(i)] = candidates[size_t(comp_t[size_t(i)])].first;
    obj_t[size_t(i)] = candidates[size_t(comp_t[size_t(i)])].second;
  }

  // Freeze o* at the base point so the finite differences probe the same
  // (piecewise-smooth) branch the analytic gradient lives on.
  std::vector<int> frozen_obj;
  {
    auto fp = build_forward(params, features, candidates, false, nullptr, false);
    frozen_obj = fp.obj_star;
  }

  auto loss_at = [&](bool want_grads, std::vector<Mat<double>>* grads,
                     std::vector<std::string>* names, std::vector<Mat<double>*>* tensors) {
    auto fp = build_forward(params, features, candidates, false, nullptr, want_grads, &frozen_obj);
    auto& g = fp.g;
    double tau = params.cfg.tau;
    int la = g.cross_entropy(fp.attr_scores, attr_t, tau);
    int lo = g.cross_entropy(fp.obj_scores, obj_t, tau);
    int lao = g.cross_entropy(fp.comp_scores, comp_t, tau);
    int total;
    if (variant == Variant::no_attr_obj_losses) total = lao;
    else if (variant == Variant::no_comp_loss) total = g.scale(g.add(la, lo), 0.5);
    else total = g.add(g.scale(g.add(la, lo), 0.5), lao);
    double loss = g.value(total).at(0, 0);
    if (want_grads) {
      g.backward(total);
      for (size_t i = 0; i < fp.param_refs.size(); ++i) {
        if (!fp.param_trainable[i]) continue;
        grads->push_back(g.grad(fp.param_refs[i]));
        names->push_back(fp.param_names[i]);
        tensors->push_back(fp.param_tensors[i]);
      }
    }
    return loss;
  };

  std::vector<Mat<double>> analytic;
  std::vector<std::string> names;
  std::vector<Mat<double>*> tensors;
  loss_at(true, &analytic, &names, &tensors);
  if (corrupt && analytic.size() > 2)
    for (double& v : analytic[2].data) v += 0.01;

  std::mt19937_64 pick_rng(seed + 1);
  return grad_check([&] { return loss_at(false, nullptr, nullptr, nullptr); }, tensors, names,
                    analytic, eps, pick_rng, 16);
}

/// Per-layer checks against central differences; one case per operation.
inline std::vector<GradCheckCase> layer_gradchecks(uint64_t seed, double eps = 1e-5) {
  std::vector<GradCheckCase> out;
  std::mt19937_64 rng(seed);

  auto run = [&](const std::string& name, auto make_loss, std::vector<Mat<double>*> params,
                 std::vector<std::string> names) {
    Graph<double> g0;
    std::vector<Mat<double>> analytic;
    {
      Graph<double> g;
      int loss = make_loss(g, true);
      g.backward(loss);
      // make_loss registered params as the first nodes, in order
      for (size_t i = 0; i < params.size(); ++i) analytic.push_back(g.grad(int(i)));
    }
    std::mt19937_64 pick(seed + 7);
    auto loss_only = [&] {
      Graph<double> g;
      int loss = make_loss(g, false);
      return g.value(loss).at(0, 0);
    };
    out.push_back({name, grad_check(loss_only, params, names, analytic, eps, pick, 64)});
  };

  {
    Mat<double> x = detail::random_mat(3, 4, rng), W = detail::random_mat(4, 5, rng),
                b = detail::random_mat(1, 5, rng);
    run("affine", [&](Graph<double>& g, bool wg) {
      int xi = g.input(x, wg), wi = g.input(W, wg), bi = g.input(b, wg);
      return g.sum(g.affine(xi, wi, bi));
    }, {&x, &W, &b}, {"x", "W", "b"});
  }
  {
    // points bounded away from the kink at 0
    Mat<double> x = detail::random_mat(3, 6, rng);
    for (auto& v : x.data) v += v >= 0 ? 0.5 : -0.5;
    Mat<double> w = detail::random_mat(6, 1, rng);
    run("relu", [&](Graph<double>& g, bool wg) {
      int xi = g.input(x, wg);
      int wi = g.input(w, false);
      Mat<double> b(1, 1);
      return g.sum(g.affine(g.relu(xi), wi, g.input(b, false)));
    }, {&x}, {"x"});
  }
  {
    Mat<double> x = detail::random_mat(4, 6, rng), gm = detail::random_mat(1, 6, rng),
                bt = detail::random_mat(1, 6, rng);
    Mat<double> wfix = detail::random_mat(4, 6, rng);  // fixed weights, non-uniform objective
    run("layer_norm", [&](Graph<double>& g, bool wg) {
      int xi = g.input(x, wg), gi = g.input(gm, wg), bi = g.input(bt, wg);
      return g.sum(g.hadamard(g.layer_norm(xi, gi, bi, 1e-5), g.input(wfix, false)));
    }, {&x, &gm, &bt}, {"x", "gamma", "beta"});
  }
  {
    Mat<double> a = detail::random_mat(3, 2, rng), b = detail::random_mat(3, 4, rng);
    run("concat_cols", [&](Graph<double>& g, bool wg) {
      int ai = g.input(a, wg), bi = g.input(b, wg);
      int cat = g.concat_cols(ai, bi);
      return g.sum(g.hadamard(cat, cat));
    }, {&a, &b}, {"a", "b"});
  }
  {
    Mat<double> u = detail::random_mat(3, 5, rng), V = detail::random_mat(4, 5, rng);
    run("cosine", [&](Graph<double>& g, bool wg) {
      int ui = g.input(u, wg), vi = g.input(V, wg);
      return g.sum(g.cosine(ui, vi));
    }, {&u, &V}, {"u", "V"});
  }
  {
    Mat<double> s = detail::random_mat(4, 5, rng);
    std::vector<int> targets = {1, 0, 4, 2};
    run("cross_entropy", [&](Graph<double>& g, bool wg) {
      int si = g.input(s, wg);
      return g.cross_entropy(si, targets, 0.5);
    }, {&s}, {"scores"});
  }
  return out;
}

}  // namespace canet
