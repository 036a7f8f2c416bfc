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

#include <iosfwd>
#include <vector>

#include "canet/dataset.hpp"
#include "canet/model.hpp"

namespace canet {

struct CurvePoint {
  double bias = 0.0;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
};

struct GzslReport {
  double best_attr = 0.0;
  double best_obj = 0.0;
  double best_seen = 0.0;
  double best_unseen = 0.0;
  double best_hm = 0.0;
  double auc = 0.0;
  std::vector<CurvePoint> curve;
};

/// Fused scores plus label bookkeeping for one evaluation phase.
struct ScoreTable {
  std::vector<std::vector<double>> fused;  // [sample][candidate]
  std::vector<char> candidate_seen;        // per candidate pair
  std::vector<int> true_candidate;         // per sample
  std::vector<char> attr_correct;          // per sample, bias-independent heads
  std::vector<char> obj_correct;
};

/// g(d) = (1+d)*0.5, clamped to [0,1]. Rejects |d| > 1 + 1e-6.
double normalize_score(double d);

/// s = (1-alpha) P(c|i) + alpha P(a|o*,i) P(o|i), per candidate pair.
/// p_attr is indexed by the pair's attribute, p_obj by its object.
std::vector<double> fuse_scores(const std::vector<double>& p_comp,
                                const std::vector<double>& p_attr,
                                const std::vector<double>& p_obj, double alpha,
                                const std::vector<Pair>& pairs);

/// Calibration-bias sweep: biases sit just below every per-sample decision
/// threshold (max seen score - max unseen score over unseen-labeled samples),
/// plus sentinels at both extremes. Prediction is argmax of s + b*[pair seen],
/// ties to the lowest candidate index. Curve is sorted by bias.
std::vector<CurvePoint> calibrated_sweep(const ScoreTable& t);

/// Trapezoidal AUC over (seen_acc, unseen_acc), best seen/unseen/HM maxima,
/// plain attribute/object accuracies.
GzslReport compute_metrics(const std::vector<CurvePoint>& curve,
                           const std::vector<char>& attr_correct,
                           const std::vector<char>& obj_correct);

/// Test-only brute-force recomputation of sweep+metrics with naive loops.
/// Capped at 64 samples and 64 candidate pairs.
GzslReport oracle_metrics(const ScoreTable& t);

/// Full evaluation of a phase: forward passes, normalization, fusion, sweep.
/// Deterministic; dropout off.
GzslReport evaluate(ModelParams<float>& params, const std::vector<const Sample*>& samples,
                    const CompositionSplit& split, Phase phase, double alpha,
                    int batch_size = 256);

/// Convenience: fused-score table without the sweep (shared by evaluate and
/// the tests).
ScoreTable score_phase(ModelParams<float>& params, const std::vector<const Sample*>& samples,
                       const CompositionSplit& split, Phase phase, double alpha,
                       int batch_size = 256);

void write_report_csv(std::ostream& out, const GzslReport& r);
void write_report_table(std::ostream& out, const GzslReport& r);
void write_curve_csv(std::ostream& out, const GzslReport& r);

}  // namespace canet
