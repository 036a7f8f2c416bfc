/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>

#include "canet/errors.hpp"

namespace canet {

namespace {

// Evaluating exactly at a threshold would put the flipped sample at a tie, so
// the sweep samples just below each one.
constexpr double kBiasEpsilon = 1e-6;
constexpr double kBiasSentinel = 1e9;

int argmax_with_bias(const std::vector<double>& scores, const std::vector<char>& seen,
                     double bias) {
  int best = 0;
  double best_v = scores[0] + (seen[0] ? bias : 0.0);
  for (size_t k = 1; k < scores.size(); ++k) {
    double v = scores[k] + (seen[k] ? bias : 0.0);
    if (v > best_v) {
      best_v = v;
      best = int(k);
    }
  }
  return best;
}

CurvePoint accuracy_at_bias(const ScoreTable& t, double bias) {
  CurvePoint p;
  p.bias = bias;
  int seen_total = 0, seen_hit = 0, unseen_total = 0, unseen_hit = 0;
  for (size_t i = 0; i < t.fused.size(); ++i) {
    int pred = argmax_with_bias(t.fused[i], t.candidate_seen, bias);
    bool correct = pred == t.true_candidate[i];
    if (t.candidate_seen[size_t(t.true_candidate[i])]) {
      ++seen_total;
      seen_hit += correct;
    } else {
      ++unseen_total;
      unseen_hit += correct;
    }
  }
  p.seen_acc = seen_total ? double(seen_hit) / seen_total : 0.0;
  p.unseen_acc = unseen_total ? double(unseen_hit) / unseen_total : 0.0;
  return p;
}

std::vector<double> bias_candidates(const ScoreTable& t) {
  std::set<double> biases;
  biases.insert(-kBiasSentinel);
  biases.insert(kBiasSentinel);
  for (size_t i = 0; i < t.fused.size(); ++i) {
    if (t.candidate_seen[size_t(t.true_candidate[i])]) continue;  // unseen-labeled only
    double max_seen = -std::numeric_limits<double>::infinity();
    double max_unseen = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < t.fused[i].size(); ++k)
      (t.candidate_seen[k] ? max_seen : max_unseen) =
          std::max(t.candidate_seen[k] ? max_seen : max_unseen, t.fused[i][k]);
    if (!std::isfinite(max_seen) || !std::isfinite(max_unseen)) continue;
    biases.insert(-(max_seen - max_unseen) - kBiasEpsilon);
  }
  return {biases.begin(), biases.end()};
}

void check_table(const ScoreTable& t) {
  if (t.fused.empty()) throw ValidationError("calibrated_sweep: no samples");
  bool any_seen = false, any_unseen = false;
  for (int c : t.true_candidate) {
    if (c < 0 || c >= int(t.candidate_seen.size()))
      throw ValidationError("calibrated_sweep: true candidate index out of range");
    (t.candidate_seen[size_t(c)] ? any_seen : any_unseen) = true;
  }
  if (!any_seen || !any_unseen)
    throw ValidationError(
        "calibrated_sweep: need at least one seen-labeled and one unseen-labeled sample");
}

}  // namespace

double normalize_score(double d) {
  if (std::abs(d) > 1.0 + 1e-6)
    throw NumericError("normalize_score: cosine value " + std::to_string(d) + " outside [-1,1]");
  return std::clamp((1.0 + d) * 0.5, 0.0, 1.0);
}

std::vector<double> fuse_scores(const std::vector<double>& p_comp,
                                const std::vector<double>& p_attr,
                                const std::vector<double>& p_obj, double alpha,
                                const std::vector<Pair>& pairs) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fuse_scores: alpha must be in [0,1]");
  if (p_comp.size() != pairs.size())
    throw ShapeError("fuse_scores: one composition probability per candidate pair required");
  std::vector<double> s(pairs.size());
  for (size_t k = 0; k < pairs.size(); ++k) {
    auto [a, o] = pairs[k];
    if (a < 0 || a >= int(p_attr.size()) || o < 0 || o >= int(p_obj.size()))
      throw ShapeError("fuse_scores: pair index outside probability tables");
    s[k] = (1.0 - alpha) * p_comp[k] + alpha * p_attr[size_t(a)] * p_obj[size_t(o)];
  }
  return s;
}

std::vector<CurvePoint> calibrated_sweep(const ScoreTable& t) {
  check_table(t);
  std::vector<CurvePoint> curve;
  for (double b : bias_candidates(t)) curve.push_back(accuracy_at_bias(t, b));
  return curve;
}

GzslReport compute_metrics(const std::vector<CurvePoint>& curve,
                           const std::vector<char>& attr_correct,
                           const std::vector<char>& obj_correct) {
  if (curve.empty()) throw ValidationError("compute_metrics: empty curve");
  GzslReport r;
  r.curve = curve;
  std::sort(r.curve.begin(), r.curve.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.bias < b.bias; });
  for (const CurvePoint& p : r.curve) {
    r.best_seen = std::max(r.best_seen, p.seen_acc);
    r.best_unseen = std::max(r.best_unseen, p.unseen_acc);
    double hm = p.seen_acc + p.unseen_acc > 0.0
                    ? 2.0 * p.seen_acc * p.unseen_acc / (p.seen_acc + p.unseen_acc)
                    : 0.0;
    r.best_hm = std::max(r.best_hm, hm);
  }
  for (size_t i = 0; i + 1 < r.curve.size(); ++i)
    r.auc += (r.curve[i + 1].seen_acc - r.curve[i].seen_acc) *
             (r.curve[i].unseen_acc + r.curve[i + 1].unseen_acc) * 0.5;
  auto acc = [](const std::vector<char>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (char c : v) s += c ? 1.0 : 0.0;
    return s / double(v.size());
  };
  r.best_attr = acc(attr_correct);
  r.best_obj = acc(obj_correct);
  return r;
}

GzslReport oracle_metrics(const ScoreTable& t) {
  if (t.fused.size() > 64 || t.candidate_seen.size() > 64)
    throw ConfigError("oracle_metrics: capped at 64 samples and 64 candidate pairs");
  check_table(t);

  // Deliberately naive re-derivation: recompute the threshold list and every
  // curve point with plain loops, then integrate.
  std::vector<double> biases;
  biases.push_back(-kBiasSentinel);
  biases.push_back(kBiasSentinel);
  for (size_t i = 0; i < t.fused.size(); ++i) {
    bool label_seen = t.candidate_seen[size_t(t.true_candidate[i])] != 0;
    if (label_seen) continue;
    bool have_seen = false, have_unseen = false;
    double ms = 0.0, mu = 0.0;
    for (size_t k = 0; k < t.fused[i].size(); ++k) {
      if (t.candidate_seen[k]) {
        if (!have_seen || t.fused[i][k] > ms) ms = t.fused[i][k];
        have_seen = true;
      } else {
        if (!have_unseen || t.fused[i][k] > mu) mu = t.fused[i][k];
        have_unseen = true;
      }
    }
    if (have_seen && have_unseen) biases.push_back(-(ms - mu) - kBiasEpsilon);
  }
  std::sort(biases.begin(), biases.end());
  biases.erase(std::unique(biases.begin(), biases.end()), biases.end());

  std::vector<CurvePoint> curve;
  for (double b : biases) {
    CurvePoint p;
    p.bias = b;
    int st = 0, sh = 0, ut = 0, uh = 0;
    for (size_t i = 0; i < t.fused.size(); ++i) {
      int best = -1;
      double best_v = 0.0;
      for (size_t k = 0; k < t.fused[i].size(); ++k) {
        double v = t.fused[i][k] + (t.candidate_seen[k] ? b : 0.0);
        if (best < 0 || v > best_v) {
          best_v = v;
          best = int(k);
        }
      }
      bool correct = best == t.true_candidate[i];
      if (t.candidate_seen[size_t(t.true_candidate[i])]) {
        ++st;
        sh += correct;
      } else {
        ++ut;
        uh += correct;
      }
    }
    p.seen_acc = st ? double(sh) / st : 0.0;
    p.unseen_acc = ut ? double(uh) / ut : 0.0;
    curve.push_back(p);
  }

  GzslReport r;
  r.curve = curve;
  for (const CurvePoint& p : curve) {
    if (p.seen_acc > r.best_seen) r.best_seen = p.seen_acc;
    if (p.unseen_acc > r.best_unseen) r.best_unseen = p.unseen_acc;
    if (p.seen_acc + p.unseen_acc > 0.0) {
      double hm = 2.0 * p.seen_acc * p.unseen_acc / (p.seen_acc + p.unseen_acc);
      if (hm > r.best_hm) r.best_hm = hm;
    }
  }
  for (size_t i = 0; i + 1 < curve.size(); ++i)
    r.auc += (curve[i + 1].seen_acc - curve[i].seen_acc) *
             (curve[i].unseen_acc + curve[i + 1].unseen_acc) / 2.0;
  return r;
}

ScoreTable score_phase(ModelParams<float>& params, const std::vector<const Sample*>& samples,
                       const CompositionSplit& split, Phase phase, double alpha, int batch_size) {
  PhaseCandidates cands = phase_candidates(split, phase);
  if (cands.pairs.empty()) throw ValidationError("score_phase: empty candidate set");
  ScoreTable t;
  t.candidate_seen = cands.seen;

  for (size_t start = 0; start < samples.size(); start += size_t(batch_size)) {
    size_t stop = std::min(samples.size(), start + size_t(batch_size));
    std::vector<const Sample*> batch(samples.begin() + long(start), samples.begin() + long(stop));
    Mat<float> x = stack_features(batch, params.cfg.d_x);
    auto fp = build_forward(params, x, cands.pairs, /*train=*/false, nullptr, /*grads=*/false);
    const Mat<float>& so = fp.g.value(fp.obj_scores);
    const Mat<float>& sa = fp.g.value(fp.attr_scores);
    const Mat<float>& sc = fp.g.value(fp.comp_scores);
    std::vector<int> attr_pred = recognize_object(sa);  // argmax per row
    std::vector<int> obj_pred = recognize_object(so);

    for (size_t i = 0; i < batch.size(); ++i) {
      const Sample& s = *batch[i];
      std::vector<double> p_attr(size_t(params.cfg.num_attrs));
      std::vector<double> p_obj(size_t(params.cfg.num_objs));
      std::vector<double> p_comp(cands.pairs.size());
      for (int a = 0; a < params.cfg.num_attrs; ++a)
        p_attr[size_t(a)] = normalize_score(double(sa.at(int(i), a)));
      for (int o = 0; o < params.cfg.num_objs; ++o)
        p_obj[size_t(o)] = normalize_score(double(so.at(int(i), o)));
      for (size_t k = 0; k < cands.pairs.size(); ++k)
        p_comp[k] = normalize_score(double(sc.at(int(i), int(k))));
      t.fused.push_back(fuse_scores(p_comp, p_attr, p_obj, alpha, cands.pairs));
      int tc = cands.index_of({s.attr_index, s.obj_index});
      if (tc < 0)
        throw ValidationError("score_phase: sample '" + s.id +
                              "' labeled with a pair outside the candidate set");
      t.true_candidate.push_back(tc);
      t.attr_correct.push_back(attr_pred[i] == s.attr_index);
      t.obj_correct.push_back(obj_pred[i] == s.obj_index);
    }
  }
  return t;
}

GzslReport evaluate(ModelParams<float>& params, const std::vector<const Sample*>& samples,
                    const CompositionSplit& split, Phase phase, double alpha, int batch_size) {
  ScoreTable t = score_phase(params, samples, split, phase, alpha, batch_size);
  return compute_metrics(calibrated_sweep(t), t.attr_correct, t.obj_correct);
}

void write_report_csv(std::ostream& out, const GzslReport& r) {
  // round-trip precision so downstream comparisons see the exact doubles
  out << std::setprecision(17);
  out << "best_attr," << r.best_attr << "\n"
      << "best_obj," << r.best_obj << "\n"
      << "best_seen," << r.best_seen << "\n"
      << "best_unseen," << r.best_unseen << "\n"
      << "best_hm," << r.best_hm << "\n"
      << "auc," << r.auc << "\n";
}

void write_report_table(std::ostream& out, const GzslReport& r) {
  out << "metric        value\n"
      << "best_attr     " << r.best_attr << "\n"
      << "best_obj      " << r.best_obj << "\n"
      << "best_seen     " << r.best_seen << "\n"
      << "best_unseen   " << r.best_unseen << "\n"
      << "best_hm       " << r.best_hm << "\n"
      << "auc           " << r.auc << "\n";
}

void write_curve_csv(std::ostream& out, const GzslReport& r) {
  out << std::setprecision(17);
  out << "bias,seen_acc,unseen_acc\n";
  for (const CurvePoint& p : r.curve)
    out << p.bias << "," << p.seen_acc << "," << p.unseen_acc << "\n";
}

}  // namespace canet
