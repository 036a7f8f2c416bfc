/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/training.hpp"

#include <algorithm>
#include <cmath>

#include "canet/errors.hpp"
#include "canet/evaluation.hpp"

namespace canet {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be nonnegative");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("train config: tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train config: alpha must be in [0,1]");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("train config: dropout_p must be in [0,1)");
  if (patience < 1) throw ConfigError("train config: patience must be >= 1");
  if (eval_every < 1) throw ConfigError("train config: eval_every must be >= 1");
  if (d_w < 1) throw ConfigError("train config: d_w must be positive");
}

ModelConfig model_config_from(const TrainConfig& cfg, const Dataset& ds) {
  ModelConfig mc;
  mc.num_attrs = ds.vocab.num_attrs();
  mc.num_objs = ds.vocab.num_objs();
  mc.d_x = ds.d_x;
  mc.d_w = cfg.d_w;
  mc.tau = cfg.tau;
  mc.alpha = cfg.alpha;
  mc.dropout_p = cfg.dropout_p;
  mc.variant = cfg.variant;
  mc.teacher_forcing = cfg.teacher_forcing;
  mc.train_embeddings = cfg.train_embeddings;
  return mc;
}

TrainState TrainState::fresh(ModelParams<float> params, uint64_t seed) {
  TrainState st;
  st.params = std::move(params);
  st.rng.seed(seed);
  st.params.for_each_tensor([&](const std::string&, Mat<float>& t, bool trainable) {
    if (!trainable) return;
    st.m1.push_back(Mat<float>::zeros_like(t));
    st.m2.push_back(Mat<float>::zeros_like(t));
  });
  return st;
}

BatchLosses batch_losses(ModelParams<float>& params, const Mat<float>& features,
                         const std::vector<int>& attr_targets,
                         const std::vector<int>& obj_targets,
                         const std::vector<int>& comp_targets,
                         const std::vector<Pair>& candidates, bool train_mode,
                         std::mt19937_64* rng, std::vector<Mat<float>>* grads,
                         std::vector<std::string>* grad_names) {
  if (features.rows == 0) throw ConfigError("batch_losses: empty batch");
  if (candidates.empty()) throw ConfigError("batch_losses: empty candidate composition set");
  const Variant variant = params.cfg.variant;

  const std::vector<int>* forced = params.cfg.teacher_forcing ? &obj_targets : nullptr;
  auto fp = build_forward(params, features, candidates, train_mode, rng, grads != nullptr, forced);
  auto& g = fp.g;
  float tau = float(params.cfg.tau);

  int la = g.cross_entropy(fp.attr_scores, attr_targets, tau);
  int lo = g.cross_entropy(fp.obj_scores, obj_targets, tau);
  int lao = g.cross_entropy(fp.comp_scores, comp_targets, tau);

  BatchLosses out;
  out.attr = double(g.value(la).at(0, 0));
  out.obj = double(g.value(lo).at(0, 0));
  out.comp = double(g.value(lao).at(0, 0));

  int total;
  switch (variant) {
    case Variant::no_attr_obj_losses:
      total = lao;
      break;
    case Variant::no_comp_loss:
      total = g.scale(g.add(la, lo), 0.5f);
      break;
    default:
      total = g.add(g.scale(g.add(la, lo), 0.5f), lao);
      break;
  }
  out.total = double(g.value(total).at(0, 0));
  if (!std::isfinite(out.total))
    throw NumericError("batch_losses: non-finite loss");

  if (grads != nullptr) {
    g.backward(total);
    grads->clear();
    if (grad_names) grad_names->clear();
    for (size_t i = 0; i < fp.param_refs.size(); ++i) {
      if (!fp.param_trainable[i]) continue;
      const Mat<float>& gm = g.grad(fp.param_refs[i]);
      if (!gm.all_finite())
        throw NumericError("batch_losses: non-finite gradient for " + fp.param_names[i]);
      grads->push_back(gm);
      if (grad_names) grad_names->push_back(fp.param_names[i]);
    }
  }
  return out;
}

void adam_step(TrainState& state, const std::vector<Mat<float>>& grads, double learning_rate,
               double weight_decay) {
  if (grads.size() != state.m1.size())
    throw ShapeError("adam_step: gradient count " + std::to_string(grads.size()) +
                     " != moment count " + std::to_string(state.m1.size()));
  ++state.step;
  // The single-rescaled-step-size formulation of Adam:
  //   theta -= lr * sqrt(1-b2^t)/(1-b1^t) * m / (sqrt(v) + eps)
  double corr = std::sqrt(1.0 - std::pow(kAdamBeta2, double(state.step))) /
                (1.0 - std::pow(kAdamBeta1, double(state.step)));
  float lr_t = float(learning_rate * corr);
  float decay = float(1.0 - learning_rate * weight_decay);
  size_t idx = 0;
  state.params.for_each_tensor([&](const std::string& name, Mat<float>& t, bool trainable) {
    if (!trainable) return;
    const Mat<float>& gm = grads[idx];
    if (!gm.same_shape(t))
      throw ShapeError("adam_step: gradient shape mismatch for " + name);
    if (!gm.all_finite()) throw NumericError("adam_step: non-finite gradient for " + name);
    Mat<float>& m = state.m1[idx];
    Mat<float>& v = state.m2[idx];
    for (size_t i = 0; i < t.size(); ++i) {
      t.data[i] *= decay;
      m.data[i] = float(kAdamBeta1) * m.data[i] + float(1.0 - kAdamBeta1) * gm.data[i];
      v.data[i] = float(kAdamBeta2) * v.data[i] + float(1.0 - kAdamBeta2) * gm.data[i] * gm.data[i];
      t.data[i] -= lr_t * m.data[i] / (std::sqrt(v.data[i]) + float(kAdamEps));
    }
    ++idx;
  });
}

void train(const TrainConfig& cfg, const Dataset& ds, TrainState& state,
           const EpochCallback& on_epoch) {
  cfg.validate();
  auto train_samples = samples_of_phase(ds, Phase::train);
  if (train_samples.empty()) throw ConfigError("train: dataset has no train samples");
  auto val_samples = samples_of_phase(ds, Phase::val);
  bool have_val = !val_samples.empty() && !ds.split.val_unseen.empty();

  const std::vector<Pair>& candidates = ds.split.train_seen;
  std::vector<int> indices(train_samples.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = int(i);

  while (state.epoch < cfg.max_epochs) {
    // Seeded Fisher-Yates from the identity order, so each epoch's permutation
    // is a pure function of the rng state (resume stays bitwise exact).
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = int(i);
    for (size_t i = indices.size() - 1; i > 0; --i) {
      size_t j = state.rng() % (i + 1);
      std::swap(indices[i], indices[j]);
    }

    BatchLosses sum;
    int batches = 0;
    std::vector<Mat<float>> grads;
    for (size_t start = 0; start < indices.size(); start += size_t(cfg.batch_size)) {
      size_t stop = std::min(indices.size(), start + size_t(cfg.batch_size));
      std::vector<const Sample*> batch;
      std::vector<int> attr_t, obj_t, comp_t;
      for (size_t i = start; i < stop; ++i) {
        const Sample* s = train_samples[size_t(indices[i])];
        batch.push_back(s);
        attr_t.push_back(s->attr_index);
        obj_t.push_back(s->obj_index);
        auto it = std::lower_bound(candidates.begin(), candidates.end(),
                                   Pair{s->attr_index, s->obj_index});
        comp_t.push_back(int(it - candidates.begin()));
      }
      Mat<float> x = stack_features(batch, ds.d_x);
      BatchLosses bl;
      try {
        bl = batch_losses(state.params, x, attr_t, obj_t, comp_t, candidates, true, &state.rng,
                          &grads);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(state.epoch) + " batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      adam_step(state, grads, cfg.learning_rate, cfg.weight_decay);
      sum.attr += bl.attr;
      sum.obj += bl.obj;
      sum.comp += bl.comp;
      sum.total += bl.total;
      ++batches;
    }

    EpochLog log;
    log.epoch = state.epoch;
    log.mean = {sum.attr / batches, sum.obj / batches, sum.comp / batches, sum.total / batches};

    if (have_val && (state.epoch + 1) % cfg.eval_every == 0) {
      GzslReport rep = evaluate(state.params, val_samples, ds.split, Phase::val, cfg.alpha,
                                cfg.batch_size);
      log.val_auc = rep.auc;
      if (rep.auc > state.best_val_auc) {
        state.best_val_auc = rep.auc;
        state.epochs_since_improve = 0;
      } else {
        state.epochs_since_improve += cfg.eval_every;
      }
    }

    state.history.push_back(log);
    ++state.epoch;
    if (on_epoch) on_epoch(log);
    if (have_val && state.epochs_since_improve >= cfg.patience) break;
  }
}

TrainState train(const TrainConfig& cfg, const Dataset& ds, const EpochCallback& on_epoch) {
  cfg.validate();
  ModelConfig mc = model_config_from(cfg, ds);
  TrainState state = TrainState::fresh(init_params(mc, cfg.seed), cfg.seed);
  train(cfg, ds, state, on_epoch);
  return state;
}

}  // namespace canet
