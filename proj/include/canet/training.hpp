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

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "canet/dataset.hpp"
#include "canet/model.hpp"

namespace canet {

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 5e-5;
  int batch_size = 256;
  int max_epochs = 100;
  double tau = 0.05;
  double alpha = 0.4;
  double dropout_p = 0.3;
  uint64_t seed = 0;
  Variant variant = Variant::full;
  bool teacher_forcing = false;
  bool train_embeddings = false;
  int d_w = 300;
  int patience = 50;    // epochs without val-AUC improvement before stopping
  int eval_every = 1;   // validation cadence in epochs

  void validate() const;
};

struct BatchLosses {
  double attr = 0.0;  // L_a
  double obj = 0.0;   // L_o
  double comp = 0.0;  // L_ao
  double total = 0.0; // L, per the variant
};

struct EpochLog {
  int epoch = 0;
  BatchLosses mean;     // averaged over the epoch's batches
  double val_auc = -1;  // -1 when validation was skipped this epoch
};

/// Adam moments aligned with the trainable tensors in for_each_tensor order.
struct TrainState {
  ModelParams<float> params;
  std::vector<Mat<float>> m1, m2;
  int64_t step = 0;
  int epoch = 0;
  std::mt19937_64 rng;
  std::vector<EpochLog> history;
  double best_val_auc = -1.0;
  int epochs_since_improve = 0;

  static TrainState fresh(ModelParams<float> params, uint64_t seed);
};

/// One mini-batch forward: per-head cross-entropies with temperature tau,
/// combined as L = (L_a + L_o)/2 + L_ao (variant flags bypass terms).
/// Fills `grads` (aligned with trainable tensors) when non-null; all three
/// component losses are always reported even when excluded from L.
BatchLosses batch_losses(ModelParams<float>& params, const Mat<float>& features,
                         const std::vector<int>& attr_targets,
                         const std::vector<int>& obj_targets,
                         const std::vector<int>& comp_targets,
                         const std::vector<Pair>& candidates, bool train_mode,
                         std::mt19937_64* rng, std::vector<Mat<float>>* grads,
                         std::vector<std::string>* grad_names = nullptr);

/// Decoupled weight decay, then the bias-corrected Adam update
/// (beta1=0.9, beta2=0.999, eps=1e-8). Deterministic.
void adam_step(TrainState& state, const std::vector<Mat<float>>& grads, double learning_rate,
               double weight_decay);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Epoch loop: seeded Fisher-Yates shuffle, batch_losses + backward +
/// adam_step, validation-AUC early stopping. `state` may come from a
/// checkpoint; training continues from state.epoch.
void train(const TrainConfig& cfg, const Dataset& ds, TrainState& state,
           const EpochCallback& on_epoch = nullptr);

/// Convenience: fresh state from the config + dataset, then train.
TrainState train(const TrainConfig& cfg, const Dataset& ds, const EpochCallback& on_epoch = nullptr);

ModelConfig model_config_from(const TrainConfig& cfg, const Dataset& ds);

}  // namespace canet
