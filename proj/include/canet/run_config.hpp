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

#include <filesystem>
#include <string>
#include <vector>

#include "canet/dataset.hpp"
#include "canet/training.hpp"

namespace canet {

/// Flat configuration shared by every CLI command. Defaults < config file
/// < command-line flags; unknown keys are rejected by name.
struct RunConfig {
  // synthetic generator
  int num_attrs = 6;
  int num_objs = 5;
  int d_x = 64;
  double noise_sigma = 0.05;
  double unseen_fraction = 0.2;
  int samples_per_pair = 30;

  // optimization
  double learning_rate = 5e-5;
  double weight_decay = 5e-5;
  int batch_size = 256;
  int max_epochs = 100;
  double tau = 0.05;
  double alpha = 0.4;
  double dropout_p = 0.3;
  uint64_t seed = 0;
  std::string variant = "full";
  bool teacher_forcing = false;
  bool train_embeddings = false;
  int d_w = 300;
  int patience = 50;
  int eval_every = 1;

  // paths and command-specific options
  std::string data;             // dataset directory
  std::string out = "out";      // output directory
  std::string checkpoint;       // checkpoint directory (eval / alpha-sweep)
  std::string resume;           // checkpoint directory to continue training from
  std::string attr_embeddings;  // optional binary matrix of attribute word vectors
  std::string obj_embeddings;
  std::string phase = "test";   // evaluation phase

  /// Assigns one key; throws ConfigError naming an unknown key or bad value.
  void set(const std::string& key, const std::string& value);

  static std::vector<std::string> known_keys();

  TrainConfig train_config() const;
  SyntheticSpec synthetic_spec() const;
};

/// Parses `key = value` lines ('#' comments, blank lines allowed).
void load_config_file(const std::filesystem::path& path, RunConfig& cfg);

}  // namespace canet
