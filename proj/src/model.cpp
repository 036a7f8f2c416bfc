/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/model.hpp"

#include <cmath>
#include <random>

namespace canet {

namespace {

Mat<float> uniform_fan_in(int rows, int cols, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(double(rows));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat<float> m(rows, cols);
  for (auto& v : m.data) v = float(u(rng));
  return m;
}

MlpParams<float> init_block(int in_dim, int hidden, int out_dim, bool final_relu,
                            std::mt19937_64& rng) {
  MlpParams<float> m;
  m.W1 = uniform_fan_in(in_dim, hidden, rng);
  m.b1 = Mat<float>(1, hidden);
  m.ln_gamma = Mat<float>(1, hidden, 1.0f);
  m.ln_beta = Mat<float>(1, hidden);
  m.W2 = uniform_fan_in(hidden, out_dim, rng);
  m.b2 = Mat<float>(1, out_dim);
  m.final_relu = final_relu;
  return m;
}

Mat<float> random_embeddings(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<float> m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double norm = 0.0;
    std::vector<double> row(static_cast<size_t>(cols));
    for (auto& v : row) {
      v = n(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (int c = 0; c < cols; ++c) m.at(r, c) = float(row[size_t(c)] / norm);
  }
  return m;
}

Mat<float> checked_table(const Mat<float>& table, int expect_rows, const char* what) {
  if (table.rows != expect_rows)
    throw ValidationError(std::string(what) + " embedding table has " +
                          std::to_string(table.rows) + " rows, vocabulary has " +
                          std::to_string(expect_rows));
  for (int r = 0; r < table.rows; ++r) {
    double norm = 0.0;
    for (int c = 0; c < table.cols; ++c) norm += double(table.at(r, c)) * table.at(r, c);
    if (norm == 0.0)
      throw ValidationError(std::string(what) + " embedding row " + std::to_string(r) +
                            " has zero norm");
  }
  return table;
}

}  // namespace

ModelParams<float> init_params(const ModelConfig& cfg, uint64_t seed, const EmbeddingInit& emb) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams<float> p;
  p.cfg = cfg;

  p.attr_table = emb.attr_table ? checked_table(*emb.attr_table, cfg.num_attrs, "attribute")
                                : random_embeddings(cfg.num_attrs, cfg.d_w, rng);
  p.obj_table = emb.obj_table ? checked_table(*emb.obj_table, cfg.num_objs, "object")
                              : random_embeddings(cfg.num_objs, cfg.d_w, rng);
  if (emb.attr_table && emb.attr_table->cols != cfg.d_w)
    throw ValidationError("attribute embedding table width " +
                          std::to_string(emb.attr_table->cols) + " != d_w " +
                          std::to_string(cfg.d_w));
  if (emb.obj_table && emb.obj_table->cols != cfg.d_w)
    throw ValidationError("object embedding table width " + std::to_string(emb.obj_table->cols) +
                          " != d_w " + std::to_string(cfg.d_w));

  int dx = cfg.d_x;
  int da = cfg.d_attr_space();
  p.omega_a = init_block(dx, da, da, false, rng);
  p.omega_o = init_block(dx, cfg.d_w, cfg.d_w, false, rng);
  p.omega_c = init_block(dx, dx, dx, false, rng);
  if (cfg.has_prior_net()) {
    int in = cfg.variant == Variant::no_x_in_beta ? cfg.d_w : cfg.d_w + dx;
    p.prior_net = init_block(in, dx, dx, true, rng);
  }
  p.compose_net = init_block(2 * cfg.d_w, dx, dx, true, rng);
  if (cfg.has_hyper()) {
    // One modulator generator per base-learner layer; lambda can be negative,
    // so no final ReLU.
    p.hyper1 = init_block(cfg.d_beta(), dx, dx, false, rng);
    p.hyper2 = init_block(cfg.d_beta(), dx, dx, false, rng);
  }
  if (cfg.has_base()) {
    int in = cfg.variant == Variant::no_h ? cfg.d_beta() + cfg.d_w : cfg.d_w;
    p.base = init_block(in, dx, dx, false, rng);
  }
  return p;
}

}  // namespace canet
