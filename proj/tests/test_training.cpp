/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include <cmath>
#include <random>

#include <doctest.h>

#include "canet/gradcheck_driver.hpp"
#include "canet/training.hpp"

using namespace canet;

namespace {

ModelConfig tiny_cfg(Variant v = Variant::full) {
  ModelConfig c;
  c.num_attrs = 3;
  c.num_objs = 3;
  c.d_x = 32;
  c.d_w = 32;
  c.tau = 0.1;
  c.dropout_p = 0.0;
  c.variant = v;
  return c;
}

struct TinyBatch {
  Mat<float> x;
  std::vector<int> attr_t, obj_t, comp_t;
  std::vector<Pair> candidates = {{0, 0}, {1, 1}, {2, 2}, {0, 2}};
};

TinyBatch tiny_batch(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  TinyBatch b;
  b.x = Mat<float>(4, 32);
  for (auto& v : b.x.data) v = float(n(rng));
  for (int i = 0; i < 4; ++i) {
    int c = int(rng() % b.candidates.size());
    b.comp_t.push_back(c);
    b.attr_t.push_back(b.candidates[size_t(c)].first);
    b.obj_t.push_back(b.candidates[size_t(c)].second);
  }
  return b;
}

SyntheticSpec train_spec() {
  SyntheticSpec s;
  s.num_attrs = 4;
  s.num_objs = 4;
  s.d_x = 32;
  s.noise_sigma = 0.05;
  s.unseen_fraction = 0.25;
  s.samples_per_pair = 8;
  s.seed = 3;
  return s;
}

TrainConfig quick_train_cfg() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 1e-5;
  cfg.batch_size = 32;
  cfg.max_epochs = 25;
  cfg.tau = 0.05;
  cfg.dropout_p = 0.1;
  cfg.d_w = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("combined loss follows (L_a + L_o)/2 + L_ao") {
  CHECK((2.0 + 4.0) / 2.0 + 1.0 == 4.0);  // the arithmetic of the combination
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto params = init_params(tiny_cfg(), seed);
    TinyBatch b = tiny_batch(seed + 1000);
    BatchLosses l = batch_losses(params, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false,
                                 nullptr, nullptr);
    CHECK(l.total == doctest::Approx((l.attr + l.obj) / 2.0 + l.comp).epsilon(1e-6));
  }
}

TEST_CASE("uniform scores over equal-sized heads give 2 ln 4") {
  // the loss combination evaluated at three uniform cross-entropies
  Graph<float> g;
  int sa = g.input(Mat<float>(2, 4, 0.3f));
  int so = g.input(Mat<float>(2, 4, 0.3f));
  int sc = g.input(Mat<float>(2, 4, 0.3f));
  int la = g.cross_entropy(sa, {0, 1}, 0.5f);
  int lo = g.cross_entropy(so, {2, 3}, 0.5f);
  int lao = g.cross_entropy(sc, {1, 2}, 0.5f);
  int total = g.add(g.scale(g.add(la, lo), 0.5f), lao);
  CHECK(double(g.value(total).at(0, 0)) == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-5));
}

TEST_CASE("variant flags bypass loss terms but still report them") {
  auto full = init_params(tiny_cfg(), 4);
  TinyBatch b = tiny_batch(9);
  BatchLosses lf = batch_losses(full, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false,
                                nullptr, nullptr);
  auto no_ao = init_params(tiny_cfg(Variant::no_attr_obj_losses), 4);
  BatchLosses l1 = batch_losses(no_ao, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false,
                                nullptr, nullptr);
  CHECK(l1.total == doctest::Approx(l1.comp));
  CHECK(l1.attr > 0.0);
  auto no_c = init_params(tiny_cfg(Variant::no_comp_loss), 4);
  BatchLosses l2 = batch_losses(no_c, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false,
                                nullptr, nullptr);
  CHECK(l2.total == doctest::Approx((l2.attr + l2.obj) / 2.0));
  CHECK(l2.comp > 0.0);
  CHECK(lf.total == doctest::Approx((lf.attr + lf.obj) / 2.0 + lf.comp).epsilon(1e-6));
}

TEST_CASE("no_comp_loss sends zero gradient into the composition-only tensors") {
  auto params = init_params(tiny_cfg(Variant::no_comp_loss), 4);
  TinyBatch b = tiny_batch(10);
  std::vector<Mat<float>> grads;
  std::vector<std::string> names;
  batch_losses(params, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false, nullptr, &grads,
               &names);
  bool saw_comp = false, comp_zero = true, saw_attr = false, attr_nonzero = false;
  for (size_t i = 0; i < names.size(); ++i) {
    bool comp_only = names[i].rfind("omega_c", 0) == 0 || names[i].rfind("compose_net", 0) == 0;
    if (comp_only) {
      saw_comp = true;
      for (float v : grads[i].data) comp_zero = comp_zero && v == 0.0f;
    }
    if (names[i].rfind("omega_a", 0) == 0) {
      saw_attr = true;
      for (float v : grads[i].data) attr_nonzero = attr_nonzero || v != 0.0f;
    }
  }
  CHECK(saw_comp);
  CHECK(comp_zero);
  CHECK(saw_attr);
  CHECK(attr_nonzero);
}

TEST_CASE("full objective passes the finite-difference check") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    auto rep = full_loss_gradcheck(seed);
    INFO("seed ", seed, " worst ", rep.worst_coord);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("a corrupted backward pass is caught by the checker") {
  auto rep = full_loss_gradcheck(0, 1e-5, Variant::full, /*corrupt=*/true);
  CHECK(rep.max_rel_err >= 1e-4);
}

TEST_CASE("cross-entropy terms respect the cosine-bounded loss window") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto params = init_params(tiny_cfg(), seed);
    TinyBatch b = tiny_batch(seed);
    BatchLosses l = batch_losses(params, b.x, b.attr_t, b.obj_t, b.comp_t, b.candidates, false,
                                 nullptr, nullptr);
    double tau = params.cfg.tau;
    CHECK(l.attr >= 0.0);
    CHECK(l.obj >= 0.0);
    CHECK(l.comp >= 0.0);
    CHECK(l.attr <= std::log(3.0) + 2.0 / tau);
    CHECK(l.obj <= std::log(3.0) + 2.0 / tau);
    CHECK(l.comp <= std::log(4.0) + 2.0 / tau);
  }
}

TEST_CASE("empty batch or candidate set is a configuration error") {
  auto params = init_params(tiny_cfg(), 1);
  TinyBatch b = tiny_batch(1);
  CHECK_THROWS_AS(batch_losses(params, Mat<float>(0, 32), {}, {}, {}, b.candidates, false, nullptr,
                               nullptr),
                  ConfigError);
  CHECK_THROWS_AS(
      batch_losses(params, b.x, b.attr_t, b.obj_t, b.comp_t, {}, false, nullptr, nullptr),
      ConfigError);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  auto state = TrainState::fresh(init_params(tiny_cfg(), 7), 7);
  auto before = state.params;
  std::vector<Mat<float>> grads;
  for (const auto& m : state.m1) grads.push_back(Mat<float>::zeros_like(m));
  adam_step(state, grads, 1e-3, 0.0);
  bool unchanged = true;
  size_t idx = 0;
  state.params.for_each_tensor([&](const std::string& name, Mat<float>& t, bool) {
    before.for_each_tensor([&](const std::string& name2, Mat<float>& t2, bool) {
      if (name == name2) unchanged = unchanged && t.data == t2.data;
    });
    (void)idx;
  });
  CHECK(unchanged);
  CHECK(state.step == 1);
}

TEST_CASE("adam single step from zero moments matches the closed form") {
  auto state = TrainState::fresh(init_params(tiny_cfg(), 7), 7);
  auto before = state.params;
  const double g = 0.5, lr = 1e-3;
  std::vector<Mat<float>> grads;
  for (const auto& m : state.m1) grads.push_back(Mat<float>(m.rows, m.cols, float(g)));
  adam_step(state, grads, lr, 0.0);
  // theta' = theta - lr * g / (|g| + eps / sqrt(1 - beta2))
  double expected_delta = -lr * g / (g + 1e-8 / std::sqrt(1.0 - 0.999));
  double w_before = double(before.omega_a.W1.at(0, 0));
  double w_after = double(state.params.omega_a.W1.at(0, 0));
  CHECK(w_after - w_before == doctest::Approx(expected_delta).epsilon(1e-4));
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
  auto s1 = TrainState::fresh(init_params(tiny_cfg(), 3), 3);
  auto s2 = TrainState::fresh(init_params(tiny_cfg(), 3), 3);
  std::vector<Mat<float>> grads;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const auto& m : s1.m1) {
    Mat<float> gm(m.rows, m.cols);
    for (auto& v : gm.data) v = float(n(rng));
    grads.push_back(gm);
  }
  adam_step(s1, grads, 1e-3, 1e-4);
  adam_step(s2, grads, 1e-3, 1e-4);
  CHECK(s1.params.omega_a.W1.data == s2.params.omega_a.W1.data);
  CHECK(s1.m2[0].data == s2.m2[0].data);

  grads[0].data[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(s1, grads, 1e-3, 0.0), NumericError);
}

TEST_CASE("training reduces the loss on synthetic data") {
  Dataset ds = generate_synthetic(train_spec());
  TrainConfig cfg = quick_train_cfg();
  std::vector<EpochLog> logs;
  train(cfg, ds, [&](const EpochLog& e) { logs.push_back(e); });
  REQUIRE(!logs.empty());
  CHECK(logs.back().mean.total < logs.front().mean.total);
}

TEST_CASE("identical seeds give identical loss logs and parameters") {
  Dataset ds = generate_synthetic(train_spec());
  TrainConfig cfg = quick_train_cfg();
  cfg.max_epochs = 6;
  std::vector<EpochLog> l1, l2;
  TrainState a = train(cfg, ds, [&](const EpochLog& e) { l1.push_back(e); });
  TrainState b = train(cfg, ds, [&](const EpochLog& e) { l2.push_back(e); });
  REQUIRE(l1.size() == l2.size());
  for (size_t i = 0; i < l1.size(); ++i) {
    CHECK(l1[i].mean.total == l2[i].mean.total);
    CHECK(l1[i].val_auc == l2[i].val_auc);
  }
  CHECK(a.params.omega_a.W1.data == b.params.omega_a.W1.data);
  CHECK(a.params.base.W2.data == b.params.base.W2.data);
}

TEST_CASE("patience stops a stalled run early") {
  Dataset ds = generate_synthetic(train_spec());
  TrainConfig cfg = quick_train_cfg();
  cfg.learning_rate = 1e-12;  // effectively frozen, so val AUC never improves
  cfg.max_epochs = 50;
  cfg.patience = 3;
  TrainState st = train(cfg, ds);
  CHECK(st.epoch < cfg.max_epochs);
  CHECK(st.epoch <= cfg.patience + 2);
}

TEST_CASE("train config validation rejects bad values") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.tau = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
