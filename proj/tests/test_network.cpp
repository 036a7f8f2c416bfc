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

#include "canet/model.hpp"

using namespace canet;

namespace {

ModelConfig make_cfg(int A, int O, int d_x, int d_w) {
  ModelConfig c;
  c.num_attrs = A;
  c.num_objs = O;
  c.d_x = d_x;
  c.d_w = d_w;
  c.dropout_p = 0.0;
  return c;
}

Mat<float> random_features(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<float> m(rows, cols);
  for (auto& v : m.data) v = float(n(rng));
  return m;
}

/// Reference eval-mode forward of one two-FC block (dropout is identity).
Mat<float> run_block(const MlpParams<float>& m, const Mat<float>& x, bool final_relu,
                     float ln_eps = 1e-5f) {
  Graph<float> g;
  int h = g.affine(g.input(x), g.input(m.W1), g.input(m.b1));
  h = g.relu(h);
  h = g.layer_norm(h, g.input(m.ln_gamma), g.input(m.ln_beta), ln_eps);
  h = g.affine(h, g.input(m.W2), g.input(m.b2));
  if (final_relu) h = g.relu(h);
  return g.value(h);
}

double cosine_rows(const Mat<float>& a, int ra, const Mat<float>& b, int rb) {
  double dot = 0, na = 0, nb = 0;
  for (int c = 0; c < a.cols; ++c) {
    dot += double(a.at(ra, c)) * double(b.at(rb, c));
    na += double(a.at(ra, c)) * double(a.at(ra, c));
    nb += double(b.at(rb, c)) * double(b.at(rb, c));
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("object_scores equals the naive per-pair cosine loop") {
  auto params = init_params(make_cfg(4, 5, 8, 6), 21);
  Mat<float> x = random_features(3, 8, 99);
  Mat<float> scores = object_scores(params, x);
  Mat<float> mapped = run_block(params.omega_o, x, false);
  REQUIRE(scores.rows == 3);
  REQUIRE(scores.cols == 5);
  for (int b = 0; b < 3; ++b)
    for (int o = 0; o < 5; ++o)
      CHECK(double(scores.at(b, o)) ==
            doctest::Approx(cosine_rows(mapped, b, params.obj_table, o)).epsilon(1e-5));
}

TEST_CASE("degenerate single-object vocabulary") {
  auto params = init_params(make_cfg(3, 1, 8, 6), 2);
  Mat<float> scores = object_scores(params, random_features(2, 8, 3));
  CHECK(scores.cols == 1);
  for (float v : scores.data) {
    CHECK(v <= 1.0f + 1e-6f);
    CHECK(v >= -1.0f - 1e-6f);
  }
}

TEST_CASE("duplicated object embedding rows give identical score columns") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 5);
  for (int c = 0; c < params.obj_table.cols; ++c)
    params.obj_table.at(1, c) = params.obj_table.at(0, c);
  Mat<float> scores = object_scores(params, random_features(3, 8, 4));
  for (int b = 0; b < scores.rows; ++b) CHECK(scores.at(b, 0) == scores.at(b, 1));
}

TEST_CASE("recognize_object argmax, tie-break, permutation consistency") {
  CHECK(recognize_object(Mat<float>(1, 2, {0.2f, 0.9f})) == std::vector<int>{1});
  CHECK(recognize_object(Mat<float>(1, 2, {0.5f, 0.5f})) == std::vector<int>{0});

  Mat<float> s(2, 4, {0.1f, 0.7f, 0.3f, 0.2f, 0.9f, 0.0f, 0.5f, 0.8f});
  std::vector<int> perm = {2, 0, 3, 1};  // new col j = old col perm[j]
  Mat<float> sp(2, 4);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) sp.at(r, c) = s.at(r, perm[size_t(c)]);
  auto orig = recognize_object(s);
  auto permuted = recognize_object(sp);
  for (int r = 0; r < 2; ++r) CHECK(perm[size_t(permuted[size_t(r)])] == orig[size_t(r)]);
}

TEST_CASE("prior_vector purity, shape, and object sensitivity") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 13);
  Mat<float> x = random_features(1, 8, 7);
  Mat<float> two(2, 8);
  for (int c = 0; c < 8; ++c) two.at(0, c) = two.at(1, c) = x.at(0, c);
  Mat<float> beta = prior_vector(params, {2, 2}, two);
  CHECK(beta.rows == 2);
  CHECK(beta.cols == params.cfg.d_beta());
  for (int c = 0; c < beta.cols; ++c) CHECK(beta.at(0, c) == beta.at(1, c));

  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto p = init_params(make_cfg(3, 4, 8, 6), seed);
    Mat<float> b2 = prior_vector(p, {0, 1}, two);
    double max_diff = 0.0;
    for (int c = 0; c < b2.cols; ++c)
      max_diff = std::max(max_diff, std::abs(double(b2.at(0, c)) - double(b2.at(1, c))));
    CHECK(max_diff > 1e-6);
  }

  CHECK_THROWS_AS(prior_vector(params, {0}, two), ShapeError);
}

TEST_CASE("all-ones modulators reduce to the plain base forward") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 31);
  Mat<float> x = random_features(2, 8, 8);
  Mat<float> beta = prior_vector(params, {0, 1}, x);
  int B = beta.rows, A = params.cfg.num_attrs, d = params.cfg.d_x;

  LambdaOverride<float> ones = {Mat<float>(B, d, 1.0f), Mat<float>(B, d, 1.0f)};
  Mat<float> modded = conditional_attribute_embeddings(params, beta, &ones);

  Mat<float> va_all(B * A, params.cfg.d_w);
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < params.cfg.d_w; ++c)
        va_all.at(b * A + a, c) = params.attr_table.at(a, c);
  Mat<float> plain = run_block(params.base, va_all, false);
  REQUIRE(modded.same_shape(plain));
  for (size_t i = 0; i < modded.size(); ++i)
    CHECK(double(modded.data[i]) == doctest::Approx(double(plain.data[i])).epsilon(1e-6));

  // and with identity modulation the output no longer depends on beta
  Mat<float> beta2 = prior_vector(params, {3, 2}, x);
  Mat<float> modded2 = conditional_attribute_embeddings(params, beta2, &ones);
  CHECK(modded.data == modded2.data);
}

TEST_CASE("all-zero modulators absorb the output") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 31);
  Mat<float> beta = prior_vector(params, {0}, random_features(1, 8, 9));
  LambdaOverride<float> zeros = {Mat<float>(1, 8, 0.0f), Mat<float>(1, 8, 0.0f)};
  Mat<float> out = conditional_attribute_embeddings(params, beta, &zeros);
  for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("conditional embeddings depend on the recognized object") {
  Mat<float> x = random_features(2, 8, 10);
  Mat<float> two(2, 8);
  for (int c = 0; c < 8; ++c) two.at(0, c) = two.at(1, c) = x.at(0, c);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto params = init_params(make_cfg(3, 4, 8, 6), seed);
    Mat<float> beta = prior_vector(params, {0, 1}, two);
    Mat<float> e = conditional_attribute_embeddings(params, beta);
    int A = params.cfg.num_attrs;
    double max_diff = 0.0;
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < e.cols; ++c)
        max_diff = std::max(max_diff, std::abs(double(e.at(a, c)) - double(e.at(A + a, c))));
    CHECK(max_diff > 1e-6);
  }
}

TEST_CASE("lambda override requires exactly two matrices") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 1);
  Mat<float> beta = prior_vector(params, {0}, random_features(1, 8, 2));
  LambdaOverride<float> one = {Mat<float>(1, 8, 1.0f)};
  CHECK_THROWS_AS(conditional_attribute_embeddings(params, beta, &one), ShapeError);
}

TEST_CASE("composition embeddings: order, duplication, permutation") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 77);
  Mat<float> single = composition_embeddings(params, {{1, 2}});
  CHECK(single.rows == 1);
  CHECK(single.cols == params.cfg.d_x);

  Mat<float> twice = composition_embeddings(params, {{1, 2}, {1, 2}});
  for (int c = 0; c < twice.cols; ++c) CHECK(twice.at(0, c) == twice.at(1, c));

  std::vector<Pair> pairs = {{0, 0}, {1, 2}, {2, 3}, {0, 1}};
  std::vector<Pair> rev(pairs.rbegin(), pairs.rend());
  Mat<float> fwd = composition_embeddings(params, pairs);
  Mat<float> bwd = composition_embeddings(params, rev);
  for (size_t k = 0; k < pairs.size(); ++k)
    for (int c = 0; c < fwd.cols; ++c)
      CHECK(fwd.at(int(k), c) == bwd.at(int(pairs.size() - 1 - k), c));
}

TEST_CASE("composition scores match the naive loop and stay in range") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 42);
  std::vector<Pair> pairs = {{0, 0}, {1, 1}, {2, 3}};
  Mat<float> embeds = composition_embeddings(params, pairs);
  Mat<float> x = random_features(4, 8, 12);
  Mat<float> scores = composition_scores(params, x, embeds);
  Mat<float> mapped = run_block(params.omega_c, x, false);
  for (int b = 0; b < 4; ++b)
    for (size_t k = 0; k < pairs.size(); ++k)
      CHECK(double(scores.at(b, int(k))) ==
            doctest::Approx(cosine_rows(mapped, b, embeds, int(k))).epsilon(1e-5));

  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto p = init_params(make_cfg(3, 4, 32, 32), seed);
    Mat<float> e = composition_embeddings(p, pairs);
    Mat<float> s = composition_scores(p, random_features(25, 32, seed + 100), e);
    for (float v : s.data) {
      CHECK(v <= 1.0f + 1e-6f);
      CHECK(v >= -1.0f - 1e-6f);
    }
  }
}

TEST_CASE("attribute_scores matches grouped cosine against embeddings") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 55);
  Mat<float> x = random_features(2, 8, 6);
  Mat<float> beta = prior_vector(params, {0, 3}, x);
  Mat<float> embeds = conditional_attribute_embeddings(params, beta);
  Mat<float> scores = attribute_scores(params, x, embeds);
  Mat<float> mapped = run_block(params.omega_a, x, false);
  int A = params.cfg.num_attrs;
  REQUIRE(scores.rows == 2);
  REQUIRE(scores.cols == A);
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < A; ++a)
      CHECK(double(scores.at(b, a)) ==
            doctest::Approx(cosine_rows(mapped, b, embeds, b * A + a)).epsilon(1e-5));
}

TEST_CASE("init_params: determinism, fan-in bound, loaded embeddings") {
  ModelConfig cfg = make_cfg(4, 5, 8, 6);
  auto a = init_params(cfg, 123);
  auto b = init_params(cfg, 123);
  bool equal = true;
  a.for_each_tensor([&](const std::string& name, Mat<float>& t, bool) {
    b.for_each_tensor([&](const std::string& name2, Mat<float>& t2, bool) {
      if (name == name2) equal = equal && t.data == t2.data;
    });
  });
  CHECK(equal);

  auto bound_ok = [](const Mat<float>& W) {
    float bound = 1.0f / std::sqrt(float(W.rows)) + 1e-7f;
    for (float v : W.data)
      if (std::abs(v) > bound) return false;
    return true;
  };
  for (const Mat<float>* W : {&a.omega_a.W1, &a.omega_a.W2, &a.prior_net.W1, &a.base.W2,
                              &a.hyper1.W1, &a.compose_net.W2})
    CHECK(bound_ok(*W));
  for (float v : a.omega_o.b1.data) CHECK(v == 0.0f);
  for (float v : a.omega_o.ln_gamma.data) CHECK(v == 1.0f);
  for (float v : a.omega_o.ln_beta.data) CHECK(v == 0.0f);
  for (int r = 0; r < a.attr_table.rows; ++r) {
    double n = 0;
    for (int c = 0; c < a.attr_table.cols; ++c)
      n += double(a.attr_table.at(r, c)) * double(a.attr_table.at(r, c));
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }

  EmbeddingInit emb;
  emb.attr_table = random_features(4, 6, 9);
  auto c = init_params(cfg, 123, emb);
  CHECK(c.attr_table.data == emb.attr_table->data);

  EmbeddingInit bad;
  bad.attr_table = random_features(3, 6, 9);  // wrong row count
  CHECK_THROWS_AS(init_params(cfg, 1, bad), ValidationError);
  EmbeddingInit zero;
  zero.obj_table = Mat<float>(5, 6);
  CHECK_THROWS_AS(init_params(cfg, 1, zero), ValidationError);
}

TEST_CASE("full forward is finite across 100 seeds") {
  std::vector<Pair> pairs = {{0, 0}, {1, 1}, {2, 2}, {0, 2}};
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto params = init_params(make_cfg(3, 3, 32, 32), seed);
    Mat<float> x = random_features(2, 32, seed * 31 + 7);
    auto fp = build_forward(params, x, pairs, false, nullptr, false);
    CHECK(fp.g.value(fp.obj_scores).all_finite());
    CHECK(fp.g.value(fp.attr_scores).all_finite());
    CHECK(fp.g.value(fp.comp_scores).all_finite());
  }
}

TEST_CASE("eval-mode forward is bitwise deterministic") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 8);
  params.cfg.dropout_p = 0.3;  // must be ignored in eval mode
  Mat<float> x = random_features(3, 8, 5);
  std::vector<Pair> pairs = {{0, 0}, {1, 1}};
  auto fp1 = build_forward(params, x, pairs, false, nullptr, false);
  auto fp2 = build_forward(params, x, pairs, false, nullptr, false);
  CHECK(fp1.g.value(fp1.attr_scores).data == fp2.g.value(fp2.attr_scores).data);
  CHECK(fp1.g.value(fp1.obj_scores).data == fp2.g.value(fp2.obj_scores).data);
  CHECK(fp1.g.value(fp1.comp_scores).data == fp2.g.value(fp2.comp_scores).data);
}

TEST_CASE("permuting attribute table rows permutes attribute score columns") {
  auto params = init_params(make_cfg(4, 3, 8, 6), 66);
  Mat<float> x = random_features(2, 8, 14);
  std::vector<int> perm = {2, 0, 3, 1};  // new row j = old row perm[j]
  auto permuted = params;
  for (int j = 0; j < 4; ++j)
    for (int c = 0; c < params.attr_table.cols; ++c)
      permuted.attr_table.at(j, c) = params.attr_table.at(perm[size_t(j)], c);

  auto fp1 = build_forward(params, x, {}, false, nullptr, false);
  auto fp2 = build_forward(permuted, x, {}, false, nullptr, false);
  const auto& s1 = fp1.g.value(fp1.attr_scores);
  const auto& s2 = fp2.g.value(fp2.attr_scores);
  for (int b = 0; b < 2; ++b)
    for (int j = 0; j < 4; ++j) CHECK(s2.at(b, j) == s1.at(b, perm[size_t(j)]));
}

TEST_CASE("positive rescaling of the object table leaves scores unchanged") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 19);
  Mat<float> x = random_features(3, 8, 20);
  Mat<float> base = object_scores(params, x);
  auto scaled = params;
  for (auto& v : scaled.obj_table.data) v *= 7.5f;
  Mat<float> after = object_scores(scaled, x);
  for (size_t i = 0; i < base.size(); ++i)
    CHECK(double(base.data[i]) == doctest::Approx(double(after.data[i])).epsilon(1e-6));
}

TEST_CASE("variant names round-trip and unknown names are rejected") {
  for (Variant v : {Variant::full, Variant::no_attr_obj_losses, Variant::no_comp_loss,
                    Variant::no_g_h_p, Variant::no_p, Variant::no_h, Variant::no_x_in_beta})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_WITH_AS(parse_variant("no_such"), doctest::Contains("no_such"), ConfigError);
}

TEST_CASE("variant forward shapes: every ablation produces all three heads") {
  std::vector<Pair> pairs = {{0, 0}, {1, 1}, {2, 2}};
  for (Variant v : {Variant::full, Variant::no_attr_obj_losses, Variant::no_comp_loss,
                    Variant::no_g_h_p, Variant::no_p, Variant::no_h, Variant::no_x_in_beta}) {
    ModelConfig cfg = make_cfg(3, 3, 6, 5);
    cfg.variant = v;
    auto params = init_params(cfg, 3);
    Mat<float> x = random_features(2, 6, 11);
    auto fp = build_forward(params, x, pairs, false, nullptr, false);
    CHECK(fp.g.value(fp.attr_scores).cols == 3);
    CHECK(fp.g.value(fp.obj_scores).cols == 3);
    CHECK(fp.g.value(fp.comp_scores).cols == 3);
    CHECK(fp.g.value(fp.attr_scores).all_finite());
  }
}

TEST_CASE("teacher forcing pins the recognized object") {
  auto params = init_params(make_cfg(3, 4, 8, 6), 9);
  Mat<float> x = random_features(2, 8, 44);
  std::vector<int> forced = {3, 1};
  auto fp = build_forward(params, x, {}, false, nullptr, false, &forced);
  CHECK(fp.obj_star == forced);
  std::vector<int> bad = {4, 0};
  CHECK_THROWS_AS(build_forward(params, x, {}, false, nullptr, false, &bad), ValidationError);
}
