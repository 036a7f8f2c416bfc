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

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "canet/dataset.hpp"
#include "canet/errors.hpp"
#include "canet/graph.hpp"
#include "canet/mat.hpp"

namespace canet {

/// Ablation variants, selectable at model-construction time.
enum class Variant {
  full,
  no_attr_obj_losses,  // optimize the composition loss only
  no_comp_loss,        // optimize attribute+object losses only
  no_g_h_p,            // raw attribute word vectors in the attribute head
  no_p,                // beta = cat(v_o*, x) fed straight to the hyper learner
  no_h,                // base learner consumes cat(beta, v_a), no modulation
  no_x_in_beta,        // beta = P(v_o*)
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  int num_attrs = 0;
  int num_objs = 0;
  int d_x = 0;   // image feature dim; also hidden/output width of every block
  int d_w = 0;   // word embedding dim
  double tau = 0.05;
  double alpha = 0.4;
  double dropout_p = 0.3;
  double ln_eps = 1e-5;
  Variant variant = Variant::full;
  bool teacher_forcing = false;    // ground-truth object instead of argmax
  bool train_embeddings = false;

  int d_beta() const { return variant == Variant::no_p ? d_w + d_x : d_x; }
  bool has_prior_net() const { return variant != Variant::no_g_h_p && variant != Variant::no_p; }
  bool has_hyper() const {
    return variant != Variant::no_g_h_p && variant != Variant::no_h;
  }
  bool has_base() const { return variant != Variant::no_g_h_p; }
  // Attribute head compares against raw word vectors when G/H/P are ablated.
  int d_attr_space() const { return variant == Variant::no_g_h_p ? d_w : d_x; }

  void validate() const;
};

/// Two FC layers with ReLU, LayerNorm and Dropout after the first.
template <typename T>
struct MlpParams {
  Mat<T> W1, b1;
  Mat<T> ln_gamma, ln_beta;
  Mat<T> W2, b2;
  bool final_relu = false;
};

template <typename T>
struct ModelParams {
  ModelConfig cfg;
  Mat<T> attr_table;  // |A| x d_w
  Mat<T> obj_table;   // |O| x d_w
  MlpParams<T> omega_a, omega_o, omega_c;
  MlpParams<T> prior_net;        // P, final ReLU
  MlpParams<T> compose_net;      // C, final ReLU
  MlpParams<T> hyper1, hyper2;   // H, one block per target layer of G
  MlpParams<T> base;             // G, layer outputs modulated by lambda

  /// Visits every allocated tensor as (name, mat, trainable), in a fixed
  /// order. Word embeddings are trainable only when cfg.train_embeddings.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("attr_table", attr_table, cfg.train_embeddings);
    f("obj_table", obj_table, cfg.train_embeddings);
    auto block = [&](const std::string& prefix, MlpParams<T>& m) {
      f(prefix + ".W1", m.W1, true);
      f(prefix + ".b1", m.b1, true);
      f(prefix + ".ln_gamma", m.ln_gamma, true);
      f(prefix + ".ln_beta", m.ln_beta, true);
      f(prefix + ".W2", m.W2, true);
      f(prefix + ".b2", m.b2, true);
    };
    block("omega_a", omega_a);
    block("omega_o", omega_o);
    block("omega_c", omega_c);
    if (cfg.has_prior_net()) block("prior_net", prior_net);
    block("compose_net", compose_net);
    if (cfg.has_hyper()) {
      block("hyper1", hyper1);
      block("hyper2", hyper2);
    }
    if (cfg.has_base()) block("base", base);
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.cfg = cfg;
    auto cb = [](const MlpParams<T>& m) {
      MlpParams<U> o;
      o.W1 = m.W1.template cast<U>();
      o.b1 = m.b1.template cast<U>();
      o.ln_gamma = m.ln_gamma.template cast<U>();
      o.ln_beta = m.ln_beta.template cast<U>();
      o.W2 = m.W2.template cast<U>();
      o.b2 = m.b2.template cast<U>();
      o.final_relu = m.final_relu;
      return o;
    };
    out.attr_table = attr_table.template cast<U>();
    out.obj_table = obj_table.template cast<U>();
    out.omega_a = cb(omega_a);
    out.omega_o = cb(omega_o);
    out.omega_c = cb(omega_c);
    out.prior_net = cb(prior_net);
    out.compose_net = cb(compose_net);
    out.hyper1 = cb(hyper1);
    out.hyper2 = cb(hyper2);
    out.base = cb(base);
    return out;
  }
};

/// Optional external word embedding tables for init_params.
struct EmbeddingInit {
  std::optional<Mat<float>> attr_table;
  std::optional<Mat<float>> obj_table;
};

/// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases,
/// LayerNorm gamma=1 beta=0; embedding rows rescaled to unit norm.
/// Deterministic in the seed.
ModelParams<float> init_params(const ModelConfig& cfg, uint64_t seed,
                               const EmbeddingInit& emb = {});

namespace detail {

template <typename T>
struct MlpRefs {
  int W1, b1, ln_gamma, ln_beta, W2, b2;
};

/// Forward-pass bookkeeping for one batch: graph, registered parameter nodes
/// and the score-head outputs.
template <typename T>
struct ForwardPass {
  Graph<T> g;
  std::vector<std::string> param_names;
  std::vector<Mat<T>*> param_tensors;
  std::vector<int> param_refs;
  std::vector<bool> param_trainable;

  int attr_table = -1, obj_table = -1;
  detail::MlpRefs<T> omega_a{}, omega_o{}, omega_c{}, prior_net{}, compose_net{}, hyper1{}, hyper2{},
      base{};

  int obj_scores = -1;   // B x |O|
  int attr_scores = -1;  // B x |A|
  int comp_scores = -1;  // B x |pairs|
  std::vector<int> obj_star;

  bool train_mode = false;
  std::mt19937_64* rng = nullptr;
  T dropout_p = 0;
  T ln_eps = 0;
};

template <typename T>
MlpRefs<T> register_block(ForwardPass<T>& fp, const std::string& prefix, MlpParams<T>& m,
                          bool want_grads) {
  auto reg = [&](const std::string& name, Mat<T>& t, bool trainable) {
    int ref = fp.g.input(t, want_grads && trainable);
    fp.param_names.push_back(name);
    fp.param_tensors.push_back(&t);
    fp.param_refs.push_back(ref);
    fp.param_trainable.push_back(trainable);
    return ref;
  };
  detail::MlpRefs<T> r;
  r.W1 = reg(prefix + ".W1", m.W1, true);
  r.b1 = reg(prefix + ".b1", m.b1, true);
  r.ln_gamma = reg(prefix + ".ln_gamma", m.ln_gamma, true);
  r.ln_beta = reg(prefix + ".ln_beta", m.ln_beta, true);
  r.W2 = reg(prefix + ".W2", m.W2, true);
  r.b2 = reg(prefix + ".b2", m.b2, true);
  return r;
}

/// FC1 -> ReLU -> LayerNorm -> Dropout -> FC2 (-> ReLU iff final_relu).
template <typename T>
int mlp_forward(ForwardPass<T>& fp, const MlpRefs<T>& r, bool final_relu, int x) {
  auto& g = fp.g;
  int h = g.affine(x, r.W1, r.b1);
  h = g.relu(h);
  h = g.layer_norm(h, r.ln_gamma, r.ln_beta, fp.ln_eps);
  h = g.dropout(h, fp.dropout_p, fp.train_mode, fp.rng);
  h = g.affine(h, r.W2, r.b2);
  if (final_relu) h = g.relu(h);
  return h;
}

/// Base learner G with per-layer elementwise modulation: layer i computes
/// (h W + b) * lambda_i, with ReLU/LayerNorm/Dropout between the layers and
/// nothing after the last.
template <typename T>
int base_forward_modulated(ForwardPass<T>& fp, const MlpRefs<T>& r, int x, int lambda1,
                           int lambda2) {
  auto& g = fp.g;
  int h = g.affine(x, r.W1, r.b1);
  if (lambda1 >= 0) h = g.hadamard(h, lambda1);
  h = g.relu(h);
  h = g.layer_norm(h, r.ln_gamma, r.ln_beta, fp.ln_eps);
  h = g.dropout(h, fp.dropout_p, fp.train_mode, fp.rng);
  h = g.affine(h, r.W2, r.b2);
  if (lambda2 >= 0) h = g.hadamard(h, lambda2);
  return h;
}

}  // namespace detail

/// Hook for tests: override the hyper learner's modulators (one Mat per base
/// layer, each B x d_x).
template <typename T>
using LambdaOverride = std::vector<Mat<T>>;

/// Builds the full forward graph for one batch. `pairs` is the candidate
/// composition set for the composition head; empty pairs skip that head.
/// `forced_obj` replaces the argmax object (teacher forcing / ablations).
template <typename T>
detail::ForwardPass<T> build_forward(ModelParams<T>& params, const Mat<T>& features,
                                     const std::vector<Pair>& pairs, bool train_mode,
                                     std::mt19937_64* rng, bool want_grads,
                                     const std::vector<int>* forced_obj = nullptr,
                                     const LambdaOverride<T>* lambda_override = nullptr);

// ---- eval-mode convenience wrappers over build_forward ----

/// Cosine similarities between omega_o(x) and every object word vector.
template <typename T>
Mat<T> object_scores(ModelParams<T>& params, const Mat<T>& features);

/// Per-row argmax; ties break toward the lowest index.
std::vector<int> recognize_object(const Mat<float>& scores);
std::vector<int> recognize_object(const Mat<double>& scores);

/// beta = P(cat(v_o*, x)) (or the variant's beta).
template <typename T>
Mat<T> prior_vector(ModelParams<T>& params, const std::vector<int>& obj_index,
                    const Mat<T>& features);

/// Conditional attribute embeddings, (B*|A|) x d_a; row b*|A|+a belongs to
/// batch row b and attribute a.
template <typename T>
Mat<T> conditional_attribute_embeddings(ModelParams<T>& params, const Mat<T>& beta,
                                        const LambdaOverride<T>* lambda_override = nullptr);

/// Cosine similarities between omega_a(x) and that row's conditional
/// embeddings; cond_embeds as produced by conditional_attribute_embeddings.
template <typename T>
Mat<T> attribute_scores(ModelParams<T>& params, const Mat<T>& features, const Mat<T>& cond_embeds);

/// v_{a,o} = C(cat(v_a, v_o)) per candidate pair, order preserving.
template <typename T>
Mat<T> composition_embeddings(ModelParams<T>& params, const std::vector<Pair>& pairs);

/// Cosine similarities between omega_c(x) and the pair embeddings.
template <typename T>
Mat<T> composition_scores(ModelParams<T>& params, const Mat<T>& features,
                          const Mat<T>& pair_embeds);

// ---- implementation ----

inline void ModelConfig::validate() const {
  if (num_attrs < 1 || num_objs < 1) throw ConfigError("model config: empty vocabulary");
  if (d_x < 1 || d_w < 1) throw ConfigError("model config: d_x and d_w must be positive");
  if (!(tau > 0.0)) throw ConfigError("model config: tau must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("model config: alpha must be in [0,1]");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("model config: dropout_p must be in [0,1)");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_attr_obj_losses: return "no_attr_obj_losses";
    case Variant::no_comp_loss: return "no_comp_loss";
    case Variant::no_g_h_p: return "no_G_H_P";
    case Variant::no_p: return "no_P";
    case Variant::no_h: return "no_H";
    case Variant::no_x_in_beta: return "no_x_in_beta";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::no_attr_obj_losses, Variant::no_comp_loss,
                    Variant::no_g_h_p, Variant::no_p, Variant::no_h, Variant::no_x_in_beta})
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

template <typename T>
detail::ForwardPass<T> build_forward(ModelParams<T>& params, const Mat<T>& features,
                                     const std::vector<Pair>& pairs, bool train_mode,
                                     std::mt19937_64* rng, bool want_grads,
                                     const std::vector<int>* forced_obj,
                                     const LambdaOverride<T>* lambda_override) {
  const ModelConfig& cfg = params.cfg;
  if (features.cols != cfg.d_x)
    throw ShapeError("build_forward: features are " + features.shape_str() + ", expected Bx" +
                     std::to_string(cfg.d_x));
  detail::ForwardPass<T> fp;
  fp.train_mode = train_mode;
  fp.rng = rng;
  fp.dropout_p = T(cfg.dropout_p);
  fp.ln_eps = T(cfg.ln_eps);
  auto& g = fp.g;

  auto reg = [&](const std::string& name, Mat<T>& t, bool trainable) {
    int ref = g.input(t, want_grads && trainable);
    fp.param_names.push_back(name);
    fp.param_tensors.push_back(&t);
    fp.param_refs.push_back(ref);
    fp.param_trainable.push_back(trainable);
    return ref;
  };
  fp.attr_table = reg("attr_table", params.attr_table, cfg.train_embeddings);
  fp.obj_table = reg("obj_table", params.obj_table, cfg.train_embeddings);
  fp.omega_a = detail::register_block(fp, "omega_a", params.omega_a, want_grads);
  fp.omega_o = detail::register_block(fp, "omega_o", params.omega_o, want_grads);
  fp.omega_c = detail::register_block(fp, "omega_c", params.omega_c, want_grads);
  if (cfg.has_prior_net())
    fp.prior_net = detail::register_block(fp, "prior_net", params.prior_net, want_grads);
  fp.compose_net = detail::register_block(fp, "compose_net", params.compose_net, want_grads);
  if (cfg.has_hyper()) {
    fp.hyper1 = detail::register_block(fp, "hyper1", params.hyper1, want_grads);
    fp.hyper2 = detail::register_block(fp, "hyper2", params.hyper2, want_grads);
  }
  if (cfg.has_base()) fp.base = detail::register_block(fp, "base", params.base, want_grads);

  int x = g.input(features, false);
  int B = features.rows;
  int A = cfg.num_attrs;

  // Object head and recognized object. The argmax itself carries no gradient;
  // the selected embedding row still participates in the graph.
  int mapped_o = detail::mlp_forward(fp, fp.omega_o, false, x);
  fp.obj_scores = g.cosine(mapped_o, fp.obj_table);
  if (forced_obj != nullptr) {
    if (int(forced_obj->size()) != B)
      throw ShapeError("build_forward: forced_obj needs one index per batch row");
    fp.obj_star = *forced_obj;
    for (int o : fp.obj_star)
      if (o < 0 || o >= cfg.num_objs)
        throw ValidationError("build_forward: forced object index " + std::to_string(o) +
                              " out of range");
  } else {
    fp.obj_star = recognize_object(g.value(fp.obj_scores));
  }

  // Attribute head.
  int mapped_a = detail::mlp_forward(fp, fp.omega_a, false, x);
  if (cfg.variant == Variant::no_g_h_p) {
    fp.attr_scores = g.cosine(mapped_a, fp.attr_table);
  } else {
    int v_ostar = g.select_rows(fp.obj_table, fp.obj_star);
    int beta;
    if (cfg.variant == Variant::no_p) {
      beta = g.concat_cols(v_ostar, x);
    } else if (cfg.variant == Variant::no_x_in_beta) {
      beta = detail::mlp_forward(fp, fp.prior_net, true, v_ostar);
    } else {
      beta = detail::mlp_forward(fp, fp.prior_net, true, g.concat_cols(v_ostar, x));
    }
    int va_all = g.tile_rows(fp.attr_table, B);  // row b*A + a = v_a
    int embeds;
    if (cfg.variant == Variant::no_h) {
      int beta_rep = g.repeat_rows(beta, A);
      embeds = detail::base_forward_modulated(fp, fp.base, g.concat_cols(beta_rep, va_all), -1, -1);
    } else {
      int l1, l2;
      if (lambda_override != nullptr) {
        if (lambda_override->size() != 2)
          throw ShapeError("lambda override needs exactly two matrices");
        l1 = g.input((*lambda_override)[0], false);
        l2 = g.input((*lambda_override)[1], false);
      } else {
        l1 = detail::mlp_forward(fp, fp.hyper1, false, beta);
        l2 = detail::mlp_forward(fp, fp.hyper2, false, beta);
      }
      embeds = detail::base_forward_modulated(fp, fp.base, va_all, g.repeat_rows(l1, A),
                                              g.repeat_rows(l2, A));
    }
    fp.attr_scores = g.cosine_grouped(mapped_a, embeds);
  }

  // Composition head over the candidate pair set.
  if (!pairs.empty()) {
    std::vector<int> attr_idx, obj_idx;
    for (auto [a, o] : pairs) {
      attr_idx.push_back(a);
      obj_idx.push_back(o);
    }
    int va = g.select_rows(fp.attr_table, attr_idx);
    int vo = g.select_rows(fp.obj_table, obj_idx);
    int pair_embeds = detail::mlp_forward(fp, fp.compose_net, true, g.concat_cols(va, vo));
    int mapped_c = detail::mlp_forward(fp, fp.omega_c, false, x);
    fp.comp_scores = g.cosine(mapped_c, pair_embeds);
  }
  return fp;
}

inline std::vector<int> argmax_rows_impl(const auto& m) {
  std::vector<int> out(size_t(m.rows));
  for (int r = 0; r < m.rows; ++r) {
    int best = 0;
    for (int c = 1; c < m.cols; ++c)
      if (m.at(r, c) > m.at(r, best)) best = c;
    out[size_t(r)] = best;
  }
  return out;
}

inline std::vector<int> recognize_object(const Mat<float>& scores) {
  return argmax_rows_impl(scores);
}
inline std::vector<int> recognize_object(const Mat<double>& scores) {
  return argmax_rows_impl(scores);
}

template <typename T>
Mat<T> object_scores(ModelParams<T>& params, const Mat<T>& features) {
  auto fp = build_forward(params, features, {}, false, nullptr, false);
  return fp.g.value(fp.obj_scores);
}

template <typename T>
Mat<T> prior_vector(ModelParams<T>& params, const std::vector<int>& obj_index,
                    const Mat<T>& features) {
  const ModelConfig& cfg = params.cfg;
  if (int(obj_index.size()) != features.rows)
    throw ShapeError("prior_vector: one object index per batch row required");
  detail::ForwardPass<T> fp;
  fp.train_mode = false;
  fp.dropout_p = T(cfg.dropout_p);
  fp.ln_eps = T(cfg.ln_eps);
  auto& g = fp.g;
  int table = g.input(params.obj_table, false);
  int v_ostar = g.select_rows(table, obj_index);
  int x = g.input(features, false);
  if (cfg.variant == Variant::no_p) {
    return g.value(g.concat_cols(v_ostar, x));
  }
  if (!cfg.has_prior_net()) throw ConfigError("prior_vector: variant has no prior network");
  detail::MlpRefs<T> pr = detail::register_block(fp, "prior_net", params.prior_net, false);
  int beta = cfg.variant == Variant::no_x_in_beta
                 ? detail::mlp_forward(fp, pr, true, v_ostar)
                 : detail::mlp_forward(fp, pr, true, g.concat_cols(v_ostar, x));
  return g.value(beta);
}

template <typename T>
Mat<T> conditional_attribute_embeddings(ModelParams<T>& params, const Mat<T>& beta,
                                        const LambdaOverride<T>* lambda_override) {
  const ModelConfig& cfg = params.cfg;
  if (!cfg.has_base())
    throw ConfigError("conditional_attribute_embeddings: variant has no base learner");
  detail::ForwardPass<T> fp;
  fp.train_mode = false;
  fp.dropout_p = T(cfg.dropout_p);
  fp.ln_eps = T(cfg.ln_eps);
  auto& g = fp.g;
  int A = cfg.num_attrs;
  int B = beta.rows;
  int table = g.input(params.attr_table, false);
  int va_all = g.tile_rows(table, B);
  detail::MlpRefs<T> base = detail::register_block(fp, "base", params.base, false);
  if (cfg.variant == Variant::no_h) {
    int b = g.input(beta, false);
    int out = detail::base_forward_modulated(fp, base, g.concat_cols(g.repeat_rows(b, A), va_all),
                                             -1, -1);
    return g.value(out);
  }
  int l1, l2;
  if (lambda_override != nullptr) {
    if (lambda_override->size() != 2)
      throw ShapeError("lambda override needs exactly two matrices");
    l1 = g.input((*lambda_override)[0], false);
    l2 = g.input((*lambda_override)[1], false);
  } else {
    detail::MlpRefs<T> h1 = detail::register_block(fp, "hyper1", params.hyper1, false);
    detail::MlpRefs<T> h2 = detail::register_block(fp, "hyper2", params.hyper2, false);
    int b = g.input(beta, false);
    l1 = detail::mlp_forward(fp, h1, false, b);
    l2 = detail::mlp_forward(fp, h2, false, b);
  }
  int out = detail::base_forward_modulated(fp, base, va_all, g.repeat_rows(l1, A),
                                           g.repeat_rows(l2, A));
  return g.value(out);
}

template <typename T>
Mat<T> attribute_scores(ModelParams<T>& params, const Mat<T>& features, const Mat<T>& cond_embeds) {
  detail::ForwardPass<T> fp;
  fp.train_mode = false;
  fp.dropout_p = T(params.cfg.dropout_p);
  fp.ln_eps = T(params.cfg.ln_eps);
  auto& g = fp.g;
  detail::MlpRefs<T> wa = detail::register_block(fp, "omega_a", params.omega_a, false);
  int mapped = detail::mlp_forward(fp, wa, false, g.input(features, false));
  return g.value(g.cosine_grouped(mapped, g.input(cond_embeds, false)));
}

template <typename T>
Mat<T> composition_embeddings(ModelParams<T>& params, const std::vector<Pair>& pairs) {
  detail::ForwardPass<T> fp;
  fp.train_mode = false;
  fp.dropout_p = T(params.cfg.dropout_p);
  fp.ln_eps = T(params.cfg.ln_eps);
  auto& g = fp.g;
  std::vector<int> attr_idx, obj_idx;
  for (auto [a, o] : pairs) {
    attr_idx.push_back(a);
    obj_idx.push_back(o);
  }
  int va = g.select_rows(g.input(params.attr_table, false), attr_idx);
  int vo = g.select_rows(g.input(params.obj_table, false), obj_idx);
  detail::MlpRefs<T> c = detail::register_block(fp, "compose_net", params.compose_net, false);
  return g.value(detail::mlp_forward(fp, c, true, g.concat_cols(va, vo)));
}

template <typename T>
Mat<T> composition_scores(ModelParams<T>& params, const Mat<T>& features,
                          const Mat<T>& pair_embeds) {
  detail::ForwardPass<T> fp;
  fp.train_mode = false;
  fp.dropout_p = T(params.cfg.dropout_p);
  fp.ln_eps = T(params.cfg.ln_eps);
  auto& g = fp.g;
  detail::MlpRefs<T> wc = detail::register_block(fp, "omega_c", params.omega_c, false);
  int mapped = detail::mlp_forward(fp, wc, false, g.input(features, false));
  return g.value(g.cosine(mapped, g.input(pair_embeds, false)));
}

}  // namespace canet
