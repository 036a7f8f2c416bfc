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

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "canet/errors.hpp"
#include "canet/mat.hpp"

namespace canet {

/// Reverse-mode tape over dense matrices. Nodes are appended in construction
/// order, which is already a topological order, so backward() is a single
/// reverse sweep. One graph per forward pass; graphs are not reused.
template <typename T>
class Graph {
 public:
  using Ref = int;

  Ref input(Mat<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  const Mat<T>& value(Ref id) const { return nodes_[id].value; }
  const Mat<T>& grad(Ref id) const { return nodes_[id].grad; }
  bool requires_grad(Ref id) const { return nodes_[id].requires_grad; }

  /// y = xW + b, bias broadcast over rows.
  Ref affine(Ref x, Ref W, Ref b) {
    const Mat<T>& xv = nodes_[x].value;
    const Mat<T>& wv = nodes_[W].value;
    const Mat<T>& bv = nodes_[b].value;
    if (xv.cols != wv.rows)
      throw ShapeError("affine: x " + xv.shape_str() + " incompatible with W " + wv.shape_str());
    if (bv.rows != 1 || bv.cols != wv.cols)
      throw ShapeError("affine: bias " + bv.shape_str() + " incompatible with W " + wv.shape_str());
    Mat<T> y(xv.rows, wv.cols);
    for (int r = 0; r < xv.rows; ++r) {
      for (int k = 0; k < xv.cols; ++k) {
        T xv_rk = xv.at(r, k);
        if (xv_rk == T(0)) continue;
        for (int c = 0; c < wv.cols; ++c) y.at(r, c) += xv_rk * wv.at(k, c);
      }
      for (int c = 0; c < wv.cols; ++c) y.at(r, c) += bv.at(0, c);
    }
    return push(std::move(y), any_grad({x, W, b}), [x, W, b](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      const Mat<T>& xv = g.nodes_[x].value;
      const Mat<T>& wv = g.nodes_[W].value;
      if (g.requires_grad(x)) {
        Mat<T>& gx = g.nodes_[x].grad;
        for (int r = 0; r < xv.rows; ++r)
          for (int k = 0; k < xv.cols; ++k) {
            T s = 0;
            for (int c = 0; c < wv.cols; ++c) s += go.at(r, c) * wv.at(k, c);
            gx.at(r, k) += s;
          }
      }
      if (g.requires_grad(W)) {
        Mat<T>& gw = g.nodes_[W].grad;
        for (int k = 0; k < wv.rows; ++k)
          for (int r = 0; r < xv.rows; ++r) {
            T xv_rk = xv.at(r, k);
            if (xv_rk == T(0)) continue;
            for (int c = 0; c < wv.cols; ++c) gw.at(k, c) += xv_rk * go.at(r, c);
          }
      }
      if (g.requires_grad(b)) {
        Mat<T>& gb = g.nodes_[b].grad;
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < go.cols; ++c) gb.at(0, c) += go.at(r, c);
      }
    });
  }

  /// Elementwise max(0, x); subgradient at 0 is 0.
  Ref relu(Ref x) {
    Mat<T> y = nodes_[x].value;
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return push(std::move(y), any_grad({x}), [x](Graph& g, Ref out) {
      if (!g.requires_grad(x)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      const Mat<T>& xv = g.nodes_[x].value;
      Mat<T>& gx = g.nodes_[x].grad;
      for (size_t i = 0; i < xv.size(); ++i)
        if (xv.data[i] > T(0)) gx.data[i] += go.data[i];
    });
  }

  /// Per-row normalization over the feature axis, biased variance estimate.
  Ref layer_norm(Ref x, Ref gamma, Ref beta, T eps) {
    const Mat<T>& xv = nodes_[x].value;
    const Mat<T>& gv = nodes_[gamma].value;
    const Mat<T>& bv = nodes_[beta].value;
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
      throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(xv.cols));
    int n = xv.cols;
    Mat<T> xhat(xv.rows, n);
    Mat<T> inv_sigma(xv.rows, 1);
    for (int r = 0; r < xv.rows; ++r) {
      T mean = 0;
      for (int c = 0; c < n; ++c) mean += xv.at(r, c);
      mean /= T(n);
      T var = 0;
      for (int c = 0; c < n; ++c) {
        T d = xv.at(r, c) - mean;
        var += d * d;
      }
      var /= T(n);
      T is = T(1) / std::sqrt(var + eps);
      inv_sigma.at(r, 0) = is;
      for (int c = 0; c < n; ++c) xhat.at(r, c) = (xv.at(r, c) - mean) * is;
    }
    Mat<T> y(xv.rows, n);
    for (int r = 0; r < xv.rows; ++r)
      for (int c = 0; c < n; ++c) y.at(r, c) = gv.at(0, c) * xhat.at(r, c) + bv.at(0, c);
    return push(std::move(y), any_grad({x, gamma, beta}),
                [x, gamma, beta, xhat, inv_sigma](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      const Mat<T>& gv = g.nodes_[gamma].value;
      int n = xhat.cols;
      if (g.requires_grad(gamma)) {
        Mat<T>& gg = g.nodes_[gamma].grad;
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < n; ++c) gg.at(0, c) += go.at(r, c) * xhat.at(r, c);
      }
      if (g.requires_grad(beta)) {
        Mat<T>& gb = g.nodes_[beta].grad;
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < n; ++c) gb.at(0, c) += go.at(r, c);
      }
      if (g.requires_grad(x)) {
        Mat<T>& gx = g.nodes_[x].grad;
        for (int r = 0; r < go.rows; ++r) {
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (int c = 0; c < n; ++c) {
            T dxh = go.at(r, c) * gv.at(0, c);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat.at(r, c);
          }
          mean_dxhat /= T(n);
          mean_dxhat_xhat /= T(n);
          T is = inv_sigma.at(r, 0);
          for (int c = 0; c < n; ++c) {
            T dxh = go.at(r, c) * gv.at(0, c);
            gx.at(r, c) += is * (dxh - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat);
          }
        }
      }
    });
  }

  /// Inverted dropout: train mode zeroes entries with probability p and scales
  /// survivors by 1/(1-p); eval mode is the identity.
  Ref dropout(Ref x, T p, bool train, std::mt19937_64* rng) {
    if (!(p >= T(0) && p < T(1))) throw ConfigError("dropout: p must satisfy 0 <= p < 1");
    if (!train || p == T(0)) {
      Mat<T> y = nodes_[x].value;
      return push(std::move(y), any_grad({x}), [x](Graph& g, Ref out) {
        if (!g.requires_grad(x)) return;
        const Mat<T>& go = g.nodes_[out].grad;
        Mat<T>& gx = g.nodes_[x].grad;
        for (size_t i = 0; i < go.size(); ++i) gx.data[i] += go.data[i];
      });
    }
    if (rng == nullptr) throw ConfigError("dropout: train mode needs an rng");
    const Mat<T>& xv = nodes_[x].value;
    Mat<T> mask(xv.rows, xv.cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    T keep_scale = T(1) / (T(1) - p);
    for (size_t i = 0; i < mask.size(); ++i)
      mask.data[i] = u(*rng) < double(p) ? T(0) : keep_scale;
    Mat<T> y(xv.rows, xv.cols);
    for (size_t i = 0; i < y.size(); ++i) y.data[i] = xv.data[i] * mask.data[i];
    return push(std::move(y), any_grad({x}), [x, mask](Graph& g, Ref out) {
      if (!g.requires_grad(x)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      Mat<T>& gx = g.nodes_[x].grad;
      for (size_t i = 0; i < go.size(); ++i) gx.data[i] += go.data[i] * mask.data[i];
    });
  }

  /// Column-wise concatenation of equally tall blocks.
  Ref concat_cols(Ref a, Ref b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    if (av.rows != bv.rows)
      throw ShapeError("concat_cols: row mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Mat<T> y(av.rows, av.cols + bv.cols);
    for (int r = 0; r < av.rows; ++r) {
      for (int c = 0; c < av.cols; ++c) y.at(r, c) = av.at(r, c);
      for (int c = 0; c < bv.cols; ++c) y.at(r, av.cols + c) = bv.at(r, c);
    }
    int na = av.cols;
    return push(std::move(y), any_grad({a, b}), [a, b, na](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      if (g.requires_grad(a)) {
        Mat<T>& ga = g.nodes_[a].grad;
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < na; ++c) ga.at(r, c) += go.at(r, c);
      }
      if (g.requires_grad(b)) {
        Mat<T>& gb = g.nodes_[b].grad;
        for (int r = 0; r < go.rows; ++r)
          for (int c = na; c < go.cols; ++c) gb.at(r, c - na) += go.at(r, c);
      }
    });
  }

  Ref add(Ref a, Ref b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    require_same_shape(av, bv, "add");
    Mat<T> y(av.rows, av.cols);
    for (size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    return push(std::move(y), any_grad({a, b}), [a, b](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      for (Ref id : {a, b}) {
        if (!g.requires_grad(id)) continue;
        Mat<T>& gi = g.nodes_[id].grad;
        for (size_t i = 0; i < go.size(); ++i) gi.data[i] += go.data[i];
      }
    });
  }

  Ref scale(Ref a, T c) {
    Mat<T> y = nodes_[a].value;
    for (T& v : y.data) v *= c;
    return push(std::move(y), any_grad({a}), [a, c](Graph& g, Ref out) {
      if (!g.requires_grad(a)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      Mat<T>& ga = g.nodes_[a].grad;
      for (size_t i = 0; i < go.size(); ++i) ga.data[i] += c * go.data[i];
    });
  }

  /// Elementwise product (the modulation primitive).
  Ref hadamard(Ref a, Ref b) {
    const Mat<T>& av = nodes_[a].value;
    const Mat<T>& bv = nodes_[b].value;
    require_same_shape(av, bv, "hadamard");
    Mat<T> y(av.rows, av.cols);
    for (size_t i = 0; i < y.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
    return push(std::move(y), any_grad({a, b}), [a, b](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      const Mat<T>& av = g.nodes_[a].value;
      const Mat<T>& bv = g.nodes_[b].value;
      if (g.requires_grad(a)) {
        Mat<T>& ga = g.nodes_[a].grad;
        for (size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] * bv.data[i];
      }
      if (g.requires_grad(b)) {
        Mat<T>& gb = g.nodes_[b].grad;
        for (size_t i = 0; i < go.size(); ++i) gb.data[i] += go.data[i] * av.data[i];
      }
    });
  }

  /// Gathers rows of a table; gradient scatter-adds back (duplicates sum).
  Ref select_rows(Ref table, std::vector<int> rows) {
    const Mat<T>& tv = nodes_[table].value;
    for (int r : rows)
      if (r < 0 || r >= tv.rows)
        throw ValidationError("select_rows: index " + std::to_string(r) + " out of range [0," +
                              std::to_string(tv.rows) + ")");
    Mat<T> y(int(rows.size()), tv.cols);
    for (size_t i = 0; i < rows.size(); ++i)
      for (int c = 0; c < tv.cols; ++c) y.at(int(i), c) = tv.at(rows[i], c);
    return push(std::move(y), any_grad({table}), [table, rows](Graph& g, Ref out) {
      if (!g.requires_grad(table)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      Mat<T>& gt = g.nodes_[table].grad;
      for (size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < go.cols; ++c) gt.at(rows[i], c) += go.at(int(i), c);
    });
  }

  /// Stacks the whole block `times` times: out row t*R + r = in row r.
  Ref tile_rows(Ref x, int times) {
    const Mat<T>& xv = nodes_[x].value;
    Mat<T> y(xv.rows * times, xv.cols);
    for (int t = 0; t < times; ++t)
      for (int r = 0; r < xv.rows; ++r)
        for (int c = 0; c < xv.cols; ++c) y.at(t * xv.rows + r, c) = xv.at(r, c);
    int R = xv.rows;
    return push(std::move(y), any_grad({x}), [x, times, R](Graph& g, Ref out) {
      if (!g.requires_grad(x)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      Mat<T>& gx = g.nodes_[x].grad;
      for (int t = 0; t < times; ++t)
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < go.cols; ++c) gx.at(r, c) += go.at(t * R + r, c);
    });
  }

  /// Repeats each row `times` consecutive times: out row r*times + t = in row r.
  Ref repeat_rows(Ref x, int times) {
    const Mat<T>& xv = nodes_[x].value;
    Mat<T> y(xv.rows * times, xv.cols);
    for (int r = 0; r < xv.rows; ++r)
      for (int t = 0; t < times; ++t)
        for (int c = 0; c < xv.cols; ++c) y.at(r * times + t, c) = xv.at(r, c);
    return push(std::move(y), any_grad({x}), [x, times](Graph& g, Ref out) {
      if (!g.requires_grad(x)) return;
      const Mat<T>& go = g.nodes_[out].grad;
      Mat<T>& gx = g.nodes_[x].grad;
      for (int r = 0; r < gx.rows; ++r)
        for (int t = 0; t < times; ++t)
          for (int c = 0; c < go.cols; ++c) gx.at(r, c) += go.at(r * times + t, c);
    });
  }

  /// 1x1 sum of all entries.
  Ref sum(Ref x) {
    const Mat<T>& xv = nodes_[x].value;
    Mat<T> y(1, 1);
    for (T v : xv.data) y.at(0, 0) += v;
    return push(std::move(y), any_grad({x}), [x](Graph& g, Ref out) {
      if (!g.requires_grad(x)) return;
      T go = g.nodes_[out].grad.at(0, 0);
      Mat<T>& gx = g.nodes_[x].grad;
      for (T& v : gx.data) v += go;
    });
  }

  /// out[b,k] = <u_b, V_k> / (|u_b| |V_k|); V shared across the batch.
  Ref cosine(Ref u, Ref V) { return cosine_impl(u, V, false); }

  /// Grouped variant: V has B*K rows, row b*K+k pairs with u row b.
  Ref cosine_grouped(Ref u, Ref V) { return cosine_impl(u, V, true); }

  /// Mean over the batch of -log softmax(scores/tau)[target].
  Ref cross_entropy(Ref scores, const std::vector<int>& targets, T tau) {
    if (!(tau > T(0))) throw ConfigError("cross_entropy: tau must be positive");
    const Mat<T>& sv = nodes_[scores].value;
    if (int(targets.size()) != sv.rows)
      throw ShapeError("cross_entropy: one target per row required");
    for (int t : targets)
      if (t < 0 || t >= sv.cols)
        throw ValidationError("cross_entropy: target " + std::to_string(t) + " out of range");
    Mat<T> probs(sv.rows, sv.cols);
    T loss = 0;
    for (int r = 0; r < sv.rows; ++r) {
      T mx = sv.at(r, 0) / tau;
      for (int c = 1; c < sv.cols; ++c) mx = std::max(mx, sv.at(r, c) / tau);
      T denom = 0;
      for (int c = 0; c < sv.cols; ++c) {
        T e = std::exp(sv.at(r, c) / tau - mx);
        probs.at(r, c) = e;
        denom += e;
      }
      for (int c = 0; c < sv.cols; ++c) probs.at(r, c) /= denom;
      loss -= std::log(probs.at(r, targets[r]));
    }
    loss /= T(sv.rows);
    Mat<T> y(1, 1);
    y.at(0, 0) = loss;
    std::vector<int> tg = targets;
    return push(std::move(y), any_grad({scores}), [scores, probs, tg, tau](Graph& g, Ref out) {
      if (!g.requires_grad(scores)) return;
      T go = g.nodes_[out].grad.at(0, 0);
      Mat<T>& gs = g.nodes_[scores].grad;
      T inv = go / (tau * T(probs.rows));
      for (int r = 0; r < probs.rows; ++r)
        for (int c = 0; c < probs.cols; ++c)
          gs.at(r, c) += inv * (probs.at(r, c) - (c == tg[size_t(r)] ? T(1) : T(0)));
    });
  }

  /// Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse.
  void backward(Ref loss) {
    if (nodes_[loss].value.rows != 1 || nodes_[loss].value.cols != 1)
      throw ShapeError("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad = Mat<T>::zeros_like(n.value);
    nodes_[loss].grad.at(0, 0) = T(1);
    for (Ref id = loss; id >= 0; --id)
      if (nodes_[id].back && nodes_[id].requires_grad) nodes_[id].back(*this, id);
  }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    bool requires_grad = false;
    std::function<void(Graph&, Ref)> back;
  };
  std::vector<Node> nodes_;

  Ref push(Mat<T> value, bool requires_grad, std::function<void(Graph&, Ref)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Ref(nodes_.size()) - 1;
  }

  bool any_grad(std::initializer_list<Ref> ids) const {
    for (Ref id : ids)
      if (nodes_[id].requires_grad) return true;
    return false;
  }

  Ref cosine_impl(Ref u, Ref V, bool grouped) {
    const Mat<T>& uv = nodes_[u].value;
    const Mat<T>& vv = nodes_[V].value;
    if (uv.cols != vv.cols)
      throw ShapeError("cosine: dim mismatch " + uv.shape_str() + " vs " + vv.shape_str());
    int B = uv.rows;
    int K;
    if (grouped) {
      if (B == 0 || vv.rows % B != 0)
        throw ShapeError("cosine_grouped: V rows must be a multiple of batch size");
      K = vv.rows / B;
    } else {
      K = vv.rows;
    }
    std::vector<T> un(B), vn(vv.rows);
    for (int b = 0; b < B; ++b) {
      T s = 0;
      for (int c = 0; c < uv.cols; ++c) s += uv.at(b, c) * uv.at(b, c);
      un[b] = std::sqrt(s);
      if (un[b] == T(0)) throw NumericError("cosine: zero-norm row " + std::to_string(b) + " in u");
    }
    for (int k = 0; k < vv.rows; ++k) {
      T s = 0;
      for (int c = 0; c < vv.cols; ++c) s += vv.at(k, c) * vv.at(k, c);
      vn[k] = std::sqrt(s);
      if (vn[k] == T(0)) throw NumericError("cosine: zero-norm row " + std::to_string(k) + " in V");
    }
    Mat<T> y(B, K);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k) {
        int vr = grouped ? b * K + k : k;
        T dot = 0;
        for (int c = 0; c < uv.cols; ++c) dot += uv.at(b, c) * vv.at(vr, c);
        y.at(b, k) = dot / (un[b] * vn[vr]);
      }
    Mat<T> yv = y;  // cached for backward
    return push(std::move(y), any_grad({u, V}),
                [u, V, grouped, K, un, vn, yv](Graph& g, Ref out) {
      const Mat<T>& go = g.nodes_[out].grad;
      const Mat<T>& uv = g.nodes_[u].value;
      const Mat<T>& vv = g.nodes_[V].value;
      int B = uv.rows, d = uv.cols;
      bool need_u = g.requires_grad(u), need_v = g.requires_grad(V);
      Mat<T>* gu = need_u ? &g.nodes_[u].grad : nullptr;
      Mat<T>* gv = need_v ? &g.nodes_[V].grad : nullptr;
      for (int b = 0; b < B; ++b)
        for (int k = 0; k < K; ++k) {
          T gbk = go.at(b, k);
          if (gbk == T(0)) continue;
          int vr = grouped ? b * K + k : k;
          T inv = T(1) / (un[b] * vn[vr]);
          T o = yv.at(b, k);
          if (need_u) {
            T cu = o / (un[b] * un[b]);
            for (int c = 0; c < d; ++c)
              gu->at(b, c) += gbk * (vv.at(vr, c) * inv - cu * uv.at(b, c));
          }
          if (need_v) {
            T cv = o / (vn[vr] * vn[vr]);
            for (int c = 0; c < d; ++c)
              gv->at(vr, c) += gbk * (uv.at(b, c) * inv - cv * vv.at(vr, c));
          }
        }
    });
  }
};

}  // namespace canet
