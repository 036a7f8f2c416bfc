/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "canet/errors.hpp"

namespace canet {

namespace {

struct TensorEntry {
  std::streamoff offset = 0;
  int rows = 0, cols = 0;
};

std::string hexd(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

double parse_hexd(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, TrainState& state) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / "model.bin").string() + " for writing");
  std::ofstream idx(dir / "model.idx");
  if (!idx) throw IoError("cannot open " + (dir / "model.idx").string() + " for writing");

  const ModelConfig& c = state.params.cfg;
  idx << "canet-checkpoint 1\n";
  idx << "num_attrs " << c.num_attrs << "\n";
  idx << "num_objs " << c.num_objs << "\n";
  idx << "d_x " << c.d_x << "\n";
  idx << "d_w " << c.d_w << "\n";
  idx << "tau " << hexd(c.tau) << "\n";
  idx << "alpha " << hexd(c.alpha) << "\n";
  idx << "dropout_p " << hexd(c.dropout_p) << "\n";
  idx << "ln_eps " << hexd(c.ln_eps) << "\n";
  idx << "variant " << variant_name(c.variant) << "\n";
  idx << "teacher_forcing " << int(c.teacher_forcing) << "\n";
  idx << "train_embeddings " << int(c.train_embeddings) << "\n";
  idx << "epoch " << state.epoch << "\n";
  idx << "step " << state.step << "\n";
  idx << "best_val_auc " << hexd(state.best_val_auc) << "\n";
  idx << "epochs_since_improve " << state.epochs_since_improve << "\n";
  idx << "rng " << state.rng << "\n";

  auto dump = [&](const std::string& name, const Mat<float>& t) {
    idx << "tensor " << name << " " << bin.tellp() << " " << t.rows << " " << t.cols << "\n";
    write_matrix(bin, t);
  };
  state.params.for_each_tensor(
      [&](const std::string& name, Mat<float>& t, bool) { dump(name, t); });
  size_t mi = 0;
  state.params.for_each_tensor([&](const std::string& name, Mat<float>&, bool trainable) {
    if (!trainable) return;
    dump("adam.m1." + name, state.m1[mi]);
    dump("adam.m2." + name, state.m2[mi]);
    ++mi;
  });
}

TrainState load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "model.idx");
  if (!idx) throw IoError("cannot open " + (dir / "model.idx").string());
  std::string line;
  if (!std::getline(idx, line) || line.rfind("canet-checkpoint", 0) != 0)
    throw ParseError((dir / "model.idx").string() + ": not a checkpoint index");

  ModelConfig cfg;
  TrainState st;
  std::map<std::string, TensorEntry> tensors;
  std::string rng_state;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "num_attrs") is >> cfg.num_attrs;
    else if (key == "num_objs") is >> cfg.num_objs;
    else if (key == "d_x") is >> cfg.d_x;
    else if (key == "d_w") is >> cfg.d_w;
    else if (key == "tau") { std::string v; is >> v; cfg.tau = parse_hexd(v); }
    else if (key == "alpha") { std::string v; is >> v; cfg.alpha = parse_hexd(v); }
    else if (key == "dropout_p") { std::string v; is >> v; cfg.dropout_p = parse_hexd(v); }
    else if (key == "ln_eps") { std::string v; is >> v; cfg.ln_eps = parse_hexd(v); }
    else if (key == "variant") { std::string v; is >> v; cfg.variant = parse_variant(v); }
    else if (key == "teacher_forcing") { int v; is >> v; cfg.teacher_forcing = v != 0; }
    else if (key == "train_embeddings") { int v; is >> v; cfg.train_embeddings = v != 0; }
    else if (key == "epoch") is >> st.epoch;
    else if (key == "step") is >> st.step;
    else if (key == "best_val_auc") { std::string v; is >> v; st.best_val_auc = parse_hexd(v); }
    else if (key == "epochs_since_improve") is >> st.epochs_since_improve;
    else if (key == "rng") rng_state = line.substr(4);
    else if (key == "tensor") {
      std::string name;
      TensorEntry e;
      long long off;
      is >> name >> off >> e.rows >> e.cols;
      e.offset = off;
      tensors[name] = e;
    } else {
      throw ParseError((dir / "model.idx").string() + ": unknown key '" + key + "'");
    }
  }

  std::ifstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / "model.bin").string());
  auto load = [&](const std::string& name, Mat<float>& into) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw ValidationError("checkpoint missing tensor '" + name + "'");
    bin.seekg(it->second.offset);
    Mat<float> m = read_matrix(bin, name);
    if (m.rows != into.rows || m.cols != into.cols)
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + m.shape_str() +
                            ", model expects " + into.shape_str());
    into = std::move(m);
  };

  // Allocate shapes via the regular initializer, then overwrite every tensor.
  st.params = init_params(cfg, 0);
  st.params.for_each_tensor([&](const std::string& name, Mat<float>& t, bool) { load(name, t); });
  st.params.for_each_tensor([&](const std::string& name, Mat<float>& t, bool trainable) {
    if (!trainable) return;
    st.m1.push_back(Mat<float>::zeros_like(t));
    st.m2.push_back(Mat<float>::zeros_like(t));
    load("adam.m1." + name, st.m1.back());
    load("adam.m2." + name, st.m2.back());
  });
  if (!rng_state.empty()) {
    std::istringstream rs(rng_state);
    rs >> st.rng;
    if (rs.fail()) throw ParseError("checkpoint rng state is corrupt");
  }
  return st;
}

}  // namespace canet
