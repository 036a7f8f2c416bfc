/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "canet/errors.hpp"
#include "canet/model.hpp"

namespace canet {

namespace {

int to_int(const std::string& k, const std::string& v) {
  try {
    size_t used;
    int x = std::stoi(v, &used);
    if (used == v.size()) return x;
  } catch (...) {
  }
  throw ConfigError("config key '" + k + "': '" + v + "' is not an integer");
}

uint64_t to_u64(const std::string& k, const std::string& v) {
  try {
    size_t used;
    uint64_t x = std::stoull(v, &used);
    if (used == v.size()) return x;
  } catch (...) {
  }
  throw ConfigError("config key '" + k + "': '" + v + "' is not an unsigned integer");
}

double to_double(const std::string& k, const std::string& v) {
  try {
    size_t used;
    double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (...) {
  }
  throw ConfigError("config key '" + k + "': '" + v + "' is not a number");
}

bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + k + "': '" + v + "' is not a boolean");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"num_attrs", [](RunConfig& c, auto& k, auto& v) { c.num_attrs = to_int(k, v); }},
      {"num_objs", [](RunConfig& c, auto& k, auto& v) { c.num_objs = to_int(k, v); }},
      {"d_x", [](RunConfig& c, auto& k, auto& v) { c.d_x = to_int(k, v); }},
      {"noise_sigma", [](RunConfig& c, auto& k, auto& v) { c.noise_sigma = to_double(k, v); }},
      {"unseen_fraction",
       [](RunConfig& c, auto& k, auto& v) { c.unseen_fraction = to_double(k, v); }},
      {"samples_per_pair",
       [](RunConfig& c, auto& k, auto& v) { c.samples_per_pair = to_int(k, v); }},
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.weight_decay = to_double(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = to_int(k, v); }},
      {"max_epochs", [](RunConfig& c, auto& k, auto& v) { c.max_epochs = to_int(k, v); }},
      {"tau", [](RunConfig& c, auto& k, auto& v) { c.tau = to_double(k, v); }},
      {"alpha", [](RunConfig& c, auto& k, auto& v) { c.alpha = to_double(k, v); }},
      {"dropout_p", [](RunConfig& c, auto& k, auto& v) { c.dropout_p = to_double(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"variant",
       [](RunConfig& c, auto&, auto& v) {
         parse_variant(v);  // validates
         c.variant = v;
       }},
      {"teacher_forcing",
       [](RunConfig& c, auto& k, auto& v) { c.teacher_forcing = to_bool(k, v); }},
      {"train_embeddings",
       [](RunConfig& c, auto& k, auto& v) { c.train_embeddings = to_bool(k, v); }},
      {"d_w", [](RunConfig& c, auto& k, auto& v) { c.d_w = to_int(k, v); }},
      {"patience", [](RunConfig& c, auto& k, auto& v) { c.patience = to_int(k, v); }},
      {"eval_every", [](RunConfig& c, auto& k, auto& v) { c.eval_every = to_int(k, v); }},
      {"data", [](RunConfig& c, auto&, auto& v) { c.data = v; }},
      {"out", [](RunConfig& c, auto&, auto& v) { c.out = v; }},
      {"checkpoint", [](RunConfig& c, auto&, auto& v) { c.checkpoint = v; }},
      {"resume", [](RunConfig& c, auto&, auto& v) { c.resume = v; }},
      {"attr_embeddings", [](RunConfig& c, auto&, auto& v) { c.attr_embeddings = v; }},
      {"obj_embeddings", [](RunConfig& c, auto&, auto& v) { c.obj_embeddings = v; }},
      {"phase",
       [](RunConfig& c, auto&, auto& v) {
         parse_phase(v);  // validates
         c.phase = v;
       }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

std::vector<std::string> RunConfig::known_keys() {
  return {"num_attrs",     "num_objs",       "d_x",
          "noise_sigma",   "unseen_fraction", "samples_per_pair",
          "learning_rate", "weight_decay",   "batch_size",
          "max_epochs",    "tau",            "alpha",
          "dropout_p",     "seed",           "variant",
          "teacher_forcing", "train_embeddings", "d_w",
          "patience",      "eval_every",     "data",
          "out",           "checkpoint",     "resume",
          "attr_embeddings", "obj_embeddings", "phase"};
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.weight_decay = weight_decay;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.tau = tau;
  t.alpha = alpha;
  t.dropout_p = dropout_p;
  t.seed = seed;
  t.variant = parse_variant(variant);
  t.teacher_forcing = teacher_forcing;
  t.train_embeddings = train_embeddings;
  t.d_w = d_w;
  t.patience = patience;
  t.eval_every = eval_every;
  return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.num_attrs = num_attrs;
  s.num_objs = num_objs;
  s.d_x = d_x;
  s.noise_sigma = noise_sigma;
  s.unseen_fraction = unseen_fraction;
  s.samples_per_pair = samples_per_pair;
  s.seed = seed;
  return s;
}

void load_config_file(const std::filesystem::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + t + "'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace canet
