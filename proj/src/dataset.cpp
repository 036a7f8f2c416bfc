/*
 * Copyright (c) 2026 the canet authors
 *
 * Licensed under the Apache License, Version 2.0;
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 */
#include "canet/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "canet/errors.hpp"

namespace canet {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'N', 'M'};

void write_u32le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& in, const std::string& origin) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(origin + ": truncated header at offset " + std::to_string(in.tellg()));
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> read_token_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(line);
  }
  return out;
}

bool contains(const std::vector<Pair>& set, Pair p) {
  return std::binary_search(set.begin(), set.end(), p);
}

std::vector<double> unit_gaussian_row(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(d));
  double norm = 0.0;
  for (auto& x : v) {
    x = n(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

int Vocabulary::attr_index(const std::string& name) const {
  auto it = std::find(attributes.begin(), attributes.end(), name);
  return it == attributes.end() ? -1 : int(it - attributes.begin());
}

int Vocabulary::obj_index(const std::string& name) const {
  auto it = std::find(objects.begin(), objects.end(), name);
  return it == objects.end() ? -1 : int(it - objects.begin());
}

void Vocabulary::validate() const {
  auto check = [](const std::vector<std::string>& names, const char* what) {
    if (names.size() < 2)
      throw ValidationError(std::string(what) + " vocabulary needs at least 2 entries");
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ValidationError(std::string(what) + " vocabulary has an empty name");
      if (!seen.insert(n).second)
        throw ValidationError(std::string(what) + " vocabulary has duplicate name '" + n + "'");
    }
  };
  check(attributes, "attribute");
  check(objects, "object");
}

void CompositionSplit::normalize() {
  for (auto* s : {&train_seen, &val_seen, &val_unseen, &test_seen, &test_unseen}) {
    std::sort(s->begin(), s->end());
    s->erase(std::unique(s->begin(), s->end()), s->end());
  }
}

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::train: return "train";
    case Phase::val: return "val";
    case Phase::test: return "test";
  }
  return "?";
}

Phase parse_phase(const std::string& s) {
  if (s == "train") return Phase::train;
  if (s == "val") return Phase::val;
  if (s == "test") return Phase::test;
  throw ParseError("unknown phase '" + s + "'");
}

void SyntheticSpec::validate() const {
  if (num_attrs < 2 || num_objs < 2)
    throw ConfigError("synthetic spec: need at least 2 attributes and 2 objects");
  if (int64_t(num_attrs) * num_objs < 4)
    throw ConfigError("synthetic spec: num_attrs*num_objs must be >= 4");
  if (d_x < 1) throw ConfigError("synthetic spec: d_x must be positive");
  if (noise_sigma < 0.0) throw ConfigError("synthetic spec: noise_sigma must be nonnegative");
  if (!(unseen_fraction > 0.0 && unseen_fraction < 1.0))
    throw ConfigError("synthetic spec: unseen_fraction must lie in (0,1)");
  if (samples_per_pair < 1) throw ConfigError("synthetic spec: samples_per_pair must be >= 1");
  int total = num_attrs * num_objs;
  int unseen = int(std::lround(unseen_fraction * total));
  if (unseen < 2 || total - unseen < 1)
    throw ConfigError(
        "synthetic spec: unseen_fraction must leave at least one seen pair and one "
        "unseen pair per phase (val and test)");
}

// ---- binary matrix format ----

void write_matrix(std::ostream& out, const Mat<float>& m) {
  static_assert(std::endian::native == std::endian::little,
                "big-endian hosts need byte swapping here");
  out.write(kMagic, 4);
  write_u32le(out, uint32_t(m.rows));
  write_u32le(out, uint32_t(m.cols));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            std::streamsize(m.data.size() * sizeof(float)));
  if (!out) throw IoError("matrix write failed");
}

Mat<float> read_matrix(std::istream& in, const std::string& origin) {
  char magic[4];
  if (!in.read(magic, 4)) throw ParseError(origin + ": truncated magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(origin + ": bad magic bytes, expected CANM");
  uint32_t rows = read_u32le(in, origin);
  uint32_t cols = read_u32le(in, origin);
  Mat<float> m(static_cast<int>(rows), static_cast<int>(cols));
  if (!in.read(reinterpret_cast<char*>(m.data.data()),
               std::streamsize(m.data.size() * sizeof(float))))
    throw ParseError(origin + ": truncated payload, expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " floats");
  return m;
}

void save_matrix_file(const std::filesystem::path& path, const Mat<float>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix(out, m);
}

Mat<float> load_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_matrix(in, path.string());
}

// ---- ingestion ----

Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& matrix_path) {
  Dataset ds;
  auto dir = manifest_path.parent_path();
  ds.vocab.attributes = read_token_lines(dir / "attributes.txt");
  ds.vocab.objects = read_token_lines(dir / "objects.txt");
  ds.vocab.validate();

  // split file: attr<TAB>obj<TAB>set
  {
    auto split_path = dir / "split.tsv";
    std::ifstream in(split_path);
    if (!in) throw IoError("cannot open " + split_path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto f = split_tabs(line);
      if (f.size() != 3)
        throw ParseError(split_path.string() + ":" + std::to_string(lineno) +
                         ": expected 3 tab-separated fields, got " + std::to_string(f.size()));
      int a = ds.vocab.attr_index(f[0]);
      int o = ds.vocab.obj_index(f[1]);
      if (a < 0)
        throw ParseError(split_path.string() + ":" + std::to_string(lineno) +
                         ": unknown attribute '" + f[0] + "'");
      if (o < 0)
        throw ParseError(split_path.string() + ":" + std::to_string(lineno) +
                         ": unknown object '" + f[1] + "'");
      Pair p{a, o};
      if (f[2] == "train_seen") ds.split.train_seen.push_back(p);
      else if (f[2] == "val_seen") ds.split.val_seen.push_back(p);
      else if (f[2] == "val_unseen") ds.split.val_unseen.push_back(p);
      else if (f[2] == "test_seen") ds.split.test_seen.push_back(p);
      else if (f[2] == "test_unseen") ds.split.test_unseen.push_back(p);
      else
        throw ParseError(split_path.string() + ":" + std::to_string(lineno) +
                         ": unknown split set '" + f[2] + "'");
    }
  }
  ds.split.normalize();

  Mat<float> features = load_matrix_file(matrix_path);
  ds.d_x = features.cols;

  // manifest: id<TAB>attr<TAB>obj<TAB>phase<TAB>matrix_row
  {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    std::string line;
    int lineno = 0;
    std::unordered_map<int, int> row_use;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto f = split_tabs(line);
      if (f.size() != 5)
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                         ": expected 5 tab-separated fields, got " + std::to_string(f.size()));
      Sample s;
      s.id = f[0];
      s.attr_index = ds.vocab.attr_index(f[1]);
      s.obj_index = ds.vocab.obj_index(f[2]);
      if (s.attr_index < 0)
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                         ": unknown attribute '" + f[1] + "'");
      if (s.obj_index < 0)
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                         ": unknown object '" + f[2] + "'");
      try {
        s.phase = parse_phase(f[3]);
      } catch (const ParseError& e) {
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      int row = -1;
      try {
        size_t used = 0;
        row = std::stoi(f[4], &used);
        if (used != f[4].size()) row = -1;
      } catch (...) {
        row = -1;
      }
      if (row < 0)
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) +
                         ": bad matrix row '" + f[4] + "'");
      if (row >= features.rows)
        throw ParseError(manifest_path.string() + ":" + std::to_string(lineno) + ": matrix row " +
                         std::to_string(row) + " out of range, matrix has " +
                         std::to_string(features.rows) + " rows");
      if (++row_use[row] == 2) ++ds.duplicate_rows;
      s.feature.assign(features.data.begin() + size_t(row) * features.cols,
                       features.data.begin() + size_t(row + 1) * features.cols);
      for (float v : s.feature)
        if (!std::isfinite(v))
          throw ValidationError("sample '" + s.id + "' has a non-finite feature entry");
      ds.samples.push_back(std::move(s));
    }
  }

  SplitReport rep = validate_split(ds.vocab, ds.split, ds.samples);
  if (!rep.pass) {
    std::string msg = "dataset violates split invariants:";
    for (const auto& v : rep.violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  auto write_tokens = [&](const char* name, const std::vector<std::string>& tokens) {
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot open " + (dir / name).string() + " for writing");
    for (const auto& t : tokens) out << t << "\n";
  };
  write_tokens("attributes.txt", ds.vocab.attributes);
  write_tokens("objects.txt", ds.vocab.objects);

  {
    std::ofstream out(dir / "split.tsv");
    if (!out) throw IoError("cannot open split.tsv for writing");
    auto dump = [&](const std::vector<Pair>& set, const char* name) {
      for (auto [a, o] : set)
        out << ds.vocab.attributes[size_t(a)] << "\t" << ds.vocab.objects[size_t(o)] << "\t"
            << name << "\n";
    };
    dump(ds.split.train_seen, "train_seen");
    dump(ds.split.val_seen, "val_seen");
    dump(ds.split.val_unseen, "val_unseen");
    dump(ds.split.test_seen, "test_seen");
    dump(ds.split.test_unseen, "test_unseen");
  }

  Mat<float> features(int(ds.samples.size()), ds.d_x);
  {
    std::ofstream out(dir / "manifest.tsv");
    if (!out) throw IoError("cannot open manifest.tsv for writing");
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      const Sample& s = ds.samples[i];
      out << s.id << "\t" << ds.vocab.attributes[size_t(s.attr_index)] << "\t"
          << ds.vocab.objects[size_t(s.obj_index)] << "\t" << phase_name(s.phase) << "\t" << i
          << "\n";
      std::copy(s.feature.begin(), s.feature.end(),
                features.data.begin() + i * size_t(ds.d_x));
    }
  }
  save_matrix_file(dir / "features.bin", features);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  Dataset ds;
  ds.d_x = spec.d_x;
  for (int a = 0; a < spec.num_attrs; ++a) ds.vocab.attributes.push_back("attr" + std::to_string(a));
  for (int o = 0; o < spec.num_objs; ++o) ds.vocab.objects.push_back("obj" + std::to_string(o));

  std::vector<std::vector<double>> attr_proto, obj_proto;
  for (int a = 0; a < spec.num_attrs; ++a) attr_proto.push_back(unit_gaussian_row(spec.d_x, rng));
  for (int o = 0; o < spec.num_objs; ++o) obj_proto.push_back(unit_gaussian_row(spec.d_x, rng));

  // Choose unseen pairs by seeded sampling, keeping every attribute and
  // object represented in train_seen.
  int total = spec.num_attrs * spec.num_objs;
  int want_unseen = int(std::lround(spec.unseen_fraction * total));
  std::vector<Pair> all_pairs;
  for (int a = 0; a < spec.num_attrs; ++a)
    for (int o = 0; o < spec.num_objs; ++o) all_pairs.push_back({a, o});
  for (size_t i = all_pairs.size() - 1; i > 0; --i) {
    size_t j = rng() % (i + 1);
    std::swap(all_pairs[i], all_pairs[j]);
  }
  std::vector<int> attr_seen(size_t(spec.num_attrs), spec.num_objs);
  std::vector<int> obj_seen(size_t(spec.num_objs), spec.num_attrs);
  std::vector<Pair> unseen;
  for (Pair p : all_pairs) {
    if (int(unseen.size()) == want_unseen) break;
    if (attr_seen[size_t(p.first)] <= 1 || obj_seen[size_t(p.second)] <= 1) continue;
    unseen.push_back(p);
    --attr_seen[size_t(p.first)];
    --obj_seen[size_t(p.second)];
  }
  if (int(unseen.size()) < 2)
    throw ConfigError("synthetic spec: could not reserve an unseen pair for both val and test");
  for (int a = 0; a < spec.num_attrs; ++a)
    for (int o = 0; o < spec.num_objs; ++o) {
      Pair p{a, o};
      if (std::find(unseen.begin(), unseen.end(), p) == unseen.end())
        ds.split.train_seen.push_back(p);
    }
  // Alternate unseen pairs between the val and test phases.
  for (size_t i = 0; i < unseen.size(); ++i)
    (i % 2 == 0 ? ds.split.val_unseen : ds.split.test_unseen).push_back(unseen[i]);
  ds.split.val_seen = ds.split.train_seen;
  ds.split.test_seen = ds.split.train_seen;
  ds.split.normalize();

  std::normal_distribution<double> noise(0.0, 1.0);
  auto emit = [&](Phase phase, const std::vector<Pair>& pairs, const char* tag) {
    int counter = 0;
    for (Pair p : pairs)
      for (int k = 0; k < spec.samples_per_pair; ++k) {
        Sample s;
        s.id = std::string(tag) + "-" + std::to_string(counter++);
        s.attr_index = p.first;
        s.obj_index = p.second;
        s.phase = phase;
        s.feature.resize(size_t(spec.d_x));
        for (int c = 0; c < spec.d_x; ++c) {
          double v = attr_proto[size_t(p.first)][size_t(c)] + obj_proto[size_t(p.second)][size_t(c)];
          if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
          s.feature[size_t(c)] = float(v);
        }
        ds.samples.push_back(std::move(s));
      }
  };
  emit(Phase::train, ds.split.train_seen, "train");
  {
    auto val_pairs = ds.split.val_seen;
    val_pairs.insert(val_pairs.end(), ds.split.val_unseen.begin(), ds.split.val_unseen.end());
    std::sort(val_pairs.begin(), val_pairs.end());
    emit(Phase::val, val_pairs, "val");
    auto test_pairs = ds.split.test_seen;
    test_pairs.insert(test_pairs.end(), ds.split.test_unseen.begin(), ds.split.test_unseen.end());
    std::sort(test_pairs.begin(), test_pairs.end());
    emit(Phase::test, test_pairs, "test");
  }
  return ds;
}

SplitReport validate_split(const Vocabulary& vocab, const CompositionSplit& split,
                           const std::vector<Sample>& samples) {
  SplitReport rep;
  auto fail = [&](std::string msg) {
    rep.pass = false;
    rep.violations.push_back(std::move(msg));
  };

  auto check_range = [&](const std::vector<Pair>& set, const char* name) {
    for (auto [a, o] : set)
      if (a < 0 || a >= vocab.num_attrs() || o < 0 || o >= vocab.num_objs())
        fail(std::string("index-range: ") + name + " pair (" + std::to_string(a) + "," +
             std::to_string(o) + ") outside vocabulary");
  };
  check_range(split.train_seen, "train_seen");
  check_range(split.val_seen, "val_seen");
  check_range(split.val_unseen, "val_unseen");
  check_range(split.test_seen, "test_seen");
  check_range(split.test_unseen, "test_unseen");

  auto pair_str = [&](Pair p) {
    return "(" + std::to_string(p.first) + "," + std::to_string(p.second) + ")";
  };
  for (auto p : split.val_unseen)
    if (contains(split.train_seen, p))
      fail("train-overlap-unseen: val_unseen pair " + pair_str(p) + " also in train_seen");
  for (auto p : split.test_unseen)
    if (contains(split.train_seen, p))
      fail("train-overlap-unseen: test_unseen pair " + pair_str(p) + " also in train_seen");
  for (auto p : split.val_seen)
    if (!contains(split.train_seen, p))
      fail("seen-not-in-train: val_seen pair " + pair_str(p) + " absent from train_seen");
  for (auto p : split.test_seen)
    if (!contains(split.train_seen, p))
      fail("seen-not-in-train: test_seen pair " + pair_str(p) + " absent from train_seen");
  for (auto p : split.val_seen)
    if (contains(split.val_unseen, p))
      fail("phase-overlap: pair " + pair_str(p) + " both val_seen and val_unseen");
  for (auto p : split.test_seen)
    if (contains(split.test_unseen, p))
      fail("phase-overlap: pair " + pair_str(p) + " both test_seen and test_unseen");

  for (const Sample& s : samples) {
    Pair p{s.attr_index, s.obj_index};
    bool ok = false;
    switch (s.phase) {
      case Phase::train:
        ok = contains(split.train_seen, p);
        break;
      case Phase::val:
        ok = contains(split.val_seen, p) || contains(split.val_unseen, p);
        break;
      case Phase::test:
        ok = contains(split.test_seen, p) || contains(split.test_unseen, p);
        break;
    }
    if (!ok)
      fail("sample-pair-not-in-phase: sample '" + s.id + "' labeled " + pair_str(p) +
           " not permitted in phase " + phase_name(s.phase));
  }
  return rep;
}

int PhaseCandidates::index_of(Pair p) const {
  auto it = std::find(pairs.begin(), pairs.end(), p);
  return it == pairs.end() ? -1 : int(it - pairs.begin());
}

PhaseCandidates phase_candidates(const CompositionSplit& split, Phase phase) {
  PhaseCandidates out;
  const std::vector<Pair>* seen = &split.train_seen;
  const std::vector<Pair>* unseen = nullptr;
  if (phase == Phase::val) {
    seen = &split.val_seen;
    unseen = &split.val_unseen;
  } else if (phase == Phase::test) {
    seen = &split.test_seen;
    unseen = &split.test_unseen;
  }
  for (auto p : *seen) {
    out.pairs.push_back(p);
    out.seen.push_back(1);
  }
  if (unseen)
    for (auto p : *unseen) {
      out.pairs.push_back(p);
      out.seen.push_back(0);
    }
  return out;
}

std::vector<const Sample*> samples_of_phase(const Dataset& ds, Phase phase) {
  std::vector<const Sample*> out;
  for (const Sample& s : ds.samples)
    if (s.phase == phase) out.push_back(&s);
  return out;
}

Mat<float> stack_features(const std::vector<const Sample*>& samples, int d_x) {
  Mat<float> x(int(samples.size()), d_x);
  for (size_t i = 0; i < samples.size(); ++i) {
    if (int(samples[i]->feature.size()) != d_x)
      throw ShapeError("sample '" + samples[i]->id + "' feature length " +
                       std::to_string(samples[i]->feature.size()) + " != d_x " +
                       std::to_string(d_x));
    std::copy(samples[i]->feature.begin(), samples[i]->feature.end(),
              x.data.begin() + i * size_t(d_x));
  }
  return x;
}

}  // namespace canet
