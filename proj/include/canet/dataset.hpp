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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "canet/mat.hpp"

namespace canet {

/// Ordered attribute/object name lists; position defines the class index.
struct Vocabulary {
  std::vector<std::string> attributes;
  std::vector<std::string> objects;

  int num_attrs() const { return int(attributes.size()); }
  int num_objs() const { return int(objects.size()); }
  int attr_index(const std::string& name) const;  // -1 when absent
  int obj_index(const std::string& name) const;
  void validate() const;  // unique non-empty names, >= 2 per list
};

/// An (attribute index, object index) composition label.
using Pair = std::pair<int, int>;

/// Seen/unseen composition pairs per phase. Stored sorted and deduplicated.
struct CompositionSplit {
  std::vector<Pair> train_seen;
  std::vector<Pair> val_seen, val_unseen;
  std::vector<Pair> test_seen, test_unseen;

  void normalize();  // sort + dedup every set
};

enum class Phase { train, val, test };

std::string phase_name(Phase p);
Phase parse_phase(const std::string& s);

struct Sample {
  std::string id;
  std::vector<float> feature;
  int attr_index = -1;
  int obj_index = -1;
  Phase phase = Phase::train;
};

struct Dataset {
  Vocabulary vocab;
  CompositionSplit split;
  std::vector<Sample> samples;
  int d_x = 0;
  int duplicate_rows = 0;  // manifest rows sharing a matrix row (allowed, counted)
};

struct SyntheticSpec {
  int num_attrs = 4;
  int num_objs = 4;
  int d_x = 32;
  double noise_sigma = 0.05;
  double unseen_fraction = 0.25;
  int samples_per_pair = 10;
  uint64_t seed = 0;

  void validate() const;
};

/// Pass/fail split-consistency report; violations are entries, not faults.
struct SplitReport {
  bool pass = true;
  std::vector<std::string> violations;
};

// ---- binary matrix file ("CANM", u32le rows, u32le cols, f32le row-major) ----

void write_matrix(std::ostream& out, const Mat<float>& m);
Mat<float> read_matrix(std::istream& in, const std::string& origin);
void save_matrix_file(const std::filesystem::path& path, const Mat<float>& m);
Mat<float> load_matrix_file(const std::filesystem::path& path);

// ---- dataset ingestion / emission ----

/// Loads a dataset from `manifest_path` + `matrix_path`. Vocabulary files
/// (attributes.txt, objects.txt) and the split file (split.tsv) are expected
/// next to the manifest.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& matrix_path);

/// Writes manifest.tsv, features.bin, attributes.txt, objects.txt, split.tsv.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

/// Plants additive prototype structure: feature = u_a + w_o + N(0, sigma^2 I).
/// Pure function of the seed; unseen pairs never appear in the train phase.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Checks every split invariant plus sample/phase consistency. Pure.
SplitReport validate_split(const Vocabulary& vocab, const CompositionSplit& split,
                           const std::vector<Sample>& samples);

/// Candidate label space of a phase: sorted seen ++ sorted unseen pairs.
/// Train phase has no unseen part.
struct PhaseCandidates {
  std::vector<Pair> pairs;
  std::vector<char> seen;  // parallel to pairs
  int index_of(Pair p) const;
};
PhaseCandidates phase_candidates(const CompositionSplit& split, Phase phase);

std::vector<const Sample*> samples_of_phase(const Dataset& ds, Phase phase);

/// Features of the given samples stacked into a B x d_x matrix.
Mat<float> stack_features(const std::vector<const Sample*>& samples, int d_x);

}  // namespace canet
