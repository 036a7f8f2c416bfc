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

#include <stdexcept>
#include <string>

namespace canet {

// Bad user-supplied configuration (flags, config file, generator parameters).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric-domain failures: zero norms, non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries file and line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally well-formed input violating a dataset/model invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace canet
