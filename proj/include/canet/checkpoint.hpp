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

#include <filesystem>

#include "canet/training.hpp"

namespace canet {

/// Writes <dir>/model.bin (parameter and moment tensors as concatenated
/// binary matrix blocks) and <dir>/model.idx (text index of name -> offset,
/// shape, plus model config and optimizer/rng state).
void save_checkpoint(const std::filesystem::path& dir, TrainState& state);

/// Restores a training state exactly: parameters, Adam moments, epoch/step
/// counters, rng stream and early-stopping bookkeeping.
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace canet
