// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace hanet {

using Rng = std::mt19937_64;

// Derives an independent child seed from a parent seed and a stream tag
// (e.g. "data", "model", "augment"). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);

// Textual engine state, suitable for embedding in checkpoints.
std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

}  // namespace hanet
