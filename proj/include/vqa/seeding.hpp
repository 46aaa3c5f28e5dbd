// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace vqa {

/// Deterministic named sub-seed: the same (seed, name, index) always yields
/// the same value, and different names give unrelated streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                          std::uint64_t index = 0);

}  // namespace vqa
