// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Versioned JSON serialization of model parameters.
 *
 *   {
 *     "format": "vqa-checkpoint", "version": 1,
 *     "dims": {"feature": F, "reduced": R, "hidden": H},
 *     "pooling": {"tau": 12, "gamma": 0.5},
 *     "alignment_mode": "dataset_specific",
 *     "split_seed": ..., "epoch": ..., "val_srocc": ...,
 *     "params": {"reduce.w": {"shape": [R, F], "data": [...]}, ...},
 *     "alignments": [{"dataset": "KoNViD-1k", "xi": [3.42, 1.22]}, ...]
 *   }
 *
 * Doubles are written with round-trip precision, so save/load is exact.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "vqa/model.hpp"

namespace vqa {

struct Checkpoint {
  ModelParams params;
  PoolingConfig pooling;
  AlignmentMode alignment_mode = AlignmentMode::DatasetSpecific;
  std::uint64_t split_seed = 0;
  int epoch = 0;
  double val_srocc = 0.0;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vqa
