// SPDX-License-Identifier: Apache-2.0
/**
 * @file   feature_io.hpp
 * @brief  VQAF per-frame feature files.
 *
 * Layout, all integers little-endian:
 *
 *   offset  size     field
 *   0       4        magic "VQAF"
 *   4       1        version (1)
 *   5       4        u32 frame count T
 *   9       4        u32 feature dim F
 *   13      4*T*F    f32 features, row-major (frame-major)
 *   ...     2        u16 id length L
 *   ...     L        UTF-8 video id
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vqa/tensor.hpp"

namespace vqa {

inline constexpr std::uint8_t kFeatureFormatVersion = 1;

struct FrameFeatureSequence {
  std::string video_id;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> features;  // frames * dim, row-major

  void validate() const;
  /// Promotes to a [frames, dim] tensor of doubles.
  Tensor to_tensor() const;

  bool operator==(const FrameFeatureSequence&) const = default;
};

std::vector<std::uint8_t> encode_features(const FrameFeatureSequence& seq);
FrameFeatureSequence decode_features(const std::vector<std::uint8_t>& bytes);

void write_features(const FrameFeatureSequence& seq,
                    const std::filesystem::path& path);
FrameFeatureSequence read_features(const std::filesystem::path& path);

}  // namespace vqa
