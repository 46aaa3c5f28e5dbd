// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synth.hpp
 * @brief  Synthetic multi-dataset generator with inconsistent MOS scales.
 *
 * Every video has a latent perceptual quality p drawn uniformly from its
 * dataset's latent support [latent_lo, latent_hi]. Frame features are
 *
 *   f_t = (2p - 1) * u + c + e_t
 *
 * with u a fixed random embedding shared by all datasets (entries N(0,1)),
 * c a per-video content offset (entries N(0, content_spread^2)) and e_t
 * per-frame jitter (entries N(0, frame_jitter^2)). Each dataset rates on its
 * own scale:
 *
 *   MOS = scale * curve(p; nonlinearity) + offset + N(0, noise^2)
 *
 * where curve() is a logistic normalised to map [0, 1] onto [0, 1]
 * (the identity for nonlinearity 0). The declared MOS range is the noiseless
 * image of the latent support, widened when noise pushes a score outside it.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vqa/dataset.hpp"
#include "vqa/feature_io.hpp"

namespace vqa {

struct SynthDatasetConfig {
  std::string name;
  std::size_t videos = 200;
  double scale = 1.0;   // a_d, must be positive
  double offset = 0.0;  // b_d
  double latent_lo = 0.0;
  double latent_hi = 1.0;
  double nonlinearity = 0.0;
};

struct SynthConfig {
  std::vector<SynthDatasetConfig> datasets;
  std::size_t min_frames = 30;
  std::size_t max_frames = 30;
  std::size_t feature_dim = 64;
  double noise = 0.0;
  double frame_jitter = 0.5;
  double content_spread = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthOutput {
  std::vector<DatasetSpec> datasets;
  /// features[d][i] belongs to datasets[d].records[i].
  std::vector<std::vector<FrameFeatureSequence>> features;
  /// Latent quality of each video, same indexing.
  std::vector<std::vector<double>> latent;
};

/// Observer response curve on [0, 1]; strictly increasing for any strength.
double observer_curve(double p, double strength);

SynthOutput synth_generate(const SynthConfig& config);

/// Writes features/<dataset>/<video_id>.vqaf and manifest.json under out_dir.
void write_synth(const SynthOutput& out, const std::filesystem::path& out_dir);

}  // namespace vqa
