// SPDX-License-Identifier: Apache-2.0
// In-memory synthetic datasets for trainer-level tests.
#pragma once

#include <vector>

#include "vqa/synth.hpp"
#include "vqa/trainer.hpp"

namespace fixture {

/// D datasets on inconsistent scales with overlapping latent supports, the
/// same layout the command-line generator uses by default.
inline vqa::SynthConfig synth_config(std::size_t d, std::size_t videos, std::size_t frames,
                                     std::size_t feature_dim, double noise, std::uint64_t seed) {
  vqa::SynthConfig cfg;
  for (std::size_t i = 0; i < d; ++i) {
    vqa::SynthDatasetConfig ds;
    ds.name = "ds" + std::to_string(i + 1);
    ds.videos = videos;
    ds.scale = 1.0 + 2.0 * static_cast<double>(i);
    ds.offset = static_cast<double>(i);
    const double shift = d > 1 ? 0.3 * static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    ds.latent_lo = d > 1 ? shift : 0.0;
    ds.latent_hi = d > 1 ? 0.7 + shift : 1.0;
    cfg.datasets.push_back(ds);
  }
  cfg.min_frames = cfg.max_frames = frames;
  cfg.feature_dim = feature_dim;
  cfg.noise = noise;
  cfg.seed = seed;
  return cfg;
}

inline std::vector<vqa::LoadedDataset> load(const vqa::SynthOutput& out) {
  std::vector<vqa::LoadedDataset> data;
  for (std::size_t d = 0; d < out.datasets.size(); ++d) {
    vqa::LoadedDataset ld{out.datasets[d], {}};
    for (const auto& seq : out.features[d]) ld.features.push_back(seq.to_tensor());
    data.push_back(std::move(ld));
  }
  return data;
}

/// Generates, loads and splits every dataset with `split_seed`.
inline std::vector<vqa::LoadedDataset> split_synth(const vqa::SynthConfig& cfg,
                                                   std::uint64_t split_seed) {
  auto data = load(vqa::synth_generate(cfg));
  for (auto& d : data) d.spec = vqa::split_dataset(d.spec, split_seed);
  return data;
}

}  // namespace fixture
