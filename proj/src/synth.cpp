// SPDX-License-Identifier: Apache-2.0
#include "vqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "vqa/errors.hpp"
#include "vqa/seeding.hpp"

namespace vqa {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void SynthConfig::validate() const {
  if (datasets.empty()) throw ConfigError("synth: at least one dataset required");
  if (feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
  if (min_frames == 0 || max_frames < min_frames) {
    throw ConfigError("synth: frame range must satisfy 1 <= min <= max");
  }
  if (noise < 0 || frame_jitter < 0 || content_spread < 0) {
    throw ConfigError("synth: noise levels must be non-negative");
  }
  for (const SynthDatasetConfig& d : datasets) {
    if (d.name.empty()) throw ConfigError("synth: dataset without a name");
    if (!(d.scale > 0)) {
      throw ConfigError("synth: dataset '" + d.name + "' needs a positive scale");
    }
    if (d.videos == 0) throw ConfigError("synth: dataset '" + d.name + "' has no videos");
    if (!(d.latent_lo >= 0 && d.latent_hi <= 1 && d.latent_lo < d.latent_hi)) {
      throw ConfigError("synth: dataset '" + d.name +
                        "' latent support must satisfy 0 <= lo < hi <= 1");
    }
  }
}

double observer_curve(double p, double strength) {
  if (strength == 0.0) return p;
  const double lo = logistic(-strength / 2);
  const double hi = logistic(strength / 2);
  return (logistic(strength * (p - 0.5)) - lo) / (hi - lo);
}

SynthOutput synth_generate(const SynthConfig& config) {
  config.validate();
  const std::size_t dim = config.feature_dim;

  std::mt19937_64 embed_rng(derive_seed(config.seed, "embedding"));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> embedding(dim);
  for (double& v : embedding) v = unit(embed_rng);

  SynthOutput out;
  for (std::size_t d = 0; d < config.datasets.size(); ++d) {
    const SynthDatasetConfig& dc = config.datasets[d];
    std::mt19937_64 rng(derive_seed(config.seed, "dataset", d));
    std::uniform_real_distribution<double> latent_dist(dc.latent_lo, dc.latent_hi);
    std::uniform_int_distribution<std::size_t> frame_dist(config.min_frames,
                                                          config.max_frames);
    std::normal_distribution<double> mos_noise(0.0, config.noise);
    std::normal_distribution<double> content(0.0, config.content_spread);
    std::normal_distribution<double> jitter(0.0, config.frame_jitter);

    DatasetSpec spec;
    spec.name = dc.name;
    std::vector<FrameFeatureSequence> videos;
    std::vector<double> latents;
    for (std::size_t i = 0; i < dc.videos; ++i) {
      const double p = latent_dist(rng);
      double mos = dc.scale * observer_curve(p, dc.nonlinearity) + dc.offset;
      if (config.noise > 0) mos += mos_noise(rng);

      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", dc.name.c_str(), i);
      FrameFeatureSequence seq;
      seq.video_id = id;
      seq.frames = frame_dist(rng);
      seq.dim = dim;
      std::vector<double> offset(dim);
      for (double& v : offset) v = config.content_spread > 0 ? content(rng) : 0.0;
      seq.features.resize(seq.frames * dim);
      for (std::size_t t = 0; t < seq.frames; ++t) {
        for (std::size_t k = 0; k < dim; ++k) {
          double v = (2.0 * p - 1.0) * embedding[k] + offset[k];
          if (config.frame_jitter > 0) v += jitter(rng);
          seq.features[t * dim + k] = static_cast<float>(v);
        }
      }

      spec.records.push_back(
          VideoRecord{seq.video_id, mos, "features/" + dc.name + "/" + seq.video_id + ".vqaf"});
      videos.push_back(std::move(seq));
      latents.push_back(p);
    }

    spec.mos_min = dc.scale * observer_curve(dc.latent_lo, dc.nonlinearity) + dc.offset;
    spec.mos_max = dc.scale * observer_curve(dc.latent_hi, dc.nonlinearity) + dc.offset;
    for (const VideoRecord& r : spec.records) {
      spec.mos_min = std::min(spec.mos_min, r.mos);
      spec.mos_max = std::max(spec.mos_max, r.mos);
    }
    spec.validate();
    out.datasets.push_back(std::move(spec));
    out.features.push_back(std::move(videos));
    out.latent.push_back(std::move(latents));
  }
  return out;
}

void write_synth(const SynthOutput& out, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  for (std::size_t d = 0; d < out.datasets.size(); ++d) {
    const DatasetSpec& spec = out.datasets[d];
    fs::create_directories(out_dir / "features" / spec.name);
    for (std::size_t i = 0; i < spec.records.size(); ++i)
      write_features(out.features[d][i], out_dir / spec.records[i].feature_path);
  }
  save_manifest(out_dir / "manifest.json", out.datasets);
}

}  // namespace vqa
