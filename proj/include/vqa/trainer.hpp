// SPDX-License-Identifier: Apache-2.0
/**
 * @file   trainer.hpp
 * @brief  Splitting, batching, Adam and the mixed-datasets training loop.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vqa/dataset.hpp"
#include "vqa/losses.hpp"
#include "vqa/model.hpp"

namespace vqa {

/// A dataset with features resident in memory, features[i] ~ records[i].
struct LoadedDataset {
  DatasetSpec spec;
  std::vector<Tensor> features;
};

/// Reads every feature file of `spec`. Throws IoError listing all missing
/// files at once.
LoadedDataset load_dataset(const Manifest& manifest, const DatasetSpec& spec);

/// 80/20 train/test, then a quarter of train moved to val. Deterministic in
/// `seed`; needs at least 5 records.
DatasetSpec split_dataset(DatasetSpec spec, std::uint64_t seed);

/// Shuffles `indices` and cuts them into batches of `batch_size`; a tail
/// shorter than 2 is merged into the previous batch.
std::vector<std::vector<std::size_t>> plan_batches(std::vector<std::size_t> indices,
                                                   std::size_t batch_size,
                                                   std::uint64_t shuffle_seed);

struct PaddedBatch {
  Tensor features;  // [B, T_max, F], zero past each length
  std::vector<std::size_t> lengths;
  std::vector<double> mos;
  std::size_t dataset = 0;
  std::vector<std::size_t> records;
};

PaddedBatch pad_batch(const LoadedDataset& data, std::size_t dataset_index,
                      const std::vector<std::size_t>& records);

/// Batches of one split for one epoch, shuffled by (seed, epoch).
std::vector<PaddedBatch> make_batches(const LoadedDataset& data, std::size_t dataset_index,
                                      Split split, std::size_t batch_size,
                                      std::uint64_t seed, int epoch);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every trainable tensor. A non-finite
/// gradient throws NumericError before anything is modified.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               double learning_rate, const AdamConfig& config = {},
               const TrainablePredicate& trainable = {});

/// Keeps the parameters with the highest score; ties keep the earlier one.
class BestCheckpoint {
 public:
  bool offer(int epoch, double score, const ModelParams& params);
  bool empty() const { return epoch_ < 0; }
  int epoch() const { return epoch_; }
  double score() const { return score_; }
  const ModelParams& params() const { return params_; }

 private:
  int epoch_ = -1;
  double score_ = 0.0;
  ModelParams params_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 40;
  std::size_t batch_size = 32;
  PoolingConfig pooling;
  std::uint64_t seed = 0;
  LossFlags loss;
  AlignmentMode alignment_mode = AlignmentMode::DatasetSpecific;
  std::size_t reduced_dim = 128;
  std::size_t hidden_dim = 32;
  std::size_t calibration_videos = 256;
  AdamConfig adam;

  void validate() const;
};

/// Mean training losses of one batch group over an epoch. A group is a
/// dataset, or every dataset pooled under linear rescaling.
struct GroupEpochStats {
  std::string name;
  double loss = 0.0;
  double rel = 0.0;
  double lin = 0.0;
  double err = 0.0;
  double weight = 0.0;
};

struct ValidationStats {
  std::string name;
  double srocc = 0.0;
  std::size_t n = 0;
};

struct EpochLog {
  int epoch = 0;
  std::size_t steps = 0;
  double overall_loss = 0.0;
  std::vector<GroupEpochStats> groups;
  std::vector<ValidationStats> validation;
  double val_weighted_srocc = 0.0;

  /// One line of newline-delimited JSON.
  std::string to_json() const;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  double best_val_srocc = 0.0;
  /// Parameters after initialisation, before the first step.
  ModelParams initial;
  std::vector<EpochLog> log;
};

/// Trains one model on every dataset's train split, selecting the epoch with
/// the highest size-weighted validation SROCC. Each step draws one batch per
/// group; groups with fewer batches reshuffle and restart until the largest
/// is exhausted.
///
/// Under dataset-specific alignment every dataset is its own group with a
/// learned alignment. Under linear rescaling all train splits are pooled into
/// one group whose MOS are mapped to [0, 1] per dataset, with Q_s = Q_p; the
/// returned alignments are the frozen (S_d, mos_min) that undo the rescaling.
TrainResult train(const std::vector<LoadedDataset>& datasets, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Name predicate for the parameters `train` updates under `mode`.
TrainablePredicate trainable_for(AlignmentMode mode);

/// Relative-quality predictions for the given records.
std::vector<double> predict_relative(const ModelParams& params, const PoolingConfig& cfg,
                                     const LoadedDataset& data,
                                     const std::vector<std::size_t>& records);

}  // namespace vqa
