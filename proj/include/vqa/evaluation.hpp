// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Per-dataset test metrics for a trained model.
 *
 * Datasets the model holds an alignment for are scored on Q_s directly.
 * Unseen datasets are scored on Q_p over all of their records, with PLCC and
 * RMSE taken after a 4-parameter logistic fit.
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vqa/trainer.hpp"

namespace vqa {

struct DatasetMetrics {
  std::string name;
  double srocc = 0.0;
  double krocc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  bool aligned = false;
};

struct EvalReport {
  int run = 0;
  std::vector<DatasetMetrics> datasets;
  double weighted_srocc = 0.0;
  double weighted_plcc = 0.0;

  std::string to_json() const;
};

struct ScatterRow {
  std::string dataset;
  std::string video_id;
  double pred = 0.0;
  double mapped = 0.0;
  double mos = 0.0;
};

/// Evaluates on `split` (every record when nullopt or when the dataset has
/// no split or no alignment). Appends scatter rows when `scatter` is given.
EvalReport evaluate(const ModelParams& params, const PoolingConfig& cfg,
                    const std::vector<LoadedDataset>& datasets,
                    std::optional<Split> split,
                    std::vector<ScatterRow>* scatter = nullptr);

/// Median, mean and sample std across runs of each dataset's SROCC/PLCC and
/// of the weighted values, as JSON.
std::string summarize_reports(const std::vector<EvalReport>& reports);

std::string scatter_to_csv(const std::vector<ScatterRow>& rows);

double median(std::vector<double> values);

}  // namespace vqa
