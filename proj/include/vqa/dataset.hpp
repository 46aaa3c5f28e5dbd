// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataset.hpp
 * @brief  Dataset metadata and the JSON manifest that lists it.
 *
 * Manifest layout:
 *
 *   {
 *     "format": "vqa-manifest", "version": 1,
 *     "datasets": [
 *       { "name": "KoNViD-1k", "mos_min": 1.22, "mos_max": 4.64,
 *         "records": [ { "video_id": "v0", "mos": 3.1,
 *                        "feature_path": "features/v0.vqaf",
 *                        "split": "train" }, ... ] } ] }
 *
 * Relative feature paths resolve against the manifest's directory. "split" is
 * optional but must then be present on every record of that dataset.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vqa {

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view text);

struct VideoRecord {
  std::string video_id;
  double mos = 0.0;
  std::string feature_path;
};

struct DatasetSpec {
  std::string name;
  std::vector<VideoRecord> records;
  double mos_min = 0.0;
  double mos_max = 1.0;
  /// One entry per record once assigned; empty before splitting.
  std::vector<Split> split;

  /// S_d, the declared MOS range.
  double scale() const { return mos_max - mos_min; }
  bool has_split() const { return !split.empty(); }
  /// Record indices in `s`, in record order.
  std::vector<std::size_t> indices(Split s) const;

  /// Throws ValidationError on empty records, bad range, out-of-range MOS,
  /// duplicate ids, or a split vector of the wrong length.
  void validate() const;
};

struct Manifest {
  std::vector<DatasetSpec> datasets;
  /// Directory used to resolve relative feature paths.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const VideoRecord& r) const;
  const DatasetSpec* find(std::string_view name) const;
};

Manifest parse_manifest(std::string_view json_text,
                        std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const std::vector<DatasetSpec>& datasets,
                             bool include_splits = false);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<DatasetSpec>& datasets,
                   bool include_splits = false);

}  // namespace vqa
