// SPDX-License-Identifier: Apache-2.0
#include "vqa/dataset.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "vqa/errors.hpp"

namespace vqa {

using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(text) + "' (train|val|test)");
}

std::vector<std::size_t> DatasetSpec::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

void DatasetSpec::validate() const {
  if (name.empty()) throw ValidationError("dataset with empty name");
  if (records.empty()) throw ValidationError("dataset '" + name + "' has no records");
  if (!std::isfinite(mos_min) || !std::isfinite(mos_max) || !(mos_max > mos_min)) {
    throw ValidationError("dataset '" + name + "' has invalid MOS range [" +
                          std::to_string(mos_min) + ", " + std::to_string(mos_max) + "]");
  }
  std::set<std::string> seen;
  for (const VideoRecord& r : records) {
    if (r.video_id.empty()) throw ValidationError("dataset '" + name + "' has a record without video_id");
    if (!seen.insert(r.video_id).second) {
      throw ValidationError("dataset '" + name + "' has duplicate video_id '" + r.video_id + "'");
    }
    if (!std::isfinite(r.mos) || r.mos < mos_min || r.mos > mos_max) {
      std::ostringstream msg;
      msg << "record '" << r.video_id << "' in dataset '" << name << "' has MOS "
          << r.mos << " outside [" << mos_min << ", " << mos_max << "]";
      throw ValidationError(msg.str());
    }
  }
  if (!split.empty() && split.size() != records.size()) {
    throw ValidationError("dataset '" + name + "' split covers " +
                          std::to_string(split.size()) + " of " +
                          std::to_string(records.size()) + " records");
  }
}

std::filesystem::path Manifest::resolve(const VideoRecord& r) const {
  std::filesystem::path p(r.feature_path);
  return p.is_absolute() ? p : base_dir / p;
}

const DatasetSpec* Manifest::find(std::string_view name) const {
  for (const DatasetSpec& d : datasets)
    if (d.name == name) return &d;
  return nullptr;
}

Manifest parse_manifest(std::string_view json_text, std::filesystem::path base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  m.base_dir = std::move(base_dir);
  try {
    if (doc.value("format", std::string("vqa-manifest")) != "vqa-manifest") {
      throw FormatError("manifest has unexpected format tag");
    }
    if (doc.value("version", 1) != 1) throw FormatError("unsupported manifest version");
    std::set<std::string> names;
    for (const json& d : doc.at("datasets")) {
      DatasetSpec spec;
      spec.name = d.at("name").get<std::string>();
      spec.mos_min = d.at("mos_min").get<double>();
      spec.mos_max = d.at("mos_max").get<double>();
      std::size_t with_split = 0;
      for (const json& r : d.at("records")) {
        VideoRecord rec;
        rec.video_id = r.at("video_id").get<std::string>();
        rec.mos = r.at("mos").get<double>();
        rec.feature_path = r.at("feature_path").get<std::string>();
        if (r.contains("split")) {
          spec.split.push_back(parse_split(r.at("split").get<std::string>()));
          ++with_split;
        }
        spec.records.push_back(std::move(rec));
      }
      if (with_split != 0 && with_split != spec.records.size()) {
        throw ValidationError("dataset '" + spec.name + "' assigns splits to only some records");
      }
      spec.validate();
      if (!names.insert(spec.name).second) {
        throw ValidationError("duplicate dataset name '" + spec.name + "'");
      }
      m.datasets.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  if (m.datasets.empty()) throw ValidationError("manifest lists no datasets");
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

std::string manifest_to_json(const std::vector<DatasetSpec>& datasets,
                             bool include_splits) {
  json doc;
  doc["format"] = "vqa-manifest";
  doc["version"] = 1;
  doc["datasets"] = json::array();
  for (const DatasetSpec& d : datasets) {
    json jd;
    jd["name"] = d.name;
    jd["mos_min"] = d.mos_min;
    jd["mos_max"] = d.mos_max;
    jd["records"] = json::array();
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      const VideoRecord& r = d.records[i];
      json jr{{"video_id", r.video_id}, {"mos", r.mos}, {"feature_path", r.feature_path}};
      if (include_splits && d.has_split()) jr["split"] = std::string(to_string(d.split[i]));
      jd["records"].push_back(std::move(jr));
    }
    doc["datasets"].push_back(std::move(jd));
  }
  return doc.dump(1);
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<DatasetSpec>& datasets, bool include_splits) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << manifest_to_json(datasets, include_splits) << "\n";
}

}  // namespace vqa
