// SPDX-License-Identifier: Apache-2.0
#include "vqa/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vqa/errors.hpp"

namespace vqa {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  const ModelDims dims = dims_of(ckpt.params);
  json doc;
  doc["format"] = "vqa-checkpoint";
  doc["version"] = 1;
  doc["dims"] = {{"feature", dims.feature_dim},
                 {"reduced", dims.reduced_dim},
                 {"hidden", dims.hidden_dim}};
  doc["pooling"] = {{"tau", ckpt.pooling.tau}, {"gamma", ckpt.pooling.gamma}};
  doc["alignment_mode"] = std::string(to_string(ckpt.alignment_mode));
  doc["split_seed"] = ckpt.split_seed;
  doc["epoch"] = ckpt.epoch;
  doc["val_srocc"] = ckpt.val_srocc;
  json params = json::object();
  ckpt.params.visit([&](const std::string& name, const Tensor& t) {
    if (name.rfind("align.", 0) != 0) params[name] = tensor_to_json(t);
  });
  doc["params"] = std::move(params);
  doc["alignments"] = json::array();
  for (const auto& a : ckpt.params.alignments)
    doc["alignments"].push_back({{"dataset", a.dataset}, {"xi", a.xi.values()}});
  return doc.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  Checkpoint ckpt;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "vqa-checkpoint") {
      throw FormatError("not a vqa checkpoint");
    }
    const int version = doc.at("version").get<int>();
    if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const json& dims = doc.at("dims");
    ModelDims d{dims.at("feature").get<std::size_t>(), dims.at("reduced").get<std::size_t>(),
                dims.at("hidden").get<std::size_t>()};
    ckpt.params = zero_model(d);
    for (const json& a : doc.at("alignments")) {
      const auto xi = a.at("xi").get<std::vector<double>>();
      if (xi.size() != 2) throw FormatError("alignment xi must have two entries");
      add_alignment(ckpt.params, a.at("dataset").get<std::string>(), xi[0], xi[1]);
    }
    const json& params = doc.at("params");
    ckpt.params.visit([&](const std::string& name, Tensor& t) {
      if (name.rfind("align.", 0) == 0) return;
      if (!params.contains(name)) throw FormatError("checkpoint lacks parameter " + name);
      t = tensor_from_json(params.at(name));
    });
    ckpt.pooling.tau = doc.at("pooling").at("tau").get<std::size_t>();
    ckpt.pooling.gamma = doc.at("pooling").at("gamma").get<double>();
    ckpt.alignment_mode = parse_alignment_mode(doc.at("alignment_mode").get<std::string>());
    ckpt.split_seed = doc.value("split_seed", std::uint64_t{0});
    ckpt.epoch = doc.value("epoch", 0);
    ckpt.val_srocc = doc.value("val_srocc", 0.0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    validate_model(ckpt.params);
    ckpt.pooling.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(ckpt) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace vqa
