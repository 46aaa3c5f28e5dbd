// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "vqa/checkpoint.hpp"
#include "vqa/errors.hpp"
#include "vqa/evaluation.hpp"
#include "vqa/seeding.hpp"
#include "vqa/synth.hpp"
#include "vqa/trainer.hpp"

namespace vqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
  fs::path out;
  std::size_t datasets = 2;
  std::size_t videos = 200;
  std::optional<std::size_t> frames;
  std::size_t min_frames = 30;
  std::size_t max_frames = 30;
  std::size_t feature_dim = 64;
  std::uint64_t seed = 0;
  std::vector<double> scale, offset, latent_lo, latent_hi, nonlinearity;
  double noise = 0.03;
  double jitter = 0.5;
  double content_spread = 0.5;
  bool force = false;
};

struct TrainArgs {
  fs::path manifest;
  fs::path out;
  int epochs = 40;
  double lr = 1e-4;
  std::size_t batch = 32;
  std::size_t tau = 12;
  double gamma = 0.5;
  std::string loss = "all";
  std::string alignment = "dataset_specific";
  std::uint64_t seed = 0;
  int runs = 10;
  std::size_t reduced_dim = 128;
  std::size_t hidden_dim = 32;
  std::size_t calibration = 256;
  bool force = false;
};

struct EvalArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::string split = "test";
  std::optional<fs::path> out;
};

struct PredictArgs {
  fs::path checkpoint;
  fs::path features;
  std::optional<std::string> dataset;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError(dir.string() + " is not empty; pass --force to write into it");
    }
  }
  fs::create_directories(dir);
}

// Picks element d of a per-dataset list: empty -> fallback, one value ->
// broadcast, otherwise exactly one value per dataset.
double per_dataset(const std::vector<double>& values, std::size_t d, std::size_t count,
                   double fallback, const char* flag) {
  if (values.empty()) return fallback;
  if (values.size() == 1) return values.front();
  if (values.size() != count) {
    throw ConfigError(std::string(flag) + " needs 1 or " + std::to_string(count) + " values");
  }
  return values[d];
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.datasets == 0) throw ConfigError("--datasets must be at least 1");
  SynthConfig cfg;
  cfg.min_frames = a.frames.value_or(a.min_frames);
  cfg.max_frames = a.frames.value_or(a.max_frames);
  cfg.feature_dim = a.feature_dim;
  cfg.noise = a.noise;
  cfg.frame_jitter = a.jitter;
  cfg.content_spread = a.content_spread;
  cfg.seed = a.seed;
  const std::size_t n = a.datasets;
  const double step = n > 1 ? 0.3 / static_cast<double>(n - 1) : 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    SynthDatasetConfig dc;
    dc.name = "ds" + std::to_string(d + 1);
    dc.videos = a.videos;
    dc.scale = per_dataset(a.scale, d, n, 1.0 + 2.0 * static_cast<double>(d), "--scale");
    dc.offset = per_dataset(a.offset, d, n, static_cast<double>(d), "--offset");
    dc.latent_lo = per_dataset(a.latent_lo, d, n, step * static_cast<double>(d), "--latent-lo");
    dc.latent_hi =
        per_dataset(a.latent_hi, d, n, 0.7 + step * static_cast<double>(d), "--latent-hi");
    if (n == 1 && a.latent_lo.empty() && a.latent_hi.empty()) dc.latent_hi = 1.0;
    dc.nonlinearity = per_dataset(a.nonlinearity, d, n, 0.0, "--nonlinearity");
    cfg.datasets.push_back(dc);
  }
  cfg.validate();
  prepare_out_dir(a.out, a.force);
  const SynthOutput data = synth_generate(cfg);
  write_synth(data, a.out);
  std::size_t files = 0;
  for (const auto& d : data.datasets) files += d.records.size();
  out << json{{"manifest", (a.out / "manifest.json").string()}, {"feature_files", files}}.dump()
      << "\n";
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.runs < 1) throw ConfigError("--runs must be at least 1");
  TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.pooling = {a.tau, a.gamma};
  cfg.loss = LossFlags::parse(a.loss);
  cfg.alignment_mode = parse_alignment_mode(a.alignment);
  cfg.reduced_dim = a.reduced_dim;
  cfg.hidden_dim = a.hidden_dim;
  cfg.calibration_videos = a.calibration;
  cfg.validate();
  cfg.pooling.validate();

  const Manifest manifest = load_manifest(a.manifest);
  std::vector<LoadedDataset> loaded;
  for (const DatasetSpec& spec : manifest.datasets) loaded.push_back(load_dataset(manifest, spec));
  prepare_out_dir(a.out, a.force);

  for (int r = 0; r < a.runs; ++r) {
    const std::uint64_t run_seed = derive_seed(a.seed, "run", static_cast<std::uint64_t>(r));
    std::vector<LoadedDataset> data = loaded;
    for (LoadedDataset& d : data) d.spec = split_dataset(std::move(d.spec), run_seed);
    cfg.seed = run_seed;

    char name[32];
    std::snprintf(name, sizeof name, "run_%02d", r);
    const fs::path run_dir = a.out / name;
    fs::create_directories(run_dir);
    std::ofstream log(run_dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + (run_dir / "train_log.jsonl").string());
    const TrainResult result = train(data, cfg, [&](const EpochLog& e) { log << e.to_json() << "\n"; });

    Checkpoint ckpt;
    ckpt.params = result.best;
    ckpt.pooling = cfg.pooling;
    ckpt.alignment_mode = cfg.alignment_mode;
    ckpt.split_seed = run_seed;
    ckpt.epoch = result.best_epoch;
    ckpt.val_srocc = result.best_val_srocc;
    save_checkpoint(run_dir / "checkpoint.json", ckpt);
    out << json{{"run", r},
                {"seed", run_seed},
                {"best_epoch", result.best_epoch},
                {"val_srocc", result.best_val_srocc},
                {"checkpoint", (run_dir / "checkpoint.json").string()}}
               .dump()
        << "\n";
  }
}

std::vector<fs::path> resolve_checkpoints(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw IoError("no checkpoint at " + path.string());
  if (fs::is_regular_file(path / "checkpoint.json")) return {path / "checkpoint.json"};
  std::vector<fs::path> found;
  for (const auto& entry : fs::directory_iterator(path)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("run_", 0) == 0 &&
        fs::is_regular_file(entry.path() / "checkpoint.json"))
      found.push_back(entry.path() / "checkpoint.json");
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) throw IoError("no checkpoints found under " + path.string());
  return found;
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::optional<Split> split;
  if (a.split != "all") split = parse_split(a.split);
  const auto paths = resolve_checkpoints(a.checkpoint);
  const Manifest manifest = load_manifest(a.manifest);
  std::vector<LoadedDataset> loaded;
  for (const DatasetSpec& spec : manifest.datasets) loaded.push_back(load_dataset(manifest, spec));
  if (a.out) fs::create_directories(*a.out);

  std::vector<EvalReport> reports;
  json runs = json::array();
  for (std::size_t r = 0; r < paths.size(); ++r) {
    const Checkpoint ckpt = load_checkpoint(paths[r]);
    std::vector<LoadedDataset> data = loaded;
    for (LoadedDataset& d : data) {
      if (ckpt.params.alignment_index(d.spec.name) && d.spec.records.size() >= 5)
        d.spec = split_dataset(std::move(d.spec), ckpt.split_seed);
    }
    std::vector<ScatterRow> scatter;
    EvalReport report = evaluate(ckpt.params, ckpt.pooling, data, split, &scatter);
    report.run = static_cast<int>(r);
    json j = json::parse(report.to_json());
    j["checkpoint"] = paths[r].string();
    runs.push_back(j);
    if (a.out) {
      char name[32];
      std::snprintf(name, sizeof name, "scatter_run_%02zu.csv", r);
      write_text(*a.out / name, scatter_to_csv(scatter));
    }
    reports.push_back(std::move(report));
  }
  json doc{{"split", a.split}, {"runs", runs}, {"summary", json::parse(summarize_reports(reports))}};
  const std::string text = doc.dump(2);
  if (a.out) write_text(*a.out / "report.json", text + "\n");
  out << text << "\n";
}

void cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const FrameFeatureSequence seq = read_features(a.features);
  const QualityTriple q =
      predict_video(seq, ckpt.params, ckpt.pooling,
                    a.dataset ? std::optional<std::string_view>(*a.dataset) : std::nullopt);
  json j{{"video_id", seq.video_id}, {"q_r", q.q_r}, {"q_p", q.q_p}};
  if (q.q_s) {
    j["dataset"] = *a.dataset;
    j["q_s"] = *q.q_s;
  }
  out << j.dump() << "\n";
}

// The invoked subcommand's settings, defaults included, in a form --config
// reads back.
std::string resolved_config(const CLI::App& app, const CLI::App& sub) {
  std::istringstream all(app.config_to_str(true, false));
  const std::string prefix = sub.get_name() + ".";
  std::string line, kept;
  while (std::getline(all, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
    if (line.rfind(prefix + "force=", 0) == 0) continue;
    kept += line + "\n";
  }
  return kept;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"No-reference video quality assessment on frame-feature sequences", "vqa"};
  app.set_config("--config", "", "TOML config file; flags override its values");
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-dataset corpus");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--datasets", sa.datasets, "Number of datasets")->capture_default_str();
  synth->add_option("--videos", sa.videos, "Videos per dataset")->capture_default_str();
  synth->add_option("--frames", sa.frames, "Frames per video (sets min and max)");
  synth->add_option("--min-frames", sa.min_frames)->capture_default_str();
  synth->add_option("--max-frames", sa.max_frames)->capture_default_str();
  synth->add_option("--feature-dim", sa.feature_dim)->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--scale", sa.scale, "MOS scale a_d per dataset")->delimiter(',');
  synth->add_option("--offset", sa.offset, "MOS offset b_d per dataset")->delimiter(',');
  synth->add_option("--latent-lo", sa.latent_lo, "Latent support start per dataset")->delimiter(',');
  synth->add_option("--latent-hi", sa.latent_hi, "Latent support end per dataset")->delimiter(',');
  synth->add_option("--nonlinearity", sa.nonlinearity, "Observer curve strength per dataset")
      ->delimiter(',');
  synth->add_option("--noise", sa.noise, "MOS noise sigma")->capture_default_str();
  synth->add_option("--jitter", sa.jitter, "Per-frame feature jitter")->capture_default_str();
  synth->add_option("--content-spread", sa.content_spread)->capture_default_str();
  synth->add_flag("--force", sa.force, "Write into a non-empty directory");

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train models on a manifest");
  trainc->add_option("--manifest", ta.manifest)->required();
  trainc->add_option("--out", ta.out, "Run directory")->required();
  trainc->add_option("--epochs", ta.epochs)->capture_default_str();
  trainc->add_option("--lr", ta.lr)->capture_default_str();
  trainc->add_option("--batch", ta.batch, "Batch size per dataset")->capture_default_str();
  trainc->add_option("--tau", ta.tau)->capture_default_str();
  trainc->add_option("--gamma", ta.gamma)->capture_default_str();
  trainc->add_option("--loss", ta.loss, "Loss components: all or a list of rel,lin,err")
      ->capture_default_str();
  trainc->add_option("--alignment", ta.alignment, "dataset_specific or linear_rescale")
      ->capture_default_str();
  trainc->add_option("--seed", ta.seed)->capture_default_str();
  trainc->add_option("--runs", ta.runs)->capture_default_str();
  trainc->add_option("--reduced-dim", ta.reduced_dim)->capture_default_str();
  trainc->add_option("--hidden-dim", ta.hidden_dim)->capture_default_str();
  trainc->add_option("--calibration", ta.calibration, "Videos used to initialise the mapping")
      ->capture_default_str();
  trainc->add_flag("--force", ta.force, "Write into a non-empty directory");

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Evaluate checkpoints");
  evalc->add_option("--checkpoint", ea.checkpoint, "Checkpoint file or run directory")->required();
  evalc->add_option("--manifest", ea.manifest)->required();
  evalc->add_option("--split", ea.split, "train, val, test or all")->capture_default_str();
  evalc->add_option("--out", ea.out, "Directory for report.json and scatter CSVs");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Score one feature file");
  predict->add_option("--checkpoint", pa.checkpoint)->required();
  predict->add_option("--features", pa.features)->required();
  predict->add_option("--dataset", pa.dataset, "Dataset whose MOS scale to report");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) {
      cmd_synth(sa, out);
      write_text(sa.out / "config.toml", resolved_config(app, *synth));
    } else if (trainc->parsed()) {
      cmd_train(ta, out);
      write_text(ta.out / "config.toml", resolved_config(app, *trainc));
    } else if (evalc->parsed()) {
      cmd_eval(ea, out);
      if (ea.out) write_text(*ea.out / "config.toml", resolved_config(app, *evalc));
    } else {
      cmd_predict(pa, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace vqa::cli
