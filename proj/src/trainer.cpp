// SPDX-License-Identifier: Apache-2.0
#include "vqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>

#include "vqa/errors.hpp"
#include "vqa/metrics.hpp"
#include "vqa/seeding.hpp"

namespace vqa {

LoadedDataset load_dataset(const Manifest& manifest, const DatasetSpec& spec) {
  LoadedDataset out{spec, {}};
  std::vector<std::string> missing;
  for (const VideoRecord& r : spec.records) {
    const auto path = manifest.resolve(r);
    if (!std::filesystem::exists(path)) missing.push_back(path.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing feature files for dataset '" + spec.name + "':";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  out.features.reserve(spec.records.size());
  for (const VideoRecord& r : spec.records) {
    const FrameFeatureSequence seq = read_features(manifest.resolve(r));
    out.features.push_back(seq.to_tensor());
  }
  if (!out.features.empty()) {
    const std::size_t dim = out.features.front().dim(1);
    for (std::size_t i = 0; i < out.features.size(); ++i) {
      if (out.features[i].dim(1) != dim) {
        throw DimensionError("dataset '" + spec.name + "': video '" + spec.records[i].video_id +
                             "' has feature dim " + std::to_string(out.features[i].dim(1)) +
                             ", expected " + std::to_string(dim));
      }
    }
  }
  return out;
}

DatasetSpec split_dataset(DatasetSpec spec, std::uint64_t seed) {
  const std::size_t n = spec.records.size();
  if (n < 5) {
    throw ValidationError("dataset '" + spec.name + "' has " + std::to_string(n) +
                          " records; splitting needs at least 5");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(n_train)));
  spec.split.assign(n, Split::Test);
  for (std::size_t k = 0; k < n_train; ++k)
    spec.split[order[k]] = k < n_val ? Split::Val : Split::Train;
  return spec;
}

std::vector<std::vector<std::size_t>> plan_batches(std::vector<std::size_t> indices,
                                                   std::size_t batch_size,
                                                   std::uint64_t shuffle_seed) {
  if (indices.empty()) throw ValidationError("cannot batch an empty split");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t stop = std::min(indices.size(), start + batch_size);
    std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(stop));
    if (batch.size() < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), batch.begin(), batch.end());
    } else {
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

PaddedBatch pad_batch(const LoadedDataset& data, std::size_t dataset_index,
                      const std::vector<std::size_t>& records) {
  std::vector<const Tensor*> videos;
  PaddedBatch batch;
  for (std::size_t r : records) {
    videos.push_back(&data.features.at(r));
    batch.mos.push_back(data.spec.records.at(r).mos);
  }
  PaddedFeatures padded = pad_sequences(videos);
  batch.features = std::move(padded.features);
  batch.lengths = std::move(padded.lengths);
  batch.dataset = dataset_index;
  batch.records = records;
  return batch;
}

std::vector<PaddedBatch> make_batches(const LoadedDataset& data, std::size_t dataset_index,
                                      Split split, std::size_t batch_size,
                                      std::uint64_t seed, int epoch) {
  const auto indices = data.spec.indices(split);
  if (indices.empty()) {
    throw ValidationError("dataset '" + data.spec.name + "' has an empty " +
                          std::string(to_string(split)) + " split");
  }
  std::vector<PaddedBatch> out;
  for (const auto& records :
       plan_batches(indices, batch_size, derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch))))
    out.push_back(pad_batch(data, dataset_index, records));
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               double learning_rate, const AdamConfig& config,
               const TrainablePredicate& trainable) {
  std::vector<Tensor*> p;
  std::vector<std::string> names;
  params.visit([&](const std::string& name, Tensor& t) {
    p.push_back(&t);
    names.push_back(name);
  });
  std::vector<const Tensor*> g;
  grads.visit([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  if (p.size() != g.size()) {
    throw DimensionError("adam: " + std::to_string(g.size()) + " gradients for " +
                         std::to_string(p.size()) + " parameters");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->shape() != g[i]->shape()) {
      throw DimensionError("adam: gradient of " + names[i] + " has shape " +
                           shape_str(g[i]->shape()) + ", parameter " + shape_str(p[i]->shape()));
    }
    if (!g[i]->all_finite()) throw NumericError("adam: non-finite gradient for " + names[i]);
  }
  if (state.first.empty()) {
    for (const Tensor* t : p) {
      state.first.push_back(Tensor::zeros_like(*t));
      state.second.push_back(Tensor::zeros_like(*t));
    }
  } else if (state.first.size() != p.size()) {
    throw DimensionError("adam: optimizer state does not match parameters");
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, step);
  const double c2 = 1.0 - std::pow(config.beta2, step);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (trainable && !trainable(names[i])) continue;
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t k = 0; k < p[i]->size(); ++k) {
      const double gk = (*g[i])[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      (*p[i])[k] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
    }
  }
}

bool BestCheckpoint::offer(int epoch, double score, const ModelParams& params) {
  if (!empty() && !(score > score_)) return false;
  epoch_ = epoch;
  score_ = score;
  params_ = params;
  return true;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  if (!loss.any()) throw ConfigError("at least one loss component must be enabled");
  if (reduced_dim == 0 || hidden_dim == 0) throw ConfigError("model dimensions must be positive");
  pooling.validate();
}

std::string EpochLog::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["overall_loss"] = overall_loss;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : groups) {
    j["groups"].push_back({{"name", g.name},
                           {"loss", g.loss},
                           {"rel", g.rel},
                           {"lin", g.lin},
                           {"err", g.err},
                           {"weight", g.weight}});
  }
  j["validation"] = nlohmann::json::array();
  for (const auto& v : validation)
    j["validation"].push_back({{"name", v.name}, {"srocc", v.srocc}, {"n", v.n}});
  j["val_weighted_srocc"] = val_weighted_srocc;
  return j.dump();
}

TrainablePredicate trainable_for(AlignmentMode mode) {
  if (mode == AlignmentMode::DatasetSpecific) return {};
  return [](const std::string& name) { return name.rfind("align.", 0) != 0; };
}

std::vector<double> predict_relative(const ModelParams& params, const PoolingConfig& cfg,
                                     const LoadedDataset& data,
                                     const std::vector<std::size_t>& records) {
  std::vector<const Tensor*> videos;
  for (std::size_t r : records) videos.push_back(&data.features.at(r));
  std::vector<double> out;
  for (const QualityTriple& t : predict_many(videos, params, cfg)) out.push_back(t.q_r);
  return out;
}

namespace {

ModelParams gradients_of(const ad::Tape& tape, const ModelVars& vars,
                         const ModelParams& like) {
  std::vector<Tensor> grads;
  vars.visit([&](const std::string&, const ad::Var& v) { grads.push_back(tape.grad(v)); });
  ModelParams out = like;
  std::size_t k = 0;
  out.visit([&](const std::string&, Tensor& t) { t = std::move(grads[k++]); });
  return out;
}

double validation_srocc(const ModelParams& params, const PoolingConfig& cfg,
                        const LoadedDataset& data, const std::vector<std::size_t>& val) {
  std::vector<double> mos;
  for (std::size_t r : val) mos.push_back(data.spec.records[r].mos);
  try {
    return metrics::srocc(predict_relative(params, cfg, data, val), mos);
  } catch (const NumericError&) {
    return 0.0;  // constant predictions or labels
  }
}

// Per-dataset stream of batches that reshuffles whenever it runs dry.
class BatchStream {
 public:
  BatchStream(const LoadedDataset& data, std::size_t index, std::size_t batch_size,
              std::uint64_t seed)
      : data_(data), index_(index), batch_size_(batch_size), seed_(seed),
        train_(data.spec.indices(Split::Train)) {}

  void start_epoch(int epoch) {
    epoch_ = epoch;
    cycle_ = 0;
    refill();
  }
  std::size_t batches_per_cycle() const { return plan_.size(); }
  PaddedBatch next() {
    if (pos_ == plan_.size()) {
      ++cycle_;
      refill();
    }
    return pad_batch(data_, index_, plan_[pos_++]);
  }

 private:
  void refill() {
    std::uint64_t s = derive_seed(seed_, "shuffle", static_cast<std::uint64_t>(epoch_));
    if (cycle_ > 0) s = derive_seed(s, "recycle", cycle_);
    plan_ = plan_batches(train_, batch_size_, s);
    pos_ = 0;
  }

  const LoadedDataset& data_;
  std::size_t index_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::size_t> train_;
  std::vector<std::vector<std::size_t>> plan_;
  std::size_t pos_ = 0;
  int epoch_ = 0;
  std::uint64_t cycle_ = 0;
};

}  // namespace

TrainResult train(const std::vector<LoadedDataset>& datasets, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (datasets.empty()) throw ConfigError("training needs at least one dataset");
  const std::size_t feature_dim = datasets.front().features.empty()
                                      ? 0
                                      : datasets.front().features.front().dim(1);
  for (const LoadedDataset& d : datasets) {
    d.spec.validate();
    if (!d.spec.has_split()) throw ConfigError("dataset '" + d.spec.name + "' has no split");
    if (d.spec.indices(Split::Train).size() < 2) {
      throw ConfigError("dataset '" + d.spec.name + "' needs at least 2 training videos");
    }
    if (d.spec.indices(Split::Val).empty()) {
      throw ConfigError("dataset '" + d.spec.name + "' has an empty validation split");
    }
    for (const Tensor& f : d.features) {
      if (f.dim(1) != feature_dim) throw DimensionError("datasets disagree on feature dim");
    }
  }

  // Initialisation: weights, alignments, then the nonlinear map from a
  // calibration forward pass.
  std::mt19937_64 init_rng(derive_seed(config.seed, "init"));
  ModelParams params = init_model({feature_dim, config.reduced_dim, config.hidden_dim}, init_rng);
  for (const LoadedDataset& d : datasets)
    add_alignment(params, d.spec.name, d.spec.scale(), d.spec.mos_min);
  {
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t d = 0; d < datasets.size(); ++d)
      for (std::size_t r : datasets[d].spec.indices(Split::Train)) pool.emplace_back(d, r);
    std::mt19937_64 cal_rng(derive_seed(config.seed, "calibration"));
    std::shuffle(pool.begin(), pool.end(), cal_rng);
    pool.resize(std::min(pool.size(), config.calibration_videos));
    std::vector<const Tensor*> videos;
    for (const auto& [d, r] : pool) videos.push_back(&datasets[d].features[r]);
    std::vector<double> qr;
    for (const QualityTriple& t : predict_many(videos, params, config.pooling)) qr.push_back(t.q_r);
    const auto beta = init_nonlinear_map(qr);
    std::copy(beta.begin(), beta.end(), params.beta.data().begin());
  }

  const bool pooled = config.alignment_mode == AlignmentMode::LinearRescale;
  std::vector<LoadedDataset> pool_storage;
  std::vector<const LoadedDataset*> groups;
  if (pooled) {
    LoadedDataset all;
    all.spec.name = "pooled";
    all.spec.mos_min = 0.0;
    all.spec.mos_max = 1.0;
    for (const LoadedDataset& d : datasets) {
      for (std::size_t r : d.spec.indices(Split::Train)) {
        VideoRecord rec = d.spec.records[r];
        rec.video_id = d.spec.name + "/" + rec.video_id;
        rec.mos = (rec.mos - d.spec.mos_min) / d.spec.scale();
        all.spec.records.push_back(std::move(rec));
        all.spec.split.push_back(Split::Train);
        all.features.push_back(d.features[r]);
      }
    }
    pool_storage.push_back(std::move(all));
    groups.push_back(&pool_storage.front());
  } else {
    for (const LoadedDataset& d : datasets) groups.push_back(&d);
  }

  const TrainablePredicate trainable = trainable_for(config.alignment_mode);
  TrainResult result;
  result.initial = params;
  AdamState adam;
  BestCheckpoint best;

  std::vector<BatchStream> streams;
  for (std::size_t g = 0; g < groups.size(); ++g)
    streams.emplace_back(*groups[g], g, config.batch_size, config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::size_t steps = 0;
    for (BatchStream& s : streams) {
      s.start_epoch(epoch);
      steps = std::max(steps, s.batches_per_cycle());
    }
    EpochLog log;
    log.epoch = epoch;
    log.steps = steps;
    log.groups.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) log.groups[g].name = groups[g]->spec.name;

    for (std::size_t step = 0; step < steps; ++step) {
      ad::Tape tape;
      const ModelVars vars = bind_model(tape, params, trainable);
      std::vector<ad::Var> totals;
      std::vector<DatasetLoss> parts;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const PaddedBatch batch = streams[g].next();
        const BatchOutputs out =
            forward_batch(vars, tape.constant(batch.features), batch.lengths, config.pooling,
                          pooled ? std::nullopt : std::optional<std::size_t>(g));
        BatchPredictions bp{out.q_r, out.q_p, pooled ? out.q_p : *out.q_s, batch.mos,
                            groups[g]->spec.scale()};
        parts.push_back(dataset_loss(bp, config.loss));
        totals.push_back(parts.back().total);
      }
      const OverallLoss overall = overall_loss(totals);
      tape.backward(overall.total);
      adam_step(params, gradients_of(tape, vars, params), adam, config.learning_rate,
                config.adam, trainable);

      log.overall_loss += overall.total.value().item();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& st = log.groups[g];
        st.loss += parts[g].total.value().item();
        st.rel += parts[g].rel;
        st.lin += parts[g].lin;
        st.err += parts[g].err;
        st.weight += overall.weights[g];
      }
    }
    const double inv = 1.0 / static_cast<double>(steps);
    log.overall_loss *= inv;
    for (auto& st : log.groups) {
      st.loss *= inv;
      st.rel *= inv;
      st.lin *= inv;
      st.err *= inv;
      st.weight *= inv;
    }
    std::vector<std::pair<double, std::size_t>> val_scores;
    for (const LoadedDataset& d : datasets) {
      const auto val = d.spec.indices(Split::Val);
      ValidationStats v{d.spec.name, validation_srocc(params, config.pooling, d, val), val.size()};
      val_scores.emplace_back(v.srocc, v.n);
      log.validation.push_back(std::move(v));
    }
    log.val_weighted_srocc = metrics::weighted_overall(val_scores);
    best.offer(epoch, log.val_weighted_srocc, params);
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }

  result.best = best.params();
  result.best_epoch = best.epoch();
  result.best_val_srocc = best.score();
  return result;
}

}  // namespace vqa
