// SPDX-License-Identifier: Apache-2.0
#include "vqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <sstream>

#include "vqa/errors.hpp"
#include "vqa/metrics.hpp"

namespace vqa {

using nlohmann::json;

std::string EvalReport::to_json() const {
  json j;
  j["run"] = run;
  j["datasets"] = json::array();
  for (const auto& d : datasets) {
    j["datasets"].push_back({{"name", d.name},
                             {"srocc", d.srocc},
                             {"krocc", d.krocc},
                             {"plcc", d.plcc},
                             {"rmse", d.rmse},
                             {"n", d.n},
                             {"aligned", d.aligned}});
  }
  j["weighted"] = {{"srocc", weighted_srocc}, {"plcc", weighted_plcc}};
  return j.dump(2);
}

EvalReport evaluate(const ModelParams& params, const PoolingConfig& cfg,
                    const std::vector<LoadedDataset>& datasets, std::optional<Split> split,
                    std::vector<ScatterRow>* scatter) {
  EvalReport report;
  std::vector<std::pair<double, std::size_t>> srocc_w, plcc_w;
  for (const LoadedDataset& data : datasets) {
    const bool aligned = params.alignment_index(data.spec.name).has_value();
    std::vector<std::size_t> records;
    if (split && aligned && data.spec.has_split()) {
      records = data.spec.indices(*split);
    } else {
      records.resize(data.spec.records.size());
      for (std::size_t i = 0; i < records.size(); ++i) records[i] = i;
    }
    if (records.empty()) {
      throw ValidationError("dataset '" + data.spec.name + "' has no records in the evaluated split");
    }
    std::vector<const Tensor*> videos;
    std::vector<double> mos;
    for (std::size_t r : records) {
      videos.push_back(&data.features.at(r));
      mos.push_back(data.spec.records[r].mos);
    }
    const auto triples = predict_many(
        videos, params, cfg,
        aligned ? std::optional<std::string_view>(data.spec.name) : std::nullopt);

    std::vector<double> pred, mapped;
    for (const QualityTriple& t : triples) pred.push_back(aligned ? *t.q_s : t.q_p);
    if (aligned) {
      mapped = pred;
    } else {
      mapped = metrics::fit_4pl(pred, mos).mapped;
    }
    DatasetMetrics m;
    m.name = data.spec.name;
    m.aligned = aligned;
    m.n = records.size();
    m.srocc = metrics::srocc(pred, mos);
    m.krocc = metrics::krocc(pred, mos);
    m.plcc = metrics::plcc(mapped, mos);
    m.rmse = metrics::rmse(mapped, mos);
    srocc_w.emplace_back(m.srocc, m.n);
    plcc_w.emplace_back(m.plcc, m.n);
    report.datasets.push_back(m);
    if (scatter) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        scatter->push_back({data.spec.name, data.spec.records[records[i]].video_id, pred[i],
                            mapped[i], mos[i]});
      }
    }
  }
  report.weighted_srocc = metrics::weighted_overall(srocc_w);
  report.weighted_plcc = metrics::weighted_overall(plcc_w);
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

json describe(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"median", median(v)}, {"mean", mean}, {"std", sd}};
}

}  // namespace

std::string summarize_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("no reports to summarize");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per;
  std::vector<std::string> order;
  std::vector<double> ws, wp;
  for (const EvalReport& r : reports) {
    for (const auto& d : r.datasets) {
      if (!per.count(d.name)) order.push_back(d.name);
      per[d.name].first.push_back(d.srocc);
      per[d.name].second.push_back(d.plcc);
    }
    ws.push_back(r.weighted_srocc);
    wp.push_back(r.weighted_plcc);
  }
  json j;
  j["runs"] = reports.size();
  j["datasets"] = json::array();
  for (const auto& name : order) {
    j["datasets"].push_back(
        {{"name", name}, {"srocc", describe(per[name].first)}, {"plcc", describe(per[name].second)}});
  }
  j["weighted"] = {{"srocc", describe(ws)}, {"plcc", describe(wp)}};
  return j.dump(2);
}

std::string scatter_to_csv(const std::vector<ScatterRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "dataset,video_id,pred,mapped,mos\n";
  for (const auto& r : rows)
    out << r.dataset << "," << r.video_id << "," << r.pred << "," << r.mapped << "," << r.mos << "\n";
  return out.str();
}

}  // namespace vqa
