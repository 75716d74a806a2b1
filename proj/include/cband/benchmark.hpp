#pragma once

// Benchmark harness: seeded content-disjoint train/test splits, repeated
// train-and-evaluate runs of the regression head over per-video feature
// sets, and JSON/CSV reporting. Video MOS is broadcast to that video's
// sampled frames for training; test-time frame scores are average-pooled
// back to a video score.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cband/errors.hpp"
#include "cband/metrics.hpp"
#include "cband/mlp.hpp"
#include "cband/rng.hpp"

namespace cband {

struct SplitConfig {
  uint32_t repeats = 50;
  double train_fraction = 0.8;
  uint64_t seed = 0;
};

struct SplitRepeat {
  std::vector<int64_t> train_ids;
  std::vector<int64_t> test_ids;
};

struct SplitPlan {
  SplitConfig config;
  std::vector<SplitRepeat> repeats;
};

inline SplitPlan make_splits(std::vector<int64_t> content_ids,
                             const SplitConfig& cfg) {
  std::sort(content_ids.begin(), content_ids.end());
  content_ids.erase(std::unique(content_ids.begin(), content_ids.end()),
                    content_ids.end());
  if (content_ids.size() < 5)
    throw Error(ErrorKind::InvalidArgument,
                "make_splits: needs at least 5 distinct contents, got " +
                    std::to_string(content_ids.size()));
  if (cfg.repeats < 1 || cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
    throw Error(ErrorKind::InvalidArgument, "make_splits: bad configuration");

  const size_t n = content_ids.size();
  const size_t n_train =
      size_t(std::llround(cfg.train_fraction * double(n)));
  if (n_train == 0 || n_train == n)
    throw Error(ErrorKind::InvalidArgument,
                "make_splits: train fraction leaves an empty side");

  SplitPlan plan;
  plan.config = cfg;
  plan.repeats.resize(cfg.repeats);
  for (uint32_t r = 0; r < cfg.repeats; ++r) {
    std::vector<int64_t> ids = content_ids;
    Rng rng(derive_seed(cfg.seed, r));
    rng.shuffle(ids);
    SplitRepeat& rep = plan.repeats[r];
    rep.train_ids.assign(ids.begin(), ids.begin() + int64_t(n_train));
    rep.test_ids.assign(ids.begin() + int64_t(n_train), ids.end());
    std::sort(rep.train_ids.begin(), rep.train_ids.end());
    std::sort(rep.test_ids.begin(), rep.test_ids.end());
  }
  return plan;
}

struct VideoRecord {
  std::string video_id;
  int64_t content_id = 0;
  double mos = 0.0;
  std::vector<std::vector<double>> frame_features;
};

// Every metric is optional: a repeat whose test side is too small (or whose
// predictions collapse to a constant) reports null for the affected entries
// rather than aborting the whole benchmark.
struct RepeatReport {
  uint32_t split_id = 0;
  std::optional<double> srocc;
  std::optional<double> krocc;
  std::optional<double> plcc;
  std::optional<double> rmse;
  std::optional<LogisticFit> logistic;
  size_t n_test_videos = 0;
};

struct BenchmarkReport {
  std::vector<RepeatReport> repeats;
  std::optional<double> mean_srocc;
  std::optional<double> mean_krocc;
  std::optional<double> mean_plcc;
  std::optional<double> mean_rmse;
  size_t n_videos = 0;
  uint32_t feature_dim = 0;
};

inline BenchmarkReport run_benchmark(const std::vector<VideoRecord>& videos,
                                     const SplitPlan& plan,
                                     const TrainConfig& train_cfg,
                                     LogisticForm form = LogisticForm::Standard) {
  if (videos.empty())
    throw Error(ErrorKind::EmptyInput, "run_benchmark: no videos");
  for (const auto& v : videos) {
    if (!std::isfinite(v.mos))
      throw Error(ErrorKind::DataIntegrityError,
                  "run_benchmark: video '" + v.video_id + "' has no valid MOS");
    if (v.frame_features.empty())
      throw Error(ErrorKind::DataIntegrityError,
                  "run_benchmark: video '" + v.video_id + "' has no features");
  }
  const uint32_t dim = uint32_t(videos.front().frame_features.front().size());
  for (const auto& v : videos)
    for (const auto& f : v.frame_features)
      if (f.size() != dim)
        throw Error(ErrorKind::DimensionMismatch,
                    "run_benchmark: feature dimension drift in video '" +
                        v.video_id + "'");

  BenchmarkReport report;
  report.n_videos = videos.size();
  report.feature_dim = dim;

  double sum_srocc = 0.0, sum_krocc = 0.0, sum_plcc = 0.0, sum_rmse = 0.0;
  size_t n_srocc = 0, n_krocc = 0, n_plcc = 0, n_rmse = 0;

  for (uint32_t r = 0; r < plan.repeats.size(); ++r) {
    const SplitRepeat& rep = plan.repeats[r];
    const std::set<int64_t> train_set(rep.train_ids.begin(), rep.train_ids.end());
    const std::set<int64_t> test_set(rep.test_ids.begin(), rep.test_ids.end());

    std::vector<LabeledFeatureRow> rows;
    for (const auto& v : videos) {
      if (!train_set.count(v.content_id)) continue;
      for (size_t f = 0; f < v.frame_features.size(); ++f) {
        LabeledFeatureRow row;
        row.content_id = v.content_id;
        row.frame_index = int64_t(f);
        row.features = v.frame_features[f];
        row.target = v.mos;  // video MOS broadcast to its frames
        rows.push_back(std::move(row));
      }
    }
    if (rows.empty())
      throw Error(ErrorKind::EmptyInput,
                  "run_benchmark: repeat " + std::to_string(r) +
                      " has no training frames");

    TrainConfig cfg = train_cfg;
    cfg.seed = derive_seed(train_cfg.seed, r);
    MLPModel model = cband::train(
        mlp_init(dim, derive_seed(train_cfg.seed, 0x100000u + r)), rows, cfg);

    std::vector<double> pred, mos;
    for (const auto& v : videos) {
      if (!test_set.count(v.content_id)) continue;
      std::vector<double> frame_scores;
      frame_scores.reserve(v.frame_features.size());
      for (const auto& f : v.frame_features)
        frame_scores.push_back(mlp_forward(model, f));
      pred.push_back(video_score(frame_scores));
      mos.push_back(v.mos);
    }

    RepeatReport rr;
    rr.split_id = r;
    rr.n_test_videos = pred.size();
    if (pred.size() >= 3) {
      rr.srocc = srocc(pred, mos);
      rr.krocc = krocc(pred, mos);
    }
    const bool constant_pred =
        std::all_of(pred.begin(), pred.end(),
                    [&](double p) { return p == pred.front(); });
    if (pred.size() >= 8 && !constant_pred) {
      rr.logistic = fit_logistic4(pred, mos, form);
      const PlccRmse pr = plcc_rmse(pred, mos, rr.logistic->params, form);
      rr.plcc = pr.plcc;
      rr.rmse = pr.rmse;
    }

    if (rr.srocc) {
      sum_srocc += *rr.srocc;
      ++n_srocc;
    }
    if (rr.krocc) {
      sum_krocc += *rr.krocc;
      ++n_krocc;
    }
    if (rr.plcc) {
      sum_plcc += *rr.plcc;
      ++n_plcc;
    }
    if (rr.rmse) {
      sum_rmse += *rr.rmse;
      ++n_rmse;
    }
    report.repeats.push_back(std::move(rr));
  }

  if (n_srocc) report.mean_srocc = sum_srocc / double(n_srocc);
  if (n_krocc) report.mean_krocc = sum_krocc / double(n_krocc);
  if (n_plcc) report.mean_plcc = sum_plcc / double(n_plcc);
  if (n_rmse) report.mean_rmse = sum_rmse / double(n_rmse);
  return report;
}

// --- reports -------------------------------------------------------------------

inline nlohmann::json benchmark_report_json(const BenchmarkReport& report) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json repeats = nlohmann::json::array();
  for (const auto& r : report.repeats) {
    nlohmann::json logistic = nullptr;
    if (r.logistic) {
      logistic = {{"beta1", r.logistic->params.beta1},
                  {"beta2", r.logistic->params.beta2},
                  {"beta3", r.logistic->params.beta3},
                  {"beta4", r.logistic->params.beta4},
                  {"form", r.logistic->form == LogisticForm::Standard
                               ? "standard"
                               : "printed"},
                  {"converged", r.logistic->converged}};
    }
    repeats.push_back({
        {"split_id", r.split_id},
        {"n_test_videos", r.n_test_videos},
        {"srocc", opt(r.srocc)},
        {"krocc", opt(r.krocc)},
        {"plcc", opt(r.plcc)},
        {"rmse", opt(r.rmse)},
        {"logistic", logistic},
    });
  }
  return nlohmann::json{
      {"n_videos", report.n_videos},
      {"feature_dim", report.feature_dim},
      {"repeats", repeats},
      {"mean",
       {{"srocc", opt(report.mean_srocc)},
        {"krocc", opt(report.mean_krocc)},
        {"plcc", opt(report.mean_plcc)},
        {"rmse", opt(report.mean_rmse)}}},
  };
}

inline void write_benchmark_json(const BenchmarkReport& report,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot open report for write: " + path);
  out << benchmark_report_json(report).dump(2) << "\n";
}

inline void write_benchmark_csv(const BenchmarkReport& report,
                                const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot open report for write: " + path);
  out << "split_id,n_test_videos,srocc,krocc,plcc,rmse\n";
  out.precision(10);
  auto cell = [&](const std::optional<double>& v) {
    if (v)
      out << *v;
    else
      out << "nan";
  };
  for (const auto& r : report.repeats) {
    out << r.split_id << "," << r.n_test_videos << ",";
    cell(r.srocc);
    out << ",";
    cell(r.krocc);
    out << ",";
    cell(r.plcc);
    out << ",";
    cell(r.rmse);
    out << "\n";
  }
}

}  // namespace cband
