// cband — command-line front end for the banding-quality toolkit.
//
// Subcommands: extract, score, train, benchmark, sureal, synth. All machine
// output is JSON (schema_version field included); human/tabular output is
// CSV; timings go to stdout only. Exit codes: 0 success, 1 runtime failure,
// 2 usage error. Failures print one machine-readable JSON object on stderr:
//   {"error": {"kind": "<ErrorKind name>", "message": "..."}}

#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cband/cband.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

[[noreturn]] void fail(cband::ErrorKind kind, const std::string& message) {
  throw cband::Error(kind, message);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty() || !fs::exists(path))
    fail(cband::ErrorKind::InvalidArgument, what + " not found: " + path);
}

std::string sanitize_id(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}

std::string path_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

void write_text_file(const std::string& path, const std::string& text) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(cband::ErrorKind::IoError, "cannot open for writing: " + path);
  out << text;
  if (!out) fail(cband::ErrorKind::IoError, "failed writing: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(cband::ErrorKind::IoError, "cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(cband::ErrorKind::ParseError,
         path + ": invalid JSON: " + std::string(e.what()));
  }
}

// --- sampling -----------------------------------------------------------------------

cband::SamplingPolicy parse_sampling(const std::string& s) {
  if (s == "every-frame") return cband::SamplingPolicy::every_frame();
  if (s == "per-second") return cband::SamplingPolicy::once_per_second();
  if (s.rfind("every-n:", 0) == 0) {
    const std::string num = s.substr(8);
    size_t used = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != num.size() || n < 1)
      fail(cband::ErrorKind::InvalidArgument,
           "--sampling every-n:N needs a positive integer, got \"" + num + "\"");
    return cband::SamplingPolicy::every_n(uint32_t(n));
  }
  fail(cband::ErrorKind::InvalidArgument,
       "--sampling must be every-frame, every-n:N, or per-second; got \"" + s +
           "\"");
}

// Declares a frame rate on top of a stream that lacks one (image sequences).
class FpsOverrideStream final : public cband::FrameStream {
 public:
  FpsOverrideStream(std::unique_ptr<cband::FrameStream> inner, double fps)
      : inner_(std::move(inner)), fps_(fps) {}
  std::optional<cband::Frame> next() override { return inner_->next(); }
  std::optional<double> frame_rate() const override { return fps_; }

 private:
  std::unique_ptr<cband::FrameStream> inner_;
  double fps_;
};

std::unique_ptr<cband::FrameStream> open_input(const std::string& path,
                                               double fps_override,
                                               const std::string& pattern) {
  require_file(path, "--input");
  std::unique_ptr<cband::FrameStream> stream;
  if (fs::is_directory(path)) {
    stream = cband::open_image_sequence(path, pattern);
  } else {
    std::string ext = fs::path(path).extension().string();
    for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".y4m") {
      stream = cband::open_y4m(path);
    } else if (ext == ".png" || ext == ".bmp") {
      std::vector<cband::Frame> one;
      one.push_back(cband::decode_image_file(path));
      stream = std::make_unique<cband::MemoryFrameStream>(std::move(one));
    } else {
      fail(cband::ErrorKind::UnsupportedFormat,
           path + ": expected a .y4m file, a .png/.bmp image, or a directory");
    }
  }
  if (fps_override > 0)
    stream = std::make_unique<FpsOverrideStream>(std::move(stream), fps_override);
  return stream;
}

// --- feature extraction (shared by extract and score --input) ------------------------

struct ExtractOptions {
  std::string input;
  std::string backbone_manifest;
  std::string sampling = "every-frame";
  std::string feature_mode = "ggd";
  std::string pattern = "*.png";
  double fps = 0.0;
  double mscn_sigma = 0.0;  // 0 => default K/3
  unsigned jobs = 1;
};

struct ExtractResult {
  cband::FeatureCache cache;
  std::string backbone_name;
  int stage_index = 0;
  double decode_ms = 0.0;
  double inference_ms = 0.0;
  double nss_ms = 0.0;
  std::vector<double> frame_inference_ms;  // aligned with cache.frames
  std::vector<double> frame_nss_ms;
};

ExtractResult run_extraction(const ExtractOptions& opt) {
  const cband::SamplingPolicy policy = parse_sampling(opt.sampling);
  const cband::FeatureMode mode = cband::feature_mode_from_name(opt.feature_mode);
  const cband::GaussianWindow window = cband::build_window(3, 3, opt.mscn_sigma);
  const cband::BackboneHandle backbone =
      cband::load_backbone(opt.backbone_manifest);

  ExtractResult result;
  result.backbone_name = backbone.name;
  result.stage_index = backbone.stage_index;

  const Clock::time_point t_decode = Clock::now();
  auto stream = open_input(opt.input, opt.fps, opt.pattern);
  std::vector<cband::Frame> frames = cband::sample_frames(*stream, policy);
  result.decode_ms = ms_since(t_decode);
  if (frames.empty()) fail(cband::ErrorKind::NoFrames, opt.input + ": no frames");

  const size_t n = frames.size();
  std::vector<cband::NSSFeatureVector> features(n);
  result.frame_inference_ms.assign(n, 0.0);
  result.frame_nss_ms.assign(n, 0.0);
  uint32_t channels = 0;

  // Frames are processed independently; with --jobs > 1 a stride-assigned
  // thread pool fills a per-frame slot table, so output order (and therefore
  // the cache bytes) never depends on the job count.
  const unsigned jobs =
      std::max(1u, std::min<unsigned>(opt.jobs, unsigned(n)));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&](unsigned tid) {
    try {
      for (size_t i = tid; i < n; i += jobs) {
        const Clock::time_point t_inf = Clock::now();
        const cband::BackboneInput input = cband::to_backbone_input(frames[i]);
        const cband::ActivationMaps maps =
            cband::extract_activation_maps(backbone, input);
        result.frame_inference_ms[i] = ms_since(t_inf);
        const Clock::time_point t_nss = Clock::now();
        features[i] = cband::frame_features(maps, mode, window);
        features[i].frame_index = frames[i].frame_index;
        result.frame_nss_ms[i] = ms_since(t_nss);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  channels = uint32_t(features.front().values.size() /
                      cband::feature_mode_width(mode));
  result.cache.channels = channels;
  result.cache.mode = mode;
  result.cache.frames = std::move(features);
  for (size_t i = 0; i < n; ++i) {
    result.inference_ms += result.frame_inference_ms[i];
    result.nss_ms += result.frame_nss_ms[i];
  }
  return result;
}

void print_extract_timings(const ExtractResult& r) {
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  for (size_t i = 0; i < r.cache.frames.size(); ++i)
    std::cout << "frame " << r.cache.frames[i].frame_index << ": inference "
              << r.frame_inference_ms[i] << " ms, nss " << r.frame_nss_ms[i]
              << " ms\n";
  std::cout << "stages: decode " << r.decode_ms << " ms | inference "
            << r.inference_ms << " ms | nss " << r.nss_ms << " ms\n";
}

// --- MOS tables -----------------------------------------------------------------------

struct MosRow {
  std::string video_id;
  int64_t content_id = 0;
  double mos = 0.0;
};

// CSV with exact header "video_id,content_id,mos".
std::vector<MosRow> parse_mos_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  std::vector<MosRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "video_id,content_id,mos")
        fail(cband::ErrorKind::ParseError,
             path + ": expected header \"video_id,content_id,mos\", got \"" +
                 line + "\"");
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 3)
      fail(cband::ErrorKind::ParseError,
           path + ": line " + std::to_string(line_no) + ": expected 3 fields");
    MosRow row;
    row.video_id = fields[0];
    try {
      size_t used = 0;
      row.content_id = std::stoll(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
      row.mos = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      fail(cband::ErrorKind::ParseError,
           path + ": line " + std::to_string(line_no) + ": bad numeric field");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    fail(cband::ErrorKind::EmptyInput, path + ": no data rows");
  return rows;
}

std::vector<cband::VideoRecord> load_labeled_videos(
    const std::string& features_dir, const std::string& mos_csv) {
  require_file(features_dir, "--features-dir");
  if (!fs::is_directory(features_dir))
    fail(cband::ErrorKind::InvalidArgument,
         "--features-dir is not a directory: " + features_dir);
  require_file(mos_csv, "--mos");
  std::vector<cband::VideoRecord> videos;
  for (const MosRow& row : parse_mos_csv(mos_csv)) {
    const fs::path cache_path = fs::path(features_dir) / (row.video_id + ".cbnd");
    if (!fs::exists(cache_path))
      fail(cband::ErrorKind::DataIntegrityError,
           "no feature cache for video '" + row.video_id +
               "': " + cache_path.string());
    const cband::FeatureCache cache =
        cband::read_feature_cache(cache_path.string());
    cband::VideoRecord rec;
    rec.video_id = row.video_id;
    rec.content_id = row.content_id;
    rec.mos = row.mos;
    for (const auto& f : cache.frames) rec.frame_features.push_back(f.values);
    videos.push_back(std::move(rec));
  }
  return videos;
}

cband::TrainConfig train_config_from_json(const json& j) {
  cband::TrainConfig cfg;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  return cfg;
}

// --- subcommands ----------------------------------------------------------------------

struct ExtractArgs {
  ExtractOptions opt;
  std::string out;
};

void cmd_extract(const ExtractArgs& args) {
  const ExtractResult r = run_extraction(args.opt);
  cband::write_feature_cache(args.out, r.cache);
  print_extract_timings(r);
  std::cout << "wrote " << r.cache.frames.size() << " frame records ("
            << r.cache.channels << " channels, "
            << cband::feature_mode_name(r.cache.mode) << ") to " << args.out
            << "\n";
}

struct ScoreArgs {
  ExtractOptions opt;  // used when --input is given
  std::string features;
  std::string model;
  std::string out;
};

std::string model_identity(const cband::MLPModel& m) {
  std::string id = m.backbone_name.empty() ? "mlp" : m.backbone_name + "-mlp";
  return id + "-" + cband::feature_mode_name(m.feature_mode);
}

void cmd_score(const ScoreArgs& args) {
  require_file(args.model, "--model");
  const cband::MLPModel model = cband::load_model(args.model);

  cband::FeatureCache cache;
  std::string video_id;
  std::string sampling = "cache";
  double regression_ms = 0.0;
  if (!args.features.empty()) {
    require_file(args.features, "--features");
    cache = cband::read_feature_cache(args.features);
    video_id = path_stem(args.features);
  } else {
    if (args.opt.backbone_manifest.empty())
      fail(cband::ErrorKind::InvalidArgument,
           "score --input needs --backbone");
    video_id = path_stem(args.opt.input);
    sampling = args.opt.sampling;

    // CBAND_CACHE_DIR relocates (and persists) the intermediate feature
    // cache; the key covers everything the features depend on.
    std::string cache_path;
    if (const char* dir = std::getenv("CBAND_CACHE_DIR"); dir && *dir) {
      fs::create_directories(dir);
      cache_path =
          (fs::path(dir) /
           (sanitize_id(video_id) + "__" +
            sanitize_id(path_stem(args.opt.backbone_manifest)) + "__" +
            sanitize_id(args.opt.feature_mode) + "__" +
            sanitize_id(args.opt.sampling) + ".cbnd"))
              .string();
    }
    if (!cache_path.empty() && fs::exists(cache_path)) {
      std::cout << "[cache] hit " << cache_path << "\n";
      cache = cband::read_feature_cache(cache_path);
    } else {
      ExtractResult r = run_extraction(args.opt);
      print_extract_timings(r);
      cache = std::move(r.cache);
      // Features persist as f32; quantize the in-memory copy the same way so
      // the score is bit-identical whether or not a cache file mediates.
      for (auto& f : cache.frames)
        for (double& v : f.values) v = double(float(v));
      if (!cache_path.empty()) {
        cband::write_feature_cache(cache_path, cache);
        std::cout << "[cache] miss, wrote " << cache_path << "\n";
      }
    }
  }
  if (cache.frames.empty())
    fail(cband::ErrorKind::NoFrames, "feature cache holds no frames");

  const Clock::time_point t_reg = Clock::now();
  std::vector<double> frame_scores;
  frame_scores.reserve(cache.frames.size());
  for (const auto& f : cache.frames)
    frame_scores.push_back(cband::mlp_forward(model, f.values));
  const double score = cband::video_score(frame_scores);
  regression_ms = ms_since(t_reg);

  json out;
  out["schema_version"] = kSchemaVersion;
  out["video_id"] = video_id;
  out["frame_scores"] = frame_scores;
  out["video_score"] = score;
  out["model_id"] = model_identity(model);
  out["sampling"] = sampling;
  write_text_file(args.out, out.dump(2) + "\n");
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "regression: " << regression_ms << " ms\n";
  std::cout << "video " << video_id << ": score " << std::setprecision(6)
            << score << " over " << frame_scores.size() << " frames -> "
            << args.out << "\n";
}

struct TrainArgs {
  std::string features_dir;
  std::string mos;
  std::string cfg;
  std::string out;
  std::string log;
  std::string backbone_name;
};

void cmd_train(const TrainArgs& args) {
  cband::TrainConfig cfg;
  if (!args.cfg.empty()) {
    require_file(args.cfg, "--cfg");
    cfg = train_config_from_json(parse_json_file(args.cfg));
  }
  const std::vector<cband::VideoRecord> videos =
      load_labeled_videos(args.features_dir, args.mos);

  std::vector<cband::LabeledFeatureRow> rows;
  for (const auto& v : videos)
    for (size_t i = 0; i < v.frame_features.size(); ++i)
       rows.push_back({v.content_id, int64_t(i), v.frame_features[i], v.mos});
  if (rows.empty()) fail(cband::ErrorKind::EmptyInput, "no training rows");

  const uint32_t dim = uint32_t(rows.front().features.size());
  cband::MLPModel model = cband::mlp_init(dim, cfg.seed);
  model.backbone_name = args.backbone_name;

  const Clock::time_point t0 = Clock::now();
  std::vector<double> epoch_losses;
  model = cband::train(std::move(model), rows, cfg, &epoch_losses);
  const double train_ms = ms_since(t0);

  cband::save_model(model, args.out);
  std::ostringstream log;
  log << "epoch,loss\n";
  log.precision(10);
  for (size_t e = 0; e < epoch_losses.size(); ++e)
    log << (e + 1) << ',' << epoch_losses[e] << '\n';
  const std::string log_path =
      args.log.empty() ? args.out + ".log.csv" : args.log;
  write_text_file(log_path, log.str());

  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "trained " << dim << "-dim model on " << rows.size()
            << " frame rows from " << videos.size() << " videos in "
            << train_ms << " ms\n";
  std::cout << "final epoch loss " << std::setprecision(6)
            << (epoch_losses.empty() ? 0.0 : epoch_losses.back()) << " -> "
            << args.out << " (log: " << log_path << ")\n";
}

struct BenchmarkArgs {
  std::string features_dir;
  std::string mos;
  std::string splits;
  std::string out;
  std::string csv;
};

void cmd_benchmark(const BenchmarkArgs& args) {
  cband::SplitConfig split_cfg;
  cband::TrainConfig train_cfg;
  cband::LogisticForm form = cband::LogisticForm::Standard;
  if (!args.splits.empty()) {
    require_file(args.splits, "--splits");
    const json j = parse_json_file(args.splits);
    split_cfg.repeats = j.value("repeats", split_cfg.repeats);
    split_cfg.train_fraction = j.value("train_fraction", split_cfg.train_fraction);
    split_cfg.seed = j.value("seed", split_cfg.seed);
    if (j.contains("train")) train_cfg = train_config_from_json(j.at("train"));
    const std::string form_name = j.value("logistic_form", "standard");
    if (form_name == "standard") {
      form = cband::LogisticForm::Standard;
    } else if (form_name == "printed") {
      form = cband::LogisticForm::Printed;
    } else {
      fail(cband::ErrorKind::InvalidArgument,
           "logistic_form must be \"standard\" or \"printed\", got \"" +
               form_name + "\"");
    }
  }

  const std::vector<cband::VideoRecord> videos =
      load_labeled_videos(args.features_dir, args.mos);
  std::vector<int64_t> contents;
  for (const auto& v : videos) contents.push_back(v.content_id);
  const cband::SplitPlan plan = cband::make_splits(contents, split_cfg);

  const Clock::time_point t0 = Clock::now();
  const cband::BenchmarkReport report =
      cband::run_benchmark(videos, plan, train_cfg, form);
  const double bench_ms = ms_since(t0);

  cband::write_benchmark_json(report, args.out);
  if (!args.csv.empty()) cband::write_benchmark_csv(report, args.csv);

  std::cout.setf(std::ios::fixed);
  std::cout.precision(4);
  std::cout << "benchmark: " << report.repeats.size() << " repeats over "
            << report.n_videos << " videos";
  if (report.mean_srocc) std::cout << ", mean srocc " << *report.mean_srocc;
  if (report.mean_plcc) std::cout << ", mean plcc " << *report.mean_plcc;
  std::cout << " (" << std::setprecision(2) << bench_ms << " ms) -> "
            << args.out << "\n";
}

struct SurealArgs {
  std::string ratings;
  std::string out;
  bool with_ambiguity = true;
  unsigned max_iter = 500;
  double tol = 1e-8;
};

void cmd_sureal(const SurealArgs& args) {
  require_file(args.ratings, "--ratings");
  const cband::RatingsTable table =
      cband::parse_ratings_csv(read_text_file(args.ratings));
  cband::SurealConfig cfg;
  cfg.with_ambiguity = args.with_ambiguity;
  cfg.max_iter = args.max_iter;
  cfg.tol = args.tol;
  const cband::MOSEstimate est = cband::estimate(table, cfg);
  json out = cband::mos_estimate_json(est);
  out["schema_version"] = kSchemaVersion;
  write_text_file(args.out, out.dump(2) + "\n");
  std::cout << "sureal: " << est.stimulus_ids.size() << " stimuli, "
            << est.subject_ids.size() << " subjects, "
            << (est.converged ? "converged" : "iteration cap") << " after "
            << est.iterations << " sweeps, loglik " << est.loglik << " -> "
            << args.out << "\n";
}

struct SynthArgs {
  std::string spec;
  std::string out;
};

void cmd_synth(const SynthArgs& args) {
  require_file(args.spec, "--spec");
  const cband::SynthJob job = cband::synth_job_from_json(parse_json_file(args.spec));
  const json sidecar = cband::write_stimulus_set(job, args.out);
  std::cout << "synth: " << sidecar.at("severities").size()
            << " severities (bits";
  for (const auto& s : sidecar.at("severities"))
    std::cout << " " << s.at("bits").get<int>();
  std::cout << ") -> " << args.out << "\n";
}

int exit_code_for(const cband::Error& e) {
  switch (e.kind()) {
    case cband::ErrorKind::InvalidArgument:
    case cband::ErrorKind::ManifestMissing:
      return 2;  // bad invocation: flag values or referenced files
    default:
      return 1;  // runtime failure
  }
}

void add_extract_options(CLI::App* cmd, ExtractOptions* opt) {
  cmd->add_option("--input", opt->input,
                  ".y4m file, single image, or image directory")
      ->required();
  cmd->add_option("--backbone", opt->backbone_manifest,
                  "backbone manifest JSON (model .onnx sits next to it)");
  cmd->add_option("--sampling", opt->sampling,
                  "every-frame | every-n:N | per-second");
  cmd->add_option("--feature-mode", opt->feature_mode,
                  "ggd | mean-std | alpha-only | sigma-only");
  cmd->add_option("--pattern", opt->pattern,
                  "filename glob for image directories");
  cmd->add_option("--fps", opt->fps,
                  "declare a frame rate for inputs that lack one");
  cmd->add_option("--mscn-sigma", opt->mscn_sigma,
                  "Gaussian window sigma (0 = default K/3)");
  cmd->add_option("--jobs", opt->jobs, "worker threads for frame extraction");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cband: no-reference banding quality toolkit"};
  app.require_subcommand(1);
  std::function<void()> run;

  ExtractArgs extract_args;
  CLI::App* extract = app.add_subcommand(
      "extract", "Extract NSS feature vectors into a .cbnd cache");
  add_extract_options(extract, &extract_args.opt);
  extract->get_option("--backbone")->required();
  extract->add_option("--out", extract_args.out, "output feature cache path")
      ->required();
  extract->callback([&] { run = [&] { cmd_extract(extract_args); }; });

  ScoreArgs score_args;
  CLI::App* score = app.add_subcommand(
      "score", "Score a video (or a feature cache) with a trained model");
  add_extract_options(score, &score_args.opt);
  score->get_option("--input")->required(false);
  score->add_option("--features", score_args.features,
                    "score a .cbnd cache instead of raw input");
  score->add_option("--model", score_args.model, "trained .cbmh model file")
      ->required();
  score->add_option("--out", score_args.out, "output score JSON path")
      ->required();
  score->callback([&] {
    run = [&] {
      if (score_args.features.empty() == score_args.opt.input.empty())
        fail(cband::ErrorKind::InvalidArgument,
             "score needs exactly one of --input or --features");
      cmd_score(score_args);
    };
  });

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train the regression head on cached features");
  train->add_option("--features-dir", train_args.features_dir,
                    "directory of <video_id>.cbnd caches")
      ->required();
  train->add_option("--mos", train_args.mos,
                    "CSV: video_id,content_id,mos")
      ->required();
  train->add_option("--cfg", train_args.cfg, "training config JSON");
  train->add_option("--out", train_args.out, "output model path")->required();
  train->add_option("--log", train_args.log,
                    "training log CSV (default: <out>.log.csv)");
  train->add_option("--backbone-name", train_args.backbone_name,
                    "backbone label stamped into the model file");
  train->callback([&] { run = [&] { cmd_train(train_args); }; });

  BenchmarkArgs bench_args;
  CLI::App* bench = app.add_subcommand(
      "benchmark", "Run repeated content-disjoint train/test evaluation");
  bench->add_option("--features-dir", bench_args.features_dir,
                    "directory of <video_id>.cbnd caches")
      ->required();
  bench->add_option("--mos", bench_args.mos, "CSV: video_id,content_id,mos")
      ->required();
  bench->add_option("--splits", bench_args.splits,
                    "split/train config JSON (defaults: 50 repeats, 80/20)");
  bench->add_option("--out", bench_args.out, "output report JSON path")
      ->required();
  bench->add_option("--csv", bench_args.csv, "also write a per-repeat CSV");
  bench->callback([&] { run = [&] { cmd_benchmark(bench_args); }; });

  SurealArgs sureal_args;
  CLI::App* sureal = app.add_subcommand(
      "sureal", "Recover subjective quality from raw ratings");
  sureal->add_option("--ratings", sureal_args.ratings,
                     "CSV: subject_id,stimulus_id,content_id,score")
      ->required();
  sureal->add_option("--out", sureal_args.out, "output estimate JSON path")
      ->required();
  sureal->add_flag("--with-ambiguity,!--no-ambiguity",
                   sureal_args.with_ambiguity,
                   "model per-content ambiguity (default on)");
  sureal->add_option("--max-iter", sureal_args.max_iter, "sweep cap");
  sureal->add_option("--tol", sureal_args.tol, "convergence tolerance");
  sureal->callback([&] { run = [&] { cmd_sureal(sureal_args); }; });

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a banding severity ladder from a job spec");
  synth->add_option("--spec", synth_args.spec, "synth job JSON")->required();
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->callback([&] { run = [&] { cmd_synth(synth_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    run();
  } catch (const cband::Error& e) {
    const json err{{"error", {{"kind", e.kind_name()}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    const json err{{"error", {{"kind", "InternalError"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
