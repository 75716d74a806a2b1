#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cband/detail/io.hpp"
#include "cband/errors.hpp"
#include "cband/mlp.hpp"
#include "cband/rng.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using cband::Error;
using cband::ErrorKind;
using cband::MLPModel;
using cband::TrainConfig;

namespace {

// --- initialization -----------------------------------------------------------

TEST(MlpInit, DimensionRuleQuartersWithFloorEight) {
  EXPECT_EQ(cband::mlp_init(1024, 7).layer_dims,
            (std::vector<uint32_t>{1024, 256, 64, 1}));
  EXPECT_EQ(cband::mlp_init(256, 7).layer_dims,
            (std::vector<uint32_t>{256, 64, 16, 1}));
  EXPECT_EQ(cband::mlp_init(20, 7).layer_dims,
            (std::vector<uint32_t>{20, 8, 8, 1}));
}

TEST(MlpInit, SameSeedIsBitwiseIdentical) {
  MLPModel a = cband::mlp_init(64, 7);
  MLPModel b = cband::mlp_init(64, 7);
  ASSERT_EQ(a.weights.size(), b.weights.size());
  for (size_t l = 0; l < a.weights.size(); ++l) {
    ASSERT_EQ(a.weights[l].size(), b.weights[l].size());
    for (size_t i = 0; i < a.weights[l].size(); ++i)
      ASSERT_EQ(a.weights[l][i], b.weights[l][i]);
  }
  MLPModel c = cband::mlp_init(64, 8);
  bool any_diff = false;
  for (size_t i = 0; i < a.weights[0].size(); ++i)
    any_diff |= a.weights[0][i] != c.weights[0][i];
  EXPECT_TRUE(any_diff) << "different seeds must give different weights";
}

TEST(MlpInit, HeUniformBoundsAndZeroBiases) {
  MLPModel m = cband::mlp_init(128, 3);
  for (size_t l = 0; l < m.n_layers(); ++l) {
    const double limit = std::sqrt(6.0 / double(m.layer_dims[l]));
    float max_abs = 0.0f;
    for (float w : m.weights[l]) {
      EXPECT_LE(std::abs(w), limit);
      max_abs = std::max(max_abs, std::abs(w));
    }
    // The draw should actually use the range, not collapse near zero.
    EXPECT_GT(max_abs, 0.5 * limit);
    for (float b : m.biases[l]) EXPECT_EQ(b, 0.0f);
  }
}

// --- forward -------------------------------------------------------------------

MLPModel hand_built_2221() {
  // dims [2, 2, 2, 1], every weight chosen for easy hand arithmetic.
  MLPModel m;
  m.layer_dims = {2, 2, 2, 1};
  m.dropout_rate = 0.2;
  m.weights = {{0.5f, -1.0f, 2.0f, 0.25f},   // W1 = [[0.5,-1],[2,0.25]]
               {1.0f, -0.5f, -2.0f, 1.5f},   // W2 = [[1,-0.5],[-2,1.5]]
               {0.75f, -1.25f}};             // W3 = [0.75, -1.25]
  m.biases = {{0.1f, -0.2f}, {0.0f, 0.3f}, {0.05f}};
  return m;
}

TEST(MlpForward, HandArithmeticOnToyNet) {
  MLPModel m = hand_built_2221();
  const std::vector<double> v = {1.0, 2.0};
  // z1 = [0.5·1 - 1·2 + 0.1, 2·1 + 0.25·2 - 0.2] = [-1.4, 2.3]; a1 = [0, 2.3]
  // z2 = [1·0 - 0.5·2.3 + 0, -2·0 + 1.5·2.3 + 0.3] = [-1.15, 3.75]; a2 = [0, 3.75]
  // out = 0.75·0 - 1.25·3.75 + 0.05 = -4.6375
  // Parameters are stored float32, so the hand arithmetic uses the rounded
  // bias values (0.1, -0.2, 0.3, 0.05 are not exact binary fractions).
  const double z1 = 2.0 * 1.0 + 0.25 * 2.0 + double(-0.2f);
  const double z2 = 1.5 * z1 + double(0.3f);
  const double expected = -1.25 * z2 + double(0.05f);
  EXPECT_NEAR(cband::mlp_forward(m, v), expected, 1e-15);
  EXPECT_NEAR(cband::mlp_forward(m, v), -4.6375, 1e-7);
}

TEST(MlpForward, ZeroWeightsYieldOutputBias) {
  MLPModel m = cband::mlp_init(16, 1);
  for (auto& layer : m.weights) std::fill(layer.begin(), layer.end(), 0.0f);
  m.biases.back()[0] = 42.5f;
  cband::Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(16);
    for (double& x : v) x = rng.uniform(-100.0, 100.0);
    EXPECT_DOUBLE_EQ(cband::mlp_forward(m, v), double(42.5f));
  }
}

TEST(MlpForward, InferenceIsDeterministicAndIgnoresRng) {
  MLPModel m = cband::mlp_init(32, 11);
  std::vector<double> v(32);
  cband::Rng data_rng(5);
  for (double& x : v) x = data_rng.normal();
  const double a = cband::mlp_forward(m, v);
  const double b = cband::mlp_forward(m, v);
  cband::Rng rng1(1), rng2(999);
  const double c = cband::mlp_forward(m, v, false, &rng1);
  const double d = cband::mlp_forward(m, v, false, &rng2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_EQ(a, d);
}

TEST(MlpForward, TrainingModeAppliesInvertedDropout) {
  MLPModel m = cband::mlp_init(64, 2);
  std::vector<double> v(64, 1.0);
  // With dropout active, repeated draws should not all coincide.
  cband::Rng rng(31);
  std::vector<double> outs;
  for (int i = 0; i < 8; ++i) outs.push_back(cband::mlp_forward(m, v, true, &rng));
  bool any_diff = false;
  for (double o : outs) any_diff |= o != outs[0];
  EXPECT_TRUE(any_diff);
  // Expectation argument: the kept units are scaled by 1/(1-p), so the
  // average over many masks approaches the no-dropout output.
  double sum = 0.0;
  const int trials = 4000;
  for (int i = 0; i < trials; ++i) sum += cband::mlp_forward(m, v, true, &rng);
  const double mean = sum / trials;
  const double reference = cband::mlp_forward(m, v);
  EXPECT_NEAR(mean, reference, 0.15 * std::abs(reference) + 0.05);
  // Training mode without an rng is a contract violation.
  EXPECT_THROW({ cband::mlp_forward(m, v, true, nullptr); }, Error);
}

TEST(MlpForward, DimensionMismatchThrowsShapeError) {
  MLPModel m = cband::mlp_init(16, 1);
  std::vector<double> v(15, 0.0);
  try {
    cband::mlp_forward(m, v);
    FAIL() << "expected ShapeError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeError);
  }
}

// --- Adam ----------------------------------------------------------------------

TEST(Adam, MatchesHandComputedFiveStepTrace) {
  // Spreadsheet recurrence with lr=0.1 on gradients [1,-0.5,2,-1,0.3].
  TrainConfig cfg;
  cfg.lr = 0.1;
  double p = 1.0, m1 = 0.0, m2 = 0.0;
  const double grads[5] = {1.0, -0.5, 2.0, -1.0, 0.3};
  const double expected[5] = {0.900000001, 0.8733662973709032,
                              0.8075551378428033, 0.781411923049386,
                              0.75296639131708};
  for (uint64_t t = 1; t <= 5; ++t) {
    p = cband::detail::adam_update(p, m1, m2, grads[t - 1], t, cfg);
    EXPECT_NEAR(p, expected[t - 1], 1e-12) << "step " << t;
  }
}

// --- gradient check -------------------------------------------------------------

double batch_l1(const MLPModel& m, const std::vector<cband::LabeledFeatureRow>& batch) {
  double sum = 0.0;
  for (const auto& row : batch)
    sum += std::abs(cband::mlp_forward(m, row.features) - row.target);
  return sum / double(batch.size());
}

// Collects every ReLU pre-activation and the loss residuals, to detect
// whether a finite-difference interval crosses a kink.
std::vector<double> kink_coordinates(const MLPModel& m,
                                     const std::vector<cband::LabeledFeatureRow>& batch) {
  std::vector<double> ks;
  for (const auto& row : batch) {
    cband::detail::ForwardTrace t = cband::detail::mlp_forward_trace(
        m, row.features.data(), row.features.size(), false, nullptr);
    for (size_t l = 0; l + 1 < t.z.size(); ++l)  // hidden layers only
      for (double z : t.z[l]) ks.push_back(z);
    ks.push_back(t.output - row.target);
  }
  return ks;
}

TEST(GradCheck, AnalyticMatchesCentralDifferences) {
  // L1 loss with ReLU activations is piecewise linear in each parameter, so
  // away from kinks the central difference is exact up to float rounding.
  // A coordinate is excluded when its ±h interval crosses an activation or
  // residual kink (the sign pattern differs between the two evaluations);
  // the stated 1e-6 margin catches only a subset of those crossings.
  const double h = 1e-4;
  int checked = 0, excluded = 0;
  for (uint64_t batch_seed = 1; batch_seed <= 5; ++batch_seed) {
    MLPModel m = cband::mlp_init(16, 100 + batch_seed);
    m.dropout_rate = 0.0;  // dropout is identity in inference-mode loss
    auto batch = fixtures::linear_target_rows(5, 16, 500 + batch_seed);

    // Analytic batch gradient.
    cband::detail::Gradients grads(m);
    for (const auto& row : batch) {
      cband::detail::ForwardTrace t = cband::detail::mlp_forward_trace(
          m, row.features.data(), row.features.size(), false, nullptr);
      cband::detail::mlp_backward_l1(m, t, row.target, 1.0 / batch.size(), grads);
    }

    for (size_t l = 0; l < m.n_layers(); ++l) {
      for (size_t i = 0; i < m.weights[l].size() + m.biases[l].size(); ++i) {
        const bool is_bias = i >= m.weights[l].size();
        const size_t j = is_bias ? i - m.weights[l].size() : i;
        float* slot = is_bias ? &m.biases[l][j] : &m.weights[l][j];
        const float w0 = *slot;

        *slot = float(double(w0) + h);
        const double hp = double(*slot) - double(w0);
        const double lp = batch_l1(m, batch);
        const auto kp = kink_coordinates(m, batch);
        *slot = float(double(w0) - h);
        const double hm = double(*slot) - double(w0);
        const double lm = batch_l1(m, batch);
        const auto km = kink_coordinates(m, batch);
        *slot = w0;

        bool crosses = false;
        for (size_t k = 0; k < kp.size(); ++k) {
          if ((kp[k] > 0) != (km[k] > 0)) crosses = true;
          if (std::abs(kp[k]) < 1e-6 || std::abs(km[k]) < 1e-6) crosses = true;
        }
        if (crosses) {
          ++excluded;
          continue;
        }
        ++checked;
        const double fd = (lp - lm) / (hp - hm);
        const double analytic = is_bias ? grads.b[l][j] : grads.w[l][j];
        const double denom = std::max(std::abs(fd), 1e-8);
        EXPECT_LT(std::abs(analytic - fd) / denom, 1e-4)
            << "batch " << batch_seed << " layer " << l << " param " << i
            << " analytic " << analytic << " fd " << fd;
      }
    }
  }
  // The exclusion rule must leave the bulk of coordinates testable.
  EXPECT_GT(checked, 800);
  EXPECT_LT(excluded, checked / 4) << "excluded " << excluded << " of "
                                   << (checked + excluded);
}

// --- training ------------------------------------------------------------------

TEST(Train, OverfitsLinearTargetsWithStockSettings) {
  auto rows = fixtures::linear_target_rows(64, 256, 42);
  MLPModel model = cband::mlp_init(256, 7);
  // Overfit sanity measures the optimizer, so the regularizer is off:
  // dropout noise on the narrow hidden layers otherwise sets a loss floor.
  model.dropout_rate = 0.0;
  const double initial = fixtures::eval_l1(model, rows);
  ASSERT_GT(initial, 5.0) << "fixture must start from loss above 5";

  TrainConfig cfg;  // lr 1e-4, batch 32, Adam defaults
  cfg.epochs = 200;
  cfg.seed = 11;
  MLPModel trained = cband::train(model, rows, cfg);
  const double final_loss = fixtures::eval_l1(trained, rows);
  EXPECT_LT(final_loss, 0.5) << "initial was " << initial;
  EXPECT_LE(final_loss, initial);
  EXPECT_EQ(trained.train_meta.epochs_run, 200u);
  EXPECT_EQ(trained.train_meta.batch_size, 32u);
  EXPECT_DOUBLE_EQ(trained.train_meta.lr, 1e-4);
  EXPECT_TRUE(std::isfinite(trained.train_meta.final_loss));
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  auto rows = fixtures::linear_target_rows(8, 16, 1);
  MLPModel model = cband::mlp_init(16, 3);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  cfg.seed = 5;
  MLPModel out = cband::train(model, rows, cfg);
  for (size_t l = 0; l < model.n_layers(); ++l)
    for (size_t i = 0; i < model.weights[l].size(); ++i)
      ASSERT_EQ(out.weights[l][i], model.weights[l][i]);
}

TEST(Train, BitReproducibleAcrossRuns) {
  auto rows = fixtures::linear_target_rows(20, 16, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 77;
  MLPModel a = cband::train(cband::mlp_init(16, 9), rows, cfg);
  MLPModel b = cband::train(cband::mlp_init(16, 9), rows, cfg);
  for (size_t l = 0; l < a.n_layers(); ++l) {
    for (size_t i = 0; i < a.weights[l].size(); ++i)
      ASSERT_EQ(a.weights[l][i], b.weights[l][i]) << "layer " << l;
    for (size_t i = 0; i < a.biases[l].size(); ++i)
      ASSERT_EQ(a.biases[l][i], b.biases[l][i]);
  }
  // A different seed changes the trajectory (shuffling + dropout).
  cfg.seed = 78;
  MLPModel c = cband::train(cband::mlp_init(16, 9), rows, cfg);
  bool any_diff = false;
  for (size_t i = 0; i < a.weights[0].size(); ++i)
    any_diff |= a.weights[0][i] != c.weights[0][i];
  EXPECT_TRUE(any_diff);
}

TEST(Train, NanFeatureAbortsWithDivergenceError) {
  auto rows = fixtures::linear_target_rows(8, 16, 3);
  rows[2].features[5] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    cband::train(cband::mlp_init(16, 1), rows, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DivergenceError);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Train, EmptyDataThrowsEmptyInput) {
  TrainConfig cfg;
  try {
    cband::train(cband::mlp_init(16, 1), {}, cfg);
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

// --- video pooling ---------------------------------------------------------------

TEST(VideoScore, ArithmeticMean) {
  EXPECT_DOUBLE_EQ(cband::video_score({50.0}), 50.0);
  EXPECT_DOUBLE_EQ(cband::video_score({40.0, 60.0}), 50.0);
  const std::vector<double> seven = {61.2, 58.9, 63.4, 57.1, 60.0, 59.5, 62.3};
  double sum = 0.0;
  for (double s : seven) sum += s;
  EXPECT_NEAR(cband::video_score(seven), sum / 7.0, 1e-12);
  try {
    cband::video_score({});
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

// --- model files -----------------------------------------------------------------

class ModelFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    tmp_ = fs::temp_directory_path() /
           ("cband_mlp_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(tmp_);
    path_ = (tmp_ / "model.cbmh").string();
  }
  void TearDown() override { fs::remove_all(tmp_); }

  std::string path_;
  fs::path tmp_;
};

TEST_F(ModelFileTest, RoundTripIsBitExact) {
  auto rows = fixtures::linear_target_rows(16, 32, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 21;
  MLPModel m = cband::train(cband::mlp_init(32, 4), rows, cfg);
  m.feature_mode = cband::FeatureMode::MeanStd;
  m.backbone_name = "vgg16-stage2";
  cband::save_model(m, path_);
  MLPModel r = cband::load_model(path_);

  EXPECT_EQ(r.layer_dims, m.layer_dims);
  EXPECT_EQ(r.feature_mode, m.feature_mode);
  EXPECT_EQ(r.backbone_name, m.backbone_name);
  EXPECT_EQ(r.rng_seed, m.rng_seed);
  EXPECT_DOUBLE_EQ(r.dropout_rate, m.dropout_rate);
  EXPECT_EQ(r.train_meta.epochs_run, m.train_meta.epochs_run);
  EXPECT_DOUBLE_EQ(r.train_meta.final_loss, m.train_meta.final_loss);
  for (size_t l = 0; l < m.n_layers(); ++l)
    for (size_t i = 0; i < m.weights[l].size(); ++i)
      ASSERT_EQ(r.weights[l][i], m.weights[l][i]);

  // Forward outputs identical to 0 ulps on 100 random vectors.
  cband::Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(32);
    for (double& x : v) x = rng.normal(0.0, 3.0);
    const double a = cband::mlp_forward(m, v);
    const double b = cband::mlp_forward(r, v);
    ASSERT_EQ(a, b);
  }
}

TEST_F(ModelFileTest, CorruptedMagicThrowsModelFormatError) {
  cband::save_model(cband::mlp_init(16, 1), path_);
  auto bytes = cband::detail::read_file_bytes(path_);
  bytes[0] = 'X';
  cband::detail::write_file_bytes(path_, bytes);
  try {
    cband::load_model(path_);
    FAIL() << "expected ModelFormatError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelFormatError);
  }
}

TEST_F(ModelFileTest, WrongVersionThrowsModelFormatError) {
  cband::save_model(cband::mlp_init(16, 1), path_);
  auto bytes = cband::detail::read_file_bytes(path_);
  bytes[4] = 0xfe;  // version low byte
  cband::detail::write_file_bytes(path_, bytes);
  EXPECT_THROW({ cband::load_model(path_); }, Error);
}

TEST_F(ModelFileTest, InconsistentDimsThrowModelFormatError) {
  cband::save_model(cband::mlp_init(16, 1), path_);
  auto bytes = cband::detail::read_file_bytes(path_);
  // First layer_dims entry sits after magic(4) + version(2) + D_in(4) + n_layers(1).
  bytes[11] = 17;
  cband::detail::write_file_bytes(path_, bytes);
  try {
    cband::load_model(path_);
    FAIL() << "expected ModelFormatError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelFormatError);
  }
}

TEST_F(ModelFileTest, TruncationAndTrailingBytesAreRejected) {
  cband::save_model(cband::mlp_init(16, 1), path_);
  auto bytes = cband::detail::read_file_bytes(path_);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  cband::detail::write_file_bytes(path_, truncated);
  try {
    cband::load_model(path_);
    FAIL() << "expected ModelFormatError on truncation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelFormatError);
  }

  auto padded = bytes;
  padded.push_back(0);
  cband::detail::write_file_bytes(path_, padded);
  try {
    cband::load_model(path_);
    FAIL() << "expected ModelFormatError on trailing bytes";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelFormatError);
  }
}

}  // namespace
