#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "sftm/dataset.hpp"
#include "sftm/error.hpp"
#include "sftm/io_util.hpp"
#include "sftm/knn.hpp"
#include "sftm/model_io.hpp"
#include "sftm/rng.hpp"
#include "sftm/training.hpp"

using namespace sftm;
namespace fs = std::filesystem;

namespace {

ScnnConfig small_net(std::size_t out_dim, std::size_t length = 30) {
  ScnnConfig c;
  c.length = length;
  c.conv = {{4, 3, 1}};
  c.dense = {8};
  c.output_dim = out_dim;
  c.seed = 1;
  return c;
}

SeriesBatch toy_batch(std::size_t n, std::size_t len, std::uint64_t seed) {
  SeriesBatch x(n, 2, len);
  Rng rng(seed);
  for (double& v : x.data) v = rng.uniform(-1.0, 0.0);
  return x;
}

Matrix toy_labels(const SeriesBatch& x, std::size_t d) {
  Matrix y(x.batch, d);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) y(b, j) = x.at(b, j % 2, 0) + 0.5 * x.at(b, 1, j % x.length);
  }
  return y;
}

const Dataset& desk_dataset() {
  static const Dataset ds = [] {
    BuildOptions opt;
    opt.n2 = 5;
    opt.seed = 3;
    return build_dataset(sample_parameters(500, SamplingRanges::defaults(), Hypothesis::FSH, 3), opt);
  }();
  return ds;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sftm_tr_" + name);
  fs::remove_all(p);
  return p;
}

TrainedModel quick_model() {
  const auto x = toy_batch(40, 30, 1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  auto m = fit(small_net(2), x, toy_labels(x, 2), tc);
  m.scaling = ScalingStats{0.9, 0.1, 0.8, 0.05};
  m.target = Target::Noise2;
  return m;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.validation_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_target("noise2"), Target::Noise2);
  EXPECT_EQ(target_dim(Target::Params8), 8u);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(Fit, ZeroLearningRateLeavesWeights) {
  const auto x = toy_batch(20, 30, 2);
  const auto y = toy_labels(x, 2);
  for (Optimizer o : {Optimizer::Adam, Optimizer::SGD}) {
    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = 0.0;
    tc.optimizer = o;
    const auto m = fit(small_net(2), x, y, tc);
    const Scnn init(small_net(2));
    ASSERT_EQ(m.history.size(), 1u);
    for (std::size_t i = 0; i < init.weights().size(); ++i) {
      EXPECT_EQ(m.net.weights()[i].values, init.weights()[i].values);
    }
  }
}

TEST(Fit, DeterministicGivenSeeds) {
  const auto x = toy_batch(30, 30, 3);
  const auto y = toy_labels(x, 8);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 7;
  tc.shuffle_seed = 9;
  const auto a = fit(small_net(8), x, y, tc);
  const auto b = fit(small_net(8), x, y, tc);
  for (std::size_t i = 0; i < a.net.weights().size(); ++i) {
    EXPECT_EQ(a.net.weights()[i].values, b.net.weights()[i].values);
  }
  EXPECT_EQ(a.history, b.history);
  tc.shuffle_seed = 10;
  const auto c = fit(small_net(8), x, y, tc);
  EXPECT_NE(c.net.weights()[0].values, a.net.weights()[0].values);
}

TEST(Fit, StandardizationSetsOutputAffine) {
  const auto x = toy_batch(50, 30, 4);
  const auto y = toy_labels(x, 2);
  TrainConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  tc.validation_fraction = 0.0;
  const auto m = fit(small_net(2), x, y, tc);
  const auto mean = column_means(y);
  const auto var = column_variances(y);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(m.net.output_shift()[j], mean[j], 1e-12);
    EXPECT_NEAR(m.net.output_scale()[j], std::sqrt(var[j]), 1e-12);
  }
  EXPECT_TRUE(std::isnan(m.history[0].val));
  tc.standardize_targets = false;
  const auto raw = fit(small_net(2), x, y, tc);
  EXPECT_EQ(raw.net.output_shift(), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(raw.net.output_scale(), (std::vector<double>{1.0, 1.0}));
}

TEST(Fit, ValidationLossDecreasesOnDeskData) {
  const auto& ds = desk_dataset();
  const auto task = prepare_task(ds, split_dataset(ds.rows(), 0.2, 1), Target::Params8);
  ScnnConfig net;
  net.output_dim = 8;
  TrainConfig tc;
  tc.epochs = 15;
  const auto m = fit(net, task.train_x, task.train_y, tc);
  ASSERT_EQ(m.history.size(), 15u);
  EXPECT_LT(m.history.back().val, m.history.front().val);
  EXPECT_LT(m.history.back().train, m.history.front().train);
}

TEST(Fit, NonFiniteLossThrows) {
  const auto x = toy_batch(20, 30, 5);
  auto y = toy_labels(x, 2);
  y(3, 1) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.standardize_targets = false;
  EXPECT_THROW(fit(small_net(2), x, y, tc), NumericalError);
  y(3, 1) = 1e300;
  tc.optimizer = Optimizer::SGD;
  tc.learning_rate = 1e10;
  tc.epochs = 5;
  EXPECT_THROW(fit(small_net(2), x, y, tc), NumericalError);
}

TEST(Fit, ShapeMismatch) {
  const auto x = toy_batch(10, 30, 6);
  EXPECT_THROW(fit(small_net(2), x, Matrix(9, 2), TrainConfig{}), ShapeError);
  EXPECT_THROW(fit(small_net(2), x, Matrix(10, 8), TrainConfig{}), ShapeError);
}

TEST(Task, PrepareUsesSplitAndScaling) {
  const auto& ds = desk_dataset();
  const auto split = split_dataset(ds.rows(), 0.2, 2);
  const auto t = prepare_task(ds, split, Target::Noise2);
  EXPECT_EQ(t.train_x.batch, split.train.size());
  EXPECT_EQ(t.test_x.batch, split.test.size());
  EXPECT_EQ(t.train_y.cols(), 2u);
  EXPECT_EQ(t.test_y(0, 1), ds.Sigma(split.test[0], 1));
  EXPECT_EQ(t.scaling, compute_scaling(ds, split.train));
  EXPECT_EQ(t.train_x.at(0, 0, 0), ScalingStats::apply(ds.A(split.train[0], 0), t.scaling.max_A, t.scaling.min_A));
  EXPECT_EQ(select_labels(ds, Target::Params8, split.test).cols(), 8u);
}

TEST(Metrics, ExactPredictionsScoreZero) {
  const auto x = toy_batch(6, 30, 7);
  const auto y = toy_labels(x, 8);
  const auto m = evaluate_predictions(y, y);
  EXPECT_EQ(m.test_mse, 0.0);
  for (double v : m.per_target_mse) EXPECT_EQ(v, 0.0);
}

TEST(Metrics, MeanPredictorIdentity) {
  Rng rng(8);
  Matrix train(40, 2), test(15, 2);
  for (double& v : train.data()) v = rng.uniform(0, 1);
  for (double& v : test.data()) v = rng.uniform(0.2, 1.4);
  const auto pred = mean_predictor(train, test.rows());
  const auto m = evaluate_predictions(pred, test);
  const auto mu_train = column_means(train);
  const auto mu_test = column_means(test);
  const auto var_test = column_variances(test);
  double expected = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const double d = mu_test[j] - mu_train[j];
    EXPECT_NEAR(m.per_target_mse[j], var_test[j] + d * d, 1e-12);
    expected += var_test[j] + d * d;
  }
  EXPECT_NEAR(m.test_mse, expected, 1e-12);
}

TEST(Knn, NearestNeighbourBehaviour) {
  Matrix tx(4, 2), ty(4, 1);
  const double pts[4][2] = {{0, 0}, {1, 0}, {0, 2}, {5, 5}};
  for (std::size_t i = 0; i < 4; ++i) {
    tx(i, 0) = pts[i][0];
    tx(i, 1) = pts[i][1];
    ty(i, 0) = 10.0 * static_cast<double>(i + 1);
  }
  Matrix q(1, 2);
  q(0, 0) = 1;
  q(0, 1) = 0;
  EXPECT_EQ(knn_predict(tx, ty, q, 1)(0, 0), 20.0);
  EXPECT_EQ(knn_predict(tx, ty, q, 4)(0, 0), 25.0);
  // (0.5, 0) is equidistant from rows 0 and 1; the lower index wins.
  q(0, 0) = 0.5;
  EXPECT_EQ(knn_predict(tx, ty, q, 1)(0, 0), 10.0);
  EXPECT_THROW(knn_predict(Matrix(0, 2), Matrix(0, 1), q, 1), ConfigError);
  EXPECT_THROW(knn_predict(tx, ty, q, 5), ConfigError);
  EXPECT_THROW(knn_predict(tx, ty, Matrix(1, 3), 1), ShapeError);
}

TEST(Knn, FlattenSeries) {
  const auto x = toy_batch(3, 4, 9);
  const auto f = flatten_series(x);
  EXPECT_EQ(f.cols(), 8u);
  EXPECT_EQ(f(2, 5), x.at(2, 1, 1));
}

TEST(ModelIo, RoundTrip) {
  const auto m = quick_model();
  const auto dir = scratch("roundtrip");
  save_model(m, dir);
  const auto back = load_model(dir);
  EXPECT_EQ(back.net.config(), m.net.config());
  for (std::size_t i = 0; i < m.net.weights().size(); ++i) {
    EXPECT_EQ(back.net.weights()[i].values, m.net.weights()[i].values);
  }
  EXPECT_EQ(back.net.output_shift(), m.net.output_shift());
  EXPECT_EQ(back.net.output_scale(), m.net.output_scale());
  EXPECT_EQ(back.train, m.train);
  EXPECT_EQ(back.scaling, m.scaling);
  EXPECT_EQ(back.target, Target::Noise2);
  ASSERT_EQ(back.history.size(), m.history.size());
  for (std::size_t i = 0; i < m.history.size(); ++i) EXPECT_EQ(back.history[i].train, m.history[i].train);
  fs::remove_all(dir);
}

TEST(ModelIo, TruncatedBlobAndVersion) {
  const auto m = quick_model();
  const auto dir = scratch("corrupt");
  save_model(m, dir);
  const auto blob = dir / (m.net.weights()[0].name + ".bin");
  const auto bytes = io::read_file(blob);
  std::ofstream(blob, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_model(dir), FormatError);

  save_model(m, dir);
  auto cfg = io::read_file(dir / "config.json");
  const auto pos = cfg.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  cfg.replace(pos, 19, "\"format_version\": 2");
  std::ofstream(dir / "config.json", std::ios::trunc) << cfg;
  EXPECT_THROW(load_model(dir), VersionError);
  EXPECT_THROW(load_model(scratch("absent")), IoError);
  fs::remove_all(dir);
}

TEST(ModelIo, PredictSeries) {
  auto m = quick_model();
  std::vector<double> forest(30), agri(30);
  for (std::size_t t = 0; t < 30; ++t) {
    forest[t] = 0.3 + 0.01 * static_cast<double>(t);
    agri[t] = 0.4 - 0.005 * static_cast<double>(t);
  }
  const auto est = predict_series(m, forest, agri);
  ASSERT_EQ(est.size(), 2u);
  Matrix fa(1, 30), aa(1, 30);
  for (std::size_t t = 0; t < 30; ++t) {
    fa(0, t) = ScalingStats::apply(forest[t], 0.9, 0.1);
    aa(0, t) = ScalingStats::apply(agri[t], 0.8, 0.05);
  }
  const auto direct = m.net.forward(make_series_batch(fa, aa));
  EXPECT_EQ(est[0], direct(0, 0));
  EXPECT_EQ(est[1], direct(0, 1));
  EXPECT_THROW(predict_series(m, std::vector<double>(29), std::vector<double>(29)), ShapeError);
  m.scaling.reset();
  EXPECT_THROW(predict_series(m, forest, agri), ConfigError);
}
