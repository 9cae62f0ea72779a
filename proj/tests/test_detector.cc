#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.h"
#include "ovl/detector.h"
#include "ovl/error.h"

using namespace ovl;

namespace {

LabelerConfig tiny() {
  LabelerConfig c;
  c.input_dim = 3;
  c.recurrent_units = 4;
  c.ff_units = 4;
  return c;
}

RowMatrix random_input(std::mt19937_64& rng, Eigen::Index T, Eigen::Index D, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  RowMatrix x(T, D);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

LabelSequence random_labels(std::mt19937_64& rng, std::size_t T) {
  LabelSequence y;
  std::bernoulli_distribution b(0.4);
  for (std::size_t t = 0; t < T; ++t) y.labels.push_back(b(rng));
  return y;
}

FeatureMatrix as_features(RowMatrix x) {
  FeatureMatrix f;
  f.frames = std::move(x);
  return f;
}

// Overlap frames shifted by +2 in every dimension.
BatchSampler separable_sampler(int dim, std::size_t T) {
  return [dim, T](std::size_t n, std::mt19937_64& rng) {
    std::vector<TrainingItem> items(n);
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution start(0.5);
    std::uniform_int_distribution<std::size_t> len(5, 30);
    for (auto& item : items) {
      item.features.frames.resize(static_cast<Eigen::Index>(T), dim);
      item.labels.labels.resize(T);
      std::uint8_t state = start(rng);
      std::size_t left = len(rng);
      for (std::size_t t = 0; t < T; ++t) {
        if (left-- == 0) {
          state ^= 1;
          left = len(rng);
        }
        item.labels.labels[t] = state;
        for (int d = 0; d < dim; ++d) {
          item.features.frames(static_cast<Eigen::Index>(t), d) = g(rng) + 2.0 * state;
        }
      }
    }
    return items;
  };
}

}  // namespace

TEST_CASE("config validation") {
  LabelerConfig c;
  CHECK_NOTHROW(c.validate());
  c.output_classes = 3;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.recurrent_units = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("parameter layout mirrors the config") {
  const LabelerModel m = LabelerModel::initialize(LabelerConfig{}, 1);
  const auto& p = m.params;
  CHECK(p.info("lstm0.fwd.W").rows == 4 * 128);
  CHECK(p.info("lstm0.fwd.W").cols == 57);
  CHECK(p.info("lstm1.bwd.W").cols == 256);
  CHECK(p.info("lstm1.bwd.U").cols == 128);
  CHECK(p.info("ff0.W").cols == 256);
  CHECK(p.info("ff1.W").rows == 128);
  CHECK(p.info("out.W").rows == 2);
  CHECK_THROWS_AS(p.info("nope"), DataError);
  std::size_t total = 0;
  for (const auto& t : p.layout()) total += static_cast<std::size_t>(t.rows * t.cols);
  CHECK(total == p.size());
  CHECK(m.finite());
  // Forget gate bias starts at 1, the other gates at their uniform draw.
  const auto b = p.tensor("lstm0.fwd.b");
  for (int i = 128; i < 256; ++i) CHECK(b(i, 0) == 1.0);
  const double bound = 1.0 / std::sqrt(57.0);
  CHECK(p.tensor("lstm0.fwd.W").cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("zero parameters give uniform scores") {
  const LabelerModel m = LabelerModel::zeros(tiny());
  std::mt19937_64 rng(3);
  const ScoreSequence s = forward(m, as_features(random_input(rng, 17, 3)));
  REQUIRE(s.num_frames() == 17);
  for (Eigen::Index t = 0; t < 17; ++t) {
    CHECK(s.scores(t, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.scores(t, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("rows are stochastic for arbitrary inputs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelerModel m = LabelerModel::initialize(tiny(), static_cast<std::uint64_t>(trial));
    const ScoreSequence s = forward(m, as_features(random_input(rng, 1 + trial, 3, 50.0)));
    for (Eigen::Index t = 0; t < s.scores.rows(); ++t) {
      CHECK(s.scores(t, 0) >= 0.0);
      CHECK(s.scores(t, 1) >= 0.0);
      CHECK(std::abs(s.scores.row(t).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("batch items are independent of their neighbours") {
  const LabelerModel m = LabelerModel::initialize(tiny(), 5);
  std::mt19937_64 rng(5);
  std::vector<RowMatrix> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_input(rng, 12, 3));
  const auto out = forward_batch(m, batch);

  std::vector<RowMatrix> shuffled = {batch[3], batch[0], batch[3], batch[4], batch[1], batch[2]};
  const auto again = forward_batch(m, shuffled);
  const int source[] = {3, 0, 3, 4, 1, 2};
  for (int i = 0; i < 6; ++i) {
    CHECK((again[static_cast<std::size_t>(i)] - out[static_cast<std::size_t>(source[i])]).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (int i = 0; i < 5; ++i) {
    const ScoreSequence single = forward(m, as_features(batch[static_cast<std::size_t>(i)]));
    CHECK((single.scores - out[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward rejects bad shapes") {
  const LabelerModel m = LabelerModel::zeros(tiny());
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(forward(m, as_features(random_input(rng, 4, 5))), DataError);
  CHECK_THROWS_AS(forward(m, as_features(RowMatrix(0, 3))), DataError);
  std::vector<RowMatrix> mixed = {random_input(rng, 4, 3), random_input(rng, 5, 3)};
  CHECK_THROWS_AS(forward_batch(m, mixed), DataError);
}

TEST_CASE("bce loss values") {
  ScoreSequence s;
  LabelSequence y;
  s.scores.resize(4, 2);
  s.scores << 1, 0, 1, 0, 1, 0, 1, 0;
  y.labels = {0, 0, 0, 0};
  CHECK(bce_loss(s, y) == 0.0);

  s.scores.setConstant(0.5);
  CHECK(bce_loss(s, y) == doctest::Approx(0.693147).epsilon(1e-6));

  ScoreSequence three;
  three.scores.resize(3, 2);
  three.scores << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5;
  LabelSequence y3;
  y3.labels = {0, 1, 1};
  const double expected = -(std::log(0.9) + std::log(0.8) + std::log(0.5)) / 3.0;
  CHECK(bce_loss(three, y3) == doctest::Approx(expected).epsilon(1e-14));

  // A certain wrong prediction is floored rather than infinite.
  y3.labels = {1, 1, 1};
  three.scores.row(0) << 1.0, 0.0;
  CHECK(std::isfinite(bce_loss(three, y3)));

  y3.labels = {0, 1};
  CHECK_THROWS_AS(bce_loss(three, y3), DataError);
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(17);
  LabelerModel m = LabelerModel::initialize(tiny(), 17);
  m.input_mean = Eigen::Vector3d(0.1, -0.2, 0.3);
  m.input_scale = Eigen::Vector3d(1.5, 0.5, 2.0);
  std::vector<RowMatrix> x = {random_input(rng, 5, 3), random_input(rng, 5, 3)};
  std::vector<LabelSequence> y = {random_labels(rng, 5), random_labels(rng, 5)};
  const auto check = oracle::finite_difference_check(m, x, y);
  CHECK(check.checked == m.params.size());
  INFO("worst tensor " << check.worst_tensor);
  CHECK(check.max_relative_error < 1e-4);
}

TEST_CASE("gradients stay correct with one layer of each kind") {
  LabelerConfig c = tiny();
  c.recurrent_layers = 1;
  c.ff_layers = 1;
  c.recurrent_units = 3;
  std::mt19937_64 rng(23);
  const LabelerModel m = LabelerModel::initialize(c, 23);
  std::vector<RowMatrix> x = {random_input(rng, 7, 3)};
  std::vector<LabelSequence> y = {random_labels(rng, 7)};
  CHECK(oracle::finite_difference_check(m, x, y).max_relative_error < 1e-4);
}

TEST_CASE("gradient shapes mirror parameters and a small step descends") {
  std::mt19937_64 rng(29);
  const LabelerModel m = LabelerModel::initialize(tiny(), 29);
  std::vector<RowMatrix> x = {random_input(rng, 10, 3), random_input(rng, 10, 3)};
  std::vector<LabelSequence> y = {random_labels(rng, 10), random_labels(rng, 10)};
  const LossAndGradient lg = backward(m, x, y);
  CHECK(lg.gradient.size() == m.params.size());
  CHECK(lg.gradient.layout().size() == m.params.layout().size());
  CHECK(lg.gradient.norm() > 0.0);
  CHECK(lg.loss == doctest::Approx(batch_loss(m, x, y)).epsilon(1e-12));

  LabelerModel stepped = m;
  for (std::size_t i = 0; i < stepped.params.size(); ++i) {
    stepped.params.values()[i] -= 1e-2 * lg.gradient.values()[i];
  }
  CHECK(batch_loss(stepped, x, y) < lg.loss);
}

TEST_CASE("training on a separable corpus") {
  LabelerConfig c = tiny();
  c.input_dim = 4;
  c.recurrent_units = 8;
  c.ff_units = 8;
  TrainOptions opt;
  opt.epochs = 12;
  opt.batches_per_epoch = 20;
  opt.batch_size = 8;
  opt.seed = 4;
  std::vector<double> seen;
  const TrainResult r = train(separable_sampler(4, 50), c, opt,
                              [&](std::size_t, double loss) { seen.push_back(loss); });
  REQUIRE(r.epoch_losses.size() == 12);
  CHECK(seen == r.epoch_losses);
  CHECK(r.epoch_losses.back() < 0.1 * r.initial_loss);
  CHECK(r.model.metadata.loss_trace == r.epoch_losses);
  CHECK(r.model.finite());

  const TrainResult again = train(separable_sampler(4, 50), c, opt);
  CHECK(again.model.params == r.model.params);
  CHECK(again.epoch_losses == r.epoch_losses);
}

TEST_CASE("zero epochs returns the initialized model") {
  TrainOptions opt;
  opt.epochs = 0;
  opt.seed = 8;
  const TrainResult r = train(separable_sampler(3, 20), tiny(), opt);
  const LabelerModel init = LabelerModel::initialize(tiny(), 8);
  CHECK(r.model.params == init.params);
  CHECK(r.epoch_losses.empty());
}

TEST_CASE("divergence is reported") {
  TrainOptions opt;
  opt.epochs = 1;
  opt.batches_per_epoch = 2;
  opt.batch_size = 2;
  opt.normalization_batches = 0;
  BatchSampler bad = [](std::size_t n, std::mt19937_64&) {
    std::vector<TrainingItem> items(n);
    for (auto& it : items) {
      it.features.frames = RowMatrix::Constant(6, 3, std::numeric_limits<double>::quiet_NaN());
      it.labels.labels.assign(6, 0);
    }
    return items;
  };
  CHECK_THROWS_AS(train(bad, tiny(), opt), NumericalError);
}

TEST_CASE("model files round trip") {
  TrainOptions opt;
  opt.epochs = 2;
  opt.batches_per_epoch = 3;
  opt.batch_size = 4;
  opt.seed = 12;
  const TrainResult r = train(separable_sampler(3, 20), tiny(), opt);
  const auto path = std::filesystem::temp_directory_path() / "ovl_test_model.bin";
  save_model(r.model, path.string());
  const LabelerModel loaded = load_model(path.string());
  CHECK(loaded.config == r.model.config);
  CHECK(loaded.params == r.model.params);
  CHECK(loaded.input_mean == r.model.input_mean);
  CHECK(loaded.input_scale == r.model.input_scale);
  CHECK(loaded.metadata.epochs == 2);
  CHECK(loaded.metadata.seed == 12);
  CHECK(loaded.metadata.loss_trace == r.epoch_losses);
  std::filesystem::remove(path);

  const auto junk = std::filesystem::temp_directory_path() / "ovl_test_junk.bin";
  {
    std::ofstream out(junk);
    out << "not a model";
  }
  CHECK_THROWS_AS(load_model(junk.string()), DataError);
  std::filesystem::remove(junk);
  CHECK_THROWS_AS(load_model("/nonexistent/model.bin"), DataError);
}
