#include <gtest/gtest.h>

#include <random>

#include "eegdn/synth.hpp"
#include "eegdn/train.hpp"

using namespace eegdn;

namespace {

ModelSpec single_conv_spec() {
  ModelSpec s;
  s.name = "single_conv";
  s.layers = {LayerSpec::conv_same(1, 1, 3, ActivationKind::linear)};
  return s;
}

std::vector<SegmentPair> identity_task() {
  SynthConfig cfg;
  cfg.kind = ArtifactKind::none;
  cfg.seed = 21;
  return synthesize_dataset(cfg, 2);
}

}  // namespace

TEST(Mse, Examples) {
  Tensor<double> x({1, 3}, {0.5, -1, 2});
  EXPECT_EQ(mse_loss(x, x), 0.0);
  EXPECT_EQ(mse_loss(Tensor<double>({2}, {0, 0}), Tensor<double>({2}, {1, 1})), 1.0);
  EXPECT_EQ(mse_loss(Tensor<double>({2}, {1, 2}), Tensor<double>({2}, {3, 2})), 2.0);
  EXPECT_THROW(mse_loss(Tensor<double>({2}), Tensor<double>({3})), ShapeError);
}

TEST(Backward, ZeroAtStationaryPoint) {
  for (const auto& n : reference_names()) {
    Model<double> m(reference_spec(n));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    Tensor<double> x({1, 800});
    for (auto& v : x.data()) v = u(rng);
    const auto tr = m.forward_trace(x);
    const auto g = m.backward(tr, mse_grad(tr.output(), tr.output()));
    g.params.for_each_tensor([&](const Tensor<double>& t) {
      for (double v : t.data()) ASSERT_EQ(v, 0.0) << n;
    });
  }
}

// dL/dw_j = 2/N sum_t r_t x_{t+j-1}, dL/db = 2/N sum_t r_t with r = pred - target.
TEST(Backward, SingleLinearConvMatchesClosedForm) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  ParamStore<double> p;
  p.entries.push_back({Tensor<double>({1, 1, 3}, {nd(rng), nd(rng), nd(rng)}), Tensor<double>({1}, {nd(rng)})});
  Model<double> m(single_conv_spec(), p);
  Tensor<double> x({1, 800}), y({1, 800});
  for (auto& v : x.data()) v = nd(rng);
  for (auto& v : y.data()) v = nd(rng);
  const auto tr = m.forward_trace(x);
  const auto g = m.backward(tr, mse_grad(tr.output(), y));

  const auto& w = p.entries[0].weights;
  const double b = p.entries[0].bias[0];
  const long n = 800;
  auto xa = [&](long i) { return i < 0 || i >= n ? 0.0 : x[static_cast<std::size_t>(i)]; };
  std::vector<double> r(n);
  for (long t = 0; t < n; ++t) r[t] = w[0] * xa(t - 1) + w[1] * xa(t) + w[2] * xa(t + 1) + b - y[t];
  for (long j = 0; j < 3; ++j) {
    double acc = 0;
    for (long t = 0; t < n; ++t) acc += r[t] * xa(t + j - 1);
    EXPECT_NEAR(g.params.entries[0].weights[j], 2.0 * acc / n, 1e-12);
  }
  double gb = 0;
  for (double v : r) gb += v;
  EXPECT_NEAR(g.params.entries[0].bias[0], 2.0 * gb / n, 1e-12);
  for (long t = 0; t < n; ++t) {
    const double gx = 2.0 / n * ((t + 1 < n ? r[t + 1] * w[0] : 0.0) + r[t] * w[1] + (t > 0 ? r[t - 1] * w[2] : 0.0));
    ASSERT_NEAR(g.input[t], gx, 1e-12);
  }
}

TEST(GradCheck, RelativeErrorGuardsZeroOverZero) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_EQ(relative_error(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(GradCheck, CnnWithinTolerance) {
  const auto rep = grad_check(reference_spec("cnn_ref"), 200, 1e-5);
  EXPECT_EQ(rep.n_checked, 200u);
  EXPECT_LE(rep.max_relative_error, 1e-6);
}

TEST(GradCheck, SingleConvWithinTolerance) {
  const auto rep = grad_check(single_conv_spec(), 200, 1e-5);
  EXPECT_EQ(rep.n_checked, 4u);  // every parameter
  EXPECT_LE(rep.max_relative_error, 1e-6);
}

TEST(GradCheck, SmallerStepDoesNotBlowUp) {
  const auto spec = reference_spec("resnet_ref");
  const auto coarse = grad_check(spec, 50, 1e-4, 3);
  const auto fine = grad_check(spec, 50, 1e-5, 3);
  EXPECT_LE(fine.max_relative_error, 10.0 * coarse.max_relative_error);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Model<double> m(reference_spec("cnn_ref"));
  auto params = m.params();
  auto st = AdamState<double>::zeros_like(params);
  for (int i = 0; i < 3; ++i) adam_step(params, params.zeros_like(), st, TrainConfig{});
  EXPECT_EQ(params, m.params());
}

// After bias correction m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Model<double> m(reference_spec("cnn_ref"));
  auto params = m.params();
  auto grads = params.zeros_like();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  grads.for_each_tensor([&](Tensor<double>& t) {
    for (auto& v : t.data()) v = nd(rng);
  });
  auto st = AdamState<double>::zeros_like(params);
  TrainConfig cfg;
  adam_step(params, grads, st, cfg);
  for (std::size_t k = 0; k < params.parameter_count(); ++k) {
    const double g = grads.flat(k);
    const double step = m.params().flat(k) - params.flat(k);
    ASSERT_NEAR(step, cfg.learning_rate * g / (std::abs(g) + cfg.epsilon), 1e-15);
    ASSERT_NEAR(std::abs(step), cfg.learning_rate, 1e-7);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.validation_fraction = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Train, RejectsUnnormalizedData) {
  auto data = identity_task();
  data[3].contaminated[10] = 1.5f;
  TrainConfig cfg;
  cfg.max_epochs = 1;
  EXPECT_THROW(train<float>(reference_spec("cnn_ref"), data, cfg), InputError);
  EXPECT_THROW(train<float>(reference_spec("cnn_ref"), {}, cfg), InputError);
}

TEST(Train, IdentityTaskLossDropsWithinFiveEpochs) {
  const auto data = identity_task();
  const auto spec = reference_spec("cnn_ref");
  Model<float> init(spec);
  std::vector<const SegmentPair*> all;
  for (const auto& p : data) all.push_back(&p);
  const double initial = detail::mean_loss(init, all);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  const auto res = train<float>(spec, data, cfg);
  ASSERT_EQ(res.history.epochs(), 5u);
  EXPECT_LT(res.history.val_loss[res.history.best_epoch], initial);
  EXPECT_LT(detail::mean_loss(res.model, all), initial);
}

TEST(Train, PatienceZeroRunsOneEpoch) {
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 0;
  const auto res = train<float>(reference_spec("cnn_ref"), identity_task(), cfg);
  EXPECT_EQ(res.history.epochs(), 1u);
}

TEST(Train, BestEpochHasMinimumValidationLoss) {
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.learning_rate = 3e-2;  // large enough to bounce
  const auto res = train<float>(reference_spec("cnn_ref"), identity_task(), cfg);
  const auto& h = res.history;
  ASSERT_EQ(h.train_loss.size(), h.val_loss.size());
  ASSERT_EQ(h.seconds.size(), h.val_loss.size());
  for (double v : h.val_loss) EXPECT_GE(v, h.val_loss[h.best_epoch]);
  EXPECT_EQ(h.n_train + h.n_val, identity_task().size());
}

TEST(Train, SameSeedSameTrajectory) {
  TrainConfig cfg;
  cfg.max_epochs = 3;
  const auto data = identity_task();
  const auto a = train<float>(reference_spec("resnet_ref"), data, cfg);
  const auto b = train<float>(reference_spec("resnet_ref"), data, cfg);
  EXPECT_EQ(a.model.params(), b.model.params());
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
  EXPECT_EQ(a.history.val_loss, b.history.val_loss);
  cfg.seed = 8;
  const auto c = train<float>(reference_spec("resnet_ref"), data, cfg);
  EXPECT_NE(a.history.train_loss, c.history.train_loss);
}

TEST(Train, HistoryCsv) {
  TrainHistory h;
  h.train_loss = {0.5, 0.25};
  h.val_loss = {0.4, 0.3};
  h.seconds = {1, 2};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,val_loss,seconds\n1,0.5,0.40000000000000002,1\n2,0.25,0.29999999999999999,2\n");
}
