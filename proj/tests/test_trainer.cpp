#include "fdnet/checkpoint.hpp"
#include "fdnet/gradcheck.hpp"
#include "fdnet/trainer.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace fdnet;
using namespace fdnet::testing;

namespace {

RowMatrix sine(Index T, Scalar period, Index V = 1, Scalar noise = 0.0, std::uint64_t seed = 1) {
  const Tensor n = random_tensor({T, V}, seed, noise);
  RowMatrix v(T, V);
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < V; ++j)
      v(t, j) = std::sin(2 * std::numbers::pi * static_cast<Scalar>(t) / period + static_cast<Scalar>(j)) +
                n.at({t, j});
  return v;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_length = 32;
  c.output_length = 8;
  c.branches = 2;
  c.layers = 2;
  c.embed_dim = 4;
  return c;
}

Checkpoint make_checkpoint(const ModelConfig& cfg, Index V) {
  TimeSeriesFrame f;
  f.values = sine(50, 10, V, 0.3);
  for (Index j = 0; j < V; ++j) f.columns.push_back("col" + std::to_string(j));
  f.target = f.columns.back();
  return Checkpoint{ForecastModel::create(cfg, 77), Standardizer::fit(f), f.columns, f.target, {3, 0.25}};
}

std::string serialize(const Checkpoint& ck) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ck);
  return os.str();
}

Checkpoint deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_checkpoint(is);
}

Tensor predict(const ForecastModel& m, const Tensor& x) {
  Graph g;
  return m.forward(g, g.constant(x), {}).prediction.value();
}

}  // namespace

TEST(MseLoss, ValueAndGradient) {
  Graph g;
  const Var p = g.variable(Tensor({2}, {0, 0}));
  const Var loss = mse_loss(p, g.constant(Tensor({2}, {1, 3})));
  EXPECT_EQ(loss.value().item(), 5.0);
  g.backward(loss);
  EXPECT_EQ(g.grad(p), Tensor({2}, {-1.0, -3.0}));

  const Tensor a = random_tensor({3, 4, 2}, 1), b = random_tensor({3, 4, 2}, 2);
  Graph h;
  EXPECT_EQ(mse_loss(h.constant(a), h.constant(a)).value().item(), 0.0);
  EXPECT_FDNET_ERROR(mse_loss(h.constant(a), h.constant(Tensor({3, 4, 1}))), Errc::invalid_shape);
  const Scalar err = grad_check([&](Graph& gr, Var v) { return mse_loss(v, gr.constant(b)); }, a);
  EXPECT_LT(err, 1e-8);
}

TEST(Adam, FirstStepAndNoOps) {
  Tensor theta({1}, {0.0});
  Tensor* params[] = {&theta};
  const Tensor grads[] = {Tensor({1}, {1.0})};
  AdamState s = AdamState::like(std::span<const Tensor>(&theta, 1));
  adam_step(params, grads, s, 0.1);
  EXPECT_NEAR(theta[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.t, 1);

  Tensor w = random_tensor({3, 2}, 3);
  const Tensor w0 = w;
  Tensor* wp[] = {&w};
  AdamState z = AdamState::like(std::span<const Tensor>(&w, 1));
  const Tensor zero[] = {Tensor({3, 2}, 0.0)};
  adam_step(wp, zero, z, 0.1);
  EXPECT_EQ(w, w0);

  const Tensor g[] = {random_tensor({3, 2}, 4)};
  adam_step(wp, g, z, 0.0);
  EXPECT_EQ(w, w0);
  EXPECT_EQ(z.t, 2);
  EXPECT_FALSE(z.m[0] == Tensor({3, 2}, 0.0));
}

TEST(Adam, MatchesHandRecurrence) {
  Tensor theta({2}, {0.5, -1.0});
  Tensor* params[] = {&theta};
  AdamState s = AdamState::like(std::span<const Tensor>(&theta, 1));
  Scalar m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {0.5, -1.0};
  for (int step = 1; step <= 5; ++step) {
    const Tensor grads[] = {Tensor({2}, {0.3 * step, -0.7 / step})};
    adam_step(params, grads, s, 0.01);
    for (int i = 0; i < 2; ++i) {
      const Scalar gi = grads[0][i];
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const Scalar mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(theta[i], ref[i], 1e-14);
    }
  }
}

TEST(LearningRate, HalvesPerEpoch) {
  EXPECT_EQ(lr_for_epoch(1e-4, 0), 1e-4);
  EXPECT_EQ(lr_for_epoch(1e-4, 1), 5e-5);
  EXPECT_EQ(lr_for_epoch(1e-4, 3), 1.25e-5);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patience = 11;
  EXPECT_FDNET_ERROR(c.validate(), Errc::invalid_parameter);
  c = {};
  c.batch_size = 0;
  EXPECT_FDNET_ERROR(c.validate(), Errc::invalid_parameter);
  c = {};
  c.learning_rate = -1;
  EXPECT_FDNET_ERROR(c.validate(), Errc::invalid_parameter);
}

TEST(Train, OverfitsSingleSine) {
  const WindowSet w(sine(2000, 16), 32, 8);
  ForecastModel m = ForecastModel::create(tiny_config(), 4321);
  const Scalar before = evaluate_mse(m, w);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.max_epochs = 10;
  tc.patience = 10;
  tc.max_steps = 300;
  Index steps = 0;
  const TrainHistory h = train(m, w, w, tc, {.on_step = [&](Index, Scalar loss) {
                                              ++steps;
                                              EXPECT_TRUE(std::isfinite(loss));
                                            }});
  EXPECT_EQ(steps, 300);
  EXPECT_EQ(h.epochs.back().steps, 300);
  const Scalar after = evaluate_mse(m, w);
  EXPECT_LT(after, 0.05) << "initial " << before;
  EXPECT_EQ(after, h.best().train_mse);
}

TEST(Train, EarlyStopOnWorseningValidation) {
  const WindowSet w(sine(60, 8), 32, 8);
  ForecastModel m = ForecastModel::create(tiny_config(), 1);
  TrainConfig tc;
  tc.max_epochs = 10;
  tc.patience = 1;
  const TrainHistory h =
      train(m, w, w, tc, {.validator = [](const ForecastModel&, Index epoch) { return 1.0 + epoch; }});
  ASSERT_EQ(h.epochs.size(), 2u);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.best_epoch, 0);
  EXPECT_EQ(h.best_val_mse, 1.0);
  EXPECT_EQ(h.epochs[1].lr, tc.learning_rate / 2);
  // Partial final batch is trained: 21 windows -> 2 steps per epoch.
  EXPECT_EQ(h.epochs[0].steps, 2);
  EXPECT_EQ(h.epochs[1].steps, 4);
}

TEST(Train, RestoresBestEpochParameters) {
  const WindowSet w(sine(80, 8), 32, 8);
  ForecastModel m = ForecastModel::create(tiny_config(), 2);
  std::vector<std::vector<Tensor>> seen;
  TrainConfig tc;
  tc.max_epochs = 3;
  const TrainHistory h = train(m, w, w, tc,
                               {.validator = [&](const ForecastModel& model, Index epoch) {
                                 seen.push_back(snapshot(model));
                                 return epoch == 1 ? 0.5 : 2.0;
                               }});
  EXPECT_EQ(h.best_epoch, 1);
  const std::vector<Tensor> now = snapshot(m);
  ASSERT_EQ(seen.size(), 3u);
  for (std::size_t i = 0; i < now.size(); ++i) ASSERT_EQ(now[i], seen[1][i]);
}

TEST(Train, BitwiseReproducible) {
  const WindowSet tw(sine(300, 12, 2, 0.1, 5), 32, 8);
  const WindowSet vw(sine(100, 12, 2, 0.1, 6), 32, 8);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 2;
  tc.max_steps = 100;
  tc.learning_rate = 1e-3;
  auto once = [&] {
    ForecastModel m = ForecastModel::create(tiny_config(), 4321);
    const TrainHistory h = train(m, tw, vw, tc);
    std::ostringstream csv;
    h.write_csv(csv);
    return std::pair{snapshot(m), csv.str()};
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.second, b.second);
  ASSERT_EQ(a.first.size(), b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) EXPECT_EQ(a.first[i], b.first[i]);
  EXPECT_EQ(a.second.substr(0, a.second.find('\n')), "epoch,lr,train_mse,val_mse");

  TrainConfig other = tc;
  other.seed = 1;
  ForecastModel m = ForecastModel::create(tiny_config(), 4321);
  train(m, tw, vw, other);
  EXPECT_FALSE(snapshot(m).front() == a.first.front());
}

TEST(Train, DivergenceIsReported) {
  const WindowSet w(sine(60, 8), 32, 8);
  ForecastModel m = ForecastModel::create(tiny_config(), 1);
  TrainConfig tc;
  tc.learning_rate = 1e300;
  tc.max_epochs = 3;
  tc.patience = 3;
  EXPECT_FDNET_ERROR(train(m, w, w, tc), Errc::training_diverged);
}

TEST(Train, EvalMseIsRepeatable) {
  const WindowSet w(sine(100, 8), 32, 8);
  const ForecastModel m = ForecastModel::create(tiny_config(), 3);
  EXPECT_EQ(evaluate_mse(m, w), evaluate_mse(m, w));
  EXPECT_EQ(evaluate_mse(m, w, 7), evaluate_mse(m, w, 7));
  EXPECT_NEAR(evaluate_mse(m, w, 7), evaluate_mse(m, w), 1e-12);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  for (Variant v : {Variant::fdnet, Variant::funet}) {
    ModelConfig cfg = tiny_config();
    cfg.variant = v;
    cfg.heads = 2;
    const Checkpoint ck = make_checkpoint(cfg, 3);
    const std::string bytes = serialize(ck);
    EXPECT_EQ(bytes.substr(0, 8), "FDNETCK1");
    const Checkpoint back = deserialize(bytes);
    EXPECT_EQ(back.model.config(), ck.model.config());
    EXPECT_EQ(back.model.plan(), ck.model.plan());
    EXPECT_EQ(back.columns, ck.columns);
    EXPECT_EQ(back.target, ck.target);
    EXPECT_EQ(back.meta.epoch, 3);
    EXPECT_EQ(back.meta.best_val_mse, 0.25);
    EXPECT_TRUE((back.standardizer.mean == ck.standardizer.mean).all());
    EXPECT_TRUE((back.standardizer.std == ck.standardizer.std).all());
    const Tensor x = random_tensor({2, 1, 32, 3}, 9);
    EXPECT_EQ(predict(back.model, x), predict(ck.model, x));
    EXPECT_EQ(serialize(back), bytes);
  }
}

TEST(Checkpoint, FileRoundTripKeepsDefaultParamCount) {
  const Checkpoint ck = make_checkpoint(ModelConfig{}, 7);
  const auto path = std::filesystem::temp_directory_path() / "fdnet_test_ck.bin";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.model.param_count().total(), ck.model.param_count().total());
  EXPECT_EQ(back.model.param_count().head, ck.model.param_count().head);
  const Tensor x = random_tensor({1, 1, 672, 7}, 10);
  EXPECT_EQ(predict(back.model, x), predict(ck.model, x));
  EXPECT_FDNET_ERROR(load_checkpoint("/nonexistent/ck.bin"), Errc::io);
}

TEST(Checkpoint, RejectsForeignAndDamagedFiles) {
  const std::string bytes = serialize(make_checkpoint(tiny_config(), 2));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_FDNET_ERROR(deserialize(bad), Errc::incompatible_checkpoint);
  bad = bytes;
  bad[8] = 2;
  EXPECT_FDNET_ERROR(deserialize(bad), Errc::incompatible_checkpoint);
  EXPECT_FDNET_ERROR(deserialize(bytes.substr(0, 5)), Errc::incompatible_checkpoint);
  for (std::size_t n = 12; n < bytes.size(); n += 1 + n / 8)
    EXPECT_FDNET_ERROR(deserialize(bytes.substr(0, n)), Errc::corrupt_checkpoint);
  EXPECT_FDNET_ERROR(deserialize(bytes.substr(0, bytes.size() - 1)), Errc::corrupt_checkpoint);
  EXPECT_FDNET_ERROR(deserialize(bytes + "x"), Errc::corrupt_checkpoint);
}
