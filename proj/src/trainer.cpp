#include "fdnet/trainer.hpp"

#include "fdnet/error.hpp"
#include "fdnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace fdnet {

Var mse_loss(Var pred, Var target) {
  if (pred.shape() != target.shape())
    fail(Errc::invalid_shape, "mse_loss shapes differ: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  Var diff = sub(pred, target);
  return mean(mul(diff, diff));
}

AdamState AdamState::like(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, Scalar lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
    fail(Errc::invalid_argument, "Adam: parameter, gradient and moment counts differ");
  ++state.t;
  const Scalar c1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.t));
  const Scalar c2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.shape() != grads[i].shape() || p.shape() != state.m[i].shape())
      fail(Errc::invalid_shape, "Adam: shape mismatch at parameter " + std::to_string(i));
    Array& m = state.m[i].data();
    Array& v = state.v[i].data();
    const Array& g = grads[i].data();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p.data() -= lr * (m / c1) / ((v / c2).sqrt() + state.eps);
  }
}

Scalar lr_for_epoch(Scalar base_lr, Index epoch) {
  if (epoch < 0) fail(Errc::invalid_argument, "epoch must be non-negative");
  return std::ldexp(base_lr, -static_cast<int>(epoch));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(Errc::invalid_parameter, "learning rate must be positive");
  if (batch_size < 1) fail(Errc::invalid_parameter, "batch size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(Errc::invalid_parameter, "dropout must lie in [0, 1)");
  if (max_epochs < 1) fail(Errc::invalid_parameter, "max_epochs must be positive");
  if (patience < 1 || patience > max_epochs) fail(Errc::invalid_parameter, "patience must lie in [1, max_epochs]");
  if (max_steps < 0) fail(Errc::invalid_parameter, "max_steps must be non-negative");
}

const EpochRecord& TrainHistory::best() const {
  if (best_epoch < 0) fail(Errc::invalid_argument, "history is empty");
  for (const auto& r : epochs)
    if (r.epoch == best_epoch) return r;
  fail(Errc::invalid_argument, "best epoch missing from history");
}

void TrainHistory::write_csv(std::ostream& os) const {
  const auto old = os.precision(17);
  os << "epoch,lr,train_mse,val_mse\n";
  for (const auto& r : epochs) os << r.epoch << ',' << r.lr << ',' << r.train_mse << ',' << r.val_mse << '\n';
  os.precision(old);
}

Scalar evaluate_mse(const ForecastModel& model, const WindowSet& windows, Index batch_size) {
  if (windows.size() < 1) fail(Errc::insufficient_data, "no windows to evaluate");
  ForwardContext ctx;
  ctx.mode = Mode::eval;
  Scalar total = 0.0;
  Index count = 0;
  std::vector<Index> which;
  for (Index begin = 0; begin < windows.size(); begin += batch_size) {
    const Index end = std::min(windows.size(), begin + batch_size);
    which.resize(static_cast<std::size_t>(end - begin));
    std::iota(which.begin(), which.end(), begin);
    Graph graph;
    const Tensor& pred = model.forward(graph, graph.constant(windows.batch_inputs(which)), ctx).prediction.value();
    const Tensor target = windows.batch_targets(which);
    total += (pred.data() - target.data()).square().sum();
    count += pred.size();
  }
  return total / static_cast<Scalar>(count);
}

TrainHistory train(ForecastModel& model, const WindowSet& train_windows, const WindowSet& val_windows,
                   const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_windows.size() < 1 || val_windows.size() < 1)
    fail(Errc::insufficient_data, "training needs at least one training and one validation window");

  auto params = model.parameters();
  std::vector<Tensor*> tensors;
  for (auto& p : params) tensors.push_back(p.tensor);
  AdamState adam = AdamState::like(snapshot(model));

  TrainHistory history;
  std::vector<Tensor> best_params = snapshot(model);
  std::vector<Index> order(static_cast<std::size_t>(train_windows.size()));
  std::vector<Tensor> grads(tensors.size());
  Index step = 0, bad_epochs = 0;

  for (Index epoch = 0; epoch < config.max_epochs; ++epoch) {
    const Scalar lr = lr_for_epoch(config.learning_rate, epoch);
    std::iota(order.begin(), order.end(), Index{0});
    Engine shuffle_rng(mix_seed(mix_seed(config.seed, hash_name("shuffle")), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    bool capped = false;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        capped = true;
        break;
      }
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::span<const Index> batch(order.data() + begin, end - begin);

      ForwardContext ctx{Mode::train, config.seed, static_cast<std::uint64_t>(step), config.dropout};
      Graph graph;
      Var x = graph.constant(train_windows.batch_inputs(batch));
      Var y = graph.constant(train_windows.batch_targets(batch));
      Var loss = mse_loss(model.forward(graph, x, ctx).prediction, y);
      const Scalar value = loss.value().item();
      if (!std::isfinite(value))
        fail(Errc::training_diverged,
             "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      graph.backward(loss);
      for (std::size_t i = 0; i < tensors.size(); ++i) grads[i] = graph.grad(*tensors[i]);
      adam_step(tensors, grads, adam, lr);
      ++step;
      if (hooks.on_step) hooks.on_step(step, value);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.steps = step;
    rec.train_mse = evaluate_mse(model, train_windows, config.batch_size);
    rec.val_mse = hooks.validator ? hooks.validator(model, epoch) : evaluate_mse(model, val_windows, config.batch_size);
    if (!std::isfinite(rec.train_mse) || !std::isfinite(rec.val_mse))
      fail(Errc::training_diverged, "non-finite evaluation loss after epoch " + std::to_string(epoch));
    history.epochs.push_back(rec);
    if (config.verbose)
      std::cerr << "epoch " << epoch << " lr " << lr << " train_mse " << rec.train_mse << " val_mse " << rec.val_mse
                << '\n';

    if (rec.val_mse < history.best_val_mse) {
      history.best_val_mse = rec.val_mse;
      history.best_epoch = epoch;
      best_params = snapshot(model);
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      history.stopped_early = true;
      break;
    }
    if (capped || (config.max_steps > 0 && step >= config.max_steps)) break;
  }

  restore(model, best_params);
  return history;
}

}  // namespace fdnet
