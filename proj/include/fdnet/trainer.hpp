#pragma once

#include "fdnet/data.hpp"
#include "fdnet/model.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

namespace fdnet {

/// Mean of squared differences over all elements.
Var mse_loss(Var pred, Var target);

struct AdamState {
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Index t = 0;
  std::vector<Tensor> m, v;

  static AdamState like(std::span<const Tensor> params);
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, Scalar lr);

/// base_lr / 2^epoch.
Scalar lr_for_epoch(Scalar base_lr, Index epoch);

struct TrainConfig {
  Scalar learning_rate = 1e-4;
  Index batch_size = 16;
  Scalar dropout = 0.1;
  Index max_epochs = 10;
  Index patience = 3;
  std::uint64_t seed = 4321;
  Index max_steps = 0;  // 0: no cap
  bool verbose = false;

  void validate() const;
};

struct EpochRecord {
  Index epoch = 0;
  Scalar lr = 0.0;
  Scalar train_mse = 0.0;  // eval mode, over all training windows
  Scalar val_mse = 0.0;
  Index steps = 0;         // optimizer steps taken so far
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  Index best_epoch = -1;
  Scalar best_val_mse = std::numeric_limits<Scalar>::infinity();
  bool stopped_early = false;

  const EpochRecord& best() const;
  void write_csv(std::ostream& os) const;
};

/// Eval-mode MSE over every window, reduced in window order.
Scalar evaluate_mse(const ForecastModel& model, const WindowSet& windows, Index batch_size = 16);

struct TrainHooks {
  /// Replaces the validation loss when set.
  std::function<Scalar(const ForecastModel&, Index epoch)> validator;
  /// Called after every optimizer step with the batch loss.
  std::function<void(Index step, Scalar loss)> on_step;
};

/// Fits `model` on the training windows and leaves it holding the
/// parameters of the epoch with the lowest validation MSE.
TrainHistory train(ForecastModel& model, const WindowSet& train_windows, const WindowSet& val_windows,
                   const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace fdnet
