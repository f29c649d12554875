#pragma once

#include "fdnet/data.hpp"
#include "fdnet/tensor.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fdnet {

class ForecastModel;

Scalar mse(std::span<const Scalar> pred, std::span<const Scalar> truth);
Scalar mae(std::span<const Scalar> pred, std::span<const Scalar> truth);

/// Symmetric MAPE in percent, 200/n * sum |x - y| / (|x| + |y|). A 0/0 term
/// contributes 0.
Scalar smape(std::span<const Scalar> pred, std::span<const Scalar> truth);

/// Mean in-sample absolute m-step difference; the MASE denominator.
Scalar mase_scale(std::span<const Scalar> insample, Index m);
Scalar mase(std::span<const Scalar> pred, std::span<const Scalar> truth, std::span<const Scalar> insample, Index m);

/// Repeats the last observed season: forecast[h] = insample[n - m + h mod m].
std::vector<Scalar> seasonal_naive(std::span<const Scalar> insample, Index m, Index horizon);

/// 0.5 * (smape / ref_smape + mase / ref_mase).
Scalar owa(Scalar model_smape, Scalar model_mase, Scalar ref_smape, Scalar ref_mase);

struct WindowMetrics {
  Index start = 0;
  Scalar mse = 0, mae = 0;
  Scalar smape = 0, mase = 0;
  Scalar ref_smape = 0, ref_mase = 0;
};

/// MSE/MAE in standardized space; SMAPE/MASE/OWA in original units against
/// a seasonal-naive reference. Aggregates are unweighted window means.
struct MetricsReport {
  Index periodicity = 1;
  Index windows = 0;
  Scalar mse = 0, mae = 0, smape = 0, mase = 0, owa = 0;
  Scalar ref_smape = 0, ref_mase = 0;
  std::vector<Scalar> horizon_mse, horizon_mae, horizon_smape;
  std::vector<WindowMetrics> per_window;

  void write_csv(std::ostream& os) const;
  std::string to_json() const;
};

/// Scores standardized predictions, one [L_out x V] matrix per window of
/// `windows`, which must index a standardized series. For MASE and the
/// reference, the in-sample series of a variate is that series in original
/// units up to the window's forecast origin.
MetricsReport evaluate_predictions(const std::vector<RowMatrix>& predictions, const WindowSet& windows,
                                   const Standardizer& standardizer, Index periodicity);

/// Eval-mode predictions for every window, in window order.
std::vector<RowMatrix> predict_windows(const ForecastModel& model, const WindowSet& windows, Index batch_size = 16);

MetricsReport evaluate_run(const ForecastModel& model, const WindowSet& windows, const Standardizer& standardizer,
                           Index periodicity, Index batch_size = 16);

}  // namespace fdnet
