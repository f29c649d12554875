#include "fdnet/metrics.hpp"

#include "fdnet/error.hpp"
#include "fdnet/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace fdnet {

namespace {

void check_pair(std::span<const Scalar> pred, std::span<const Scalar> truth, const char* what) {
  if (pred.size() != truth.size() || pred.empty())
    fail(Errc::invalid_shape, std::string(what) + ": prediction and truth must have equal, non-zero length");
}

Scalar smape_term(Scalar p, Scalar t) {
  const Scalar denom = std::abs(t) + std::abs(p);
  return denom == 0.0 ? 0.0 : std::abs(t - p) / denom;
}

/// Running sums of |x_j - x_{j-m}|: out[n] is the sum over j in [m, n).
std::vector<Scalar> seasonal_abs_diff_prefix(std::span<const Scalar> x, Index m) {
  std::vector<Scalar> out(x.size() + 1, 0.0);
  Scalar acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (static_cast<Index>(j) >= m) acc += std::abs(x[j] - x[j - static_cast<std::size_t>(m)]);
    out[j + 1] = acc;
  }
  return out;
}

}  // namespace

Scalar mse(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  check_pair(pred, truth, "mse");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<Scalar>(pred.size());
}

Scalar mae(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  check_pair(pred, truth, "mae");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<Scalar>(pred.size());
}

Scalar smape(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  check_pair(pred, truth, "smape");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += smape_term(pred[i], truth[i]);
  return 200.0 * s / static_cast<Scalar>(pred.size());
}

Scalar mase_scale(std::span<const Scalar> insample, Index m) {
  if (m < 1) fail(Errc::invalid_parameter, "periodicity must be positive");
  if (static_cast<Index>(insample.size()) <= m)
    fail(Errc::insufficient_data, "in-sample series must be longer than the periodicity");
  const auto prefix = seasonal_abs_diff_prefix(insample, m);
  const Scalar scale = prefix.back() / static_cast<Scalar>(static_cast<Index>(insample.size()) - m);
  if (!(scale > 0.0)) fail(Errc::undefined_scale, "in-sample seasonal differences are all zero");
  return scale;
}

Scalar mase(std::span<const Scalar> pred, std::span<const Scalar> truth, std::span<const Scalar> insample, Index m) {
  return mae(pred, truth) / mase_scale(insample, m);
}

std::vector<Scalar> seasonal_naive(std::span<const Scalar> insample, Index m, Index horizon) {
  if (m < 1) fail(Errc::invalid_parameter, "periodicity must be positive");
  if (static_cast<Index>(insample.size()) < m)
    fail(Errc::insufficient_data, "in-sample series is shorter than one season");
  const Index n = static_cast<Index>(insample.size());
  std::vector<Scalar> out(static_cast<std::size_t>(horizon));
  for (Index h = 0; h < horizon; ++h) out[static_cast<std::size_t>(h)] = insample[static_cast<std::size_t>(n - m + h % m)];
  return out;
}

Scalar owa(Scalar model_smape, Scalar model_mase, Scalar ref_smape, Scalar ref_mase) {
  if (!(ref_smape > 0.0) || !(ref_mase > 0.0))
    fail(Errc::undefined_owa, "reference SMAPE and MASE must be positive");
  return 0.5 * (model_smape / ref_smape + model_mase / ref_mase);
}

MetricsReport evaluate_predictions(const std::vector<RowMatrix>& predictions, const WindowSet& windows,
                                   const Standardizer& standardizer, Index periodicity) {
  if (predictions.size() != static_cast<std::size_t>(windows.size()) || predictions.empty())
    fail(Errc::invalid_shape, "one prediction per window is required");
  const Index H = windows.output_length(), V = windows.variates();
  const RowMatrix original = standardizer.inverse_transform(windows.values());

  std::vector<std::vector<Scalar>> columns(static_cast<std::size_t>(V));
  std::vector<std::vector<Scalar>> prefixes(static_cast<std::size_t>(V));
  for (Index v = 0; v < V; ++v) {
    auto& c = columns[static_cast<std::size_t>(v)];
    c.resize(static_cast<std::size_t>(original.rows()));
    for (Index t = 0; t < original.rows(); ++t) c[static_cast<std::size_t>(t)] = original(t, v);
    prefixes[static_cast<std::size_t>(v)] = seasonal_abs_diff_prefix(c, periodicity);
  }

  MetricsReport rep;
  rep.periodicity = periodicity;
  rep.windows = windows.size();
  rep.horizon_mse.assign(static_cast<std::size_t>(H), 0.0);
  rep.horizon_mae.assign(static_cast<std::size_t>(H), 0.0);
  rep.horizon_smape.assign(static_cast<std::size_t>(H), 0.0);

  for (Index w = 0; w < windows.size(); ++w) {
    const RowMatrix& pred = predictions[static_cast<std::size_t>(w)];
    if (pred.rows() != H || pred.cols() != V) fail(Errc::invalid_shape, "prediction shape does not match window");
    const RowMatrix truth = windows.target(w);
    const RowMatrix pred_o = standardizer.inverse_transform(pred);
    const RowMatrix truth_o = standardizer.inverse_transform(truth);
    const Index origin = windows.origin(w);
    if (origin <= periodicity)
      fail(Errc::insufficient_data, "forecast origin " + std::to_string(origin) + " leaves no seasonal history");

    WindowMetrics wm;
    wm.start = windows.start(w);
    wm.mse = mse({pred.data(), static_cast<std::size_t>(pred.size())}, {truth.data(), static_cast<std::size_t>(truth.size())});
    wm.mae = mae({pred.data(), static_cast<std::size_t>(pred.size())}, {truth.data(), static_cast<std::size_t>(truth.size())});
    for (Index v = 0; v < V; ++v) {
      const auto& col = columns[static_cast<std::size_t>(v)];
      const std::span<const Scalar> insample(col.data(), static_cast<std::size_t>(origin));
      const Scalar scale = prefixes[static_cast<std::size_t>(v)][static_cast<std::size_t>(origin)] /
                           static_cast<Scalar>(origin - periodicity);
      if (!(scale > 0.0)) fail(Errc::undefined_scale, "in-sample seasonal differences are all zero");
      std::vector<Scalar> p(static_cast<std::size_t>(H)), t(static_cast<std::size_t>(H));
      for (Index h = 0; h < H; ++h) {
        p[static_cast<std::size_t>(h)] = pred_o(h, v);
        t[static_cast<std::size_t>(h)] = truth_o(h, v);
      }
      const auto ref = seasonal_naive(insample, periodicity, H);
      wm.smape += smape(p, t);
      wm.mase += mae(p, t) / scale;
      wm.ref_smape += smape(ref, t);
      wm.ref_mase += mae(ref, t) / scale;
    }
    wm.smape /= static_cast<Scalar>(V);
    wm.mase /= static_cast<Scalar>(V);
    wm.ref_smape /= static_cast<Scalar>(V);
    wm.ref_mase /= static_cast<Scalar>(V);

    for (Index h = 0; h < H; ++h) {
      for (Index v = 0; v < V; ++v) {
        const Scalar e = pred(h, v) - truth(h, v);
        rep.horizon_mse[static_cast<std::size_t>(h)] += e * e;
        rep.horizon_mae[static_cast<std::size_t>(h)] += std::abs(e);
        rep.horizon_smape[static_cast<std::size_t>(h)] += smape_term(pred_o(h, v), truth_o(h, v));
      }
    }
    rep.per_window.push_back(wm);
  }

  const auto n = static_cast<Scalar>(rep.windows);
  for (const auto& wm : rep.per_window) {
    rep.mse += wm.mse;
    rep.mae += wm.mae;
    rep.smape += wm.smape;
    rep.mase += wm.mase;
    rep.ref_smape += wm.ref_smape;
    rep.ref_mase += wm.ref_mase;
  }
  rep.mse /= n;
  rep.mae /= n;
  rep.smape /= n;
  rep.mase /= n;
  rep.ref_smape /= n;
  rep.ref_mase /= n;
  rep.owa = owa(rep.smape, rep.mase, rep.ref_smape, rep.ref_mase);
  const auto per_h = n * static_cast<Scalar>(V);
  for (Index h = 0; h < H; ++h) {
    rep.horizon_mse[static_cast<std::size_t>(h)] /= per_h;
    rep.horizon_mae[static_cast<std::size_t>(h)] /= per_h;
    rep.horizon_smape[static_cast<std::size_t>(h)] *= 200.0 / per_h;
  }
  return rep;
}

std::vector<RowMatrix> predict_windows(const ForecastModel& model, const WindowSet& windows, Index batch_size) {
  std::vector<RowMatrix> out;
  out.reserve(static_cast<std::size_t>(windows.size()));
  ForwardContext ctx;
  ctx.mode = Mode::eval;
  const Index H = model.config().output_length, V = windows.variates();
  std::vector<Index> which;
  for (Index begin = 0; begin < windows.size(); begin += batch_size) {
    const Index end = std::min(windows.size(), begin + batch_size);
    which.clear();
    for (Index i = begin; i < end; ++i) which.push_back(i);
    Graph graph;
    Var x = graph.constant(windows.batch_inputs(which));
    const Tensor& y = model.forward(graph, x, ctx).prediction.value();
    for (Index b = 0; b < end - begin; ++b) out.emplace_back(ConstMatrixMap(y.ptr() + b * H * V, H, V));
  }
  return out;
}

MetricsReport evaluate_run(const ForecastModel& model, const WindowSet& windows, const Standardizer& standardizer,
                           Index periodicity, Index batch_size) {
  if (windows.size() < 1) fail(Errc::insufficient_data, "no evaluation windows");
  return evaluate_predictions(predict_windows(model, windows, batch_size), windows, standardizer, periodicity);
}

void MetricsReport::write_csv(std::ostream& os) const {
  os.precision(17);
  os << "scope,index,mse,mae,smape,mase,owa\n";
  os << "aggregate,-1," << mse << ',' << mae << ',' << smape << ',' << mase << ',' << owa << '\n';
  for (std::size_t h = 0; h < horizon_mse.size(); ++h)
    os << "horizon," << h << ',' << horizon_mse[h] << ',' << horizon_mae[h] << ',' << horizon_smape[h] << ",,\n";
  for (const auto& w : per_window) {
    const Scalar w_owa = w.ref_smape > 0 && w.ref_mase > 0 ? fdnet::owa(w.smape, w.mase, w.ref_smape, w.ref_mase)
                                                           : std::nan("");
    os << "window," << w.start << ',' << w.mse << ',' << w.mae << ',' << w.smape << ',' << w.mase << ',' << w_owa
       << '\n';
  }
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["periodicity"] = periodicity;
  j["windows"] = windows;
  j["mse"] = mse;
  j["mae"] = mae;
  j["smape"] = smape;
  j["mase"] = mase;
  j["owa"] = owa;
  j["reference"] = {{"model", "seasonal_naive"}, {"smape", ref_smape}, {"mase", ref_mase}};
  j["horizon"] = {{"mse", horizon_mse}, {"mae", horizon_mae}, {"smape", horizon_smape}};
  return j.dump(2);
}

}  // namespace fdnet
