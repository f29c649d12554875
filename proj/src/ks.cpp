#include "fdnet/ks.hpp"

#include "fdnet/error.hpp"
#include "fdnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace fdnet {

Scalar ecdf_sup_distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.empty() || b.empty()) fail(Errc::invalid_sample, "KS distance needs two non-empty samples");
  std::vector<Scalar> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto m = static_cast<Scalar>(x.size());
  const auto n = static_cast<Scalar>(y.size());
  std::size_t i = 0, j = 0;
  Scalar d = 0.0;
  while (i < x.size() && j < y.size()) {
    const Scalar point = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == point) ++i;
    while (j < y.size() && y[j] == point) ++j;
    d = std::max(d, std::abs(static_cast<Scalar>(i) / m - static_cast<Scalar>(j) / n));
  }
  return d;
}

Scalar ks_p_value(Scalar statistic, Index m, Index n) {
  if (m < 1 || n < 1) fail(Errc::invalid_sample, "KS sample sizes must be positive");
  const Scalar effective = static_cast<Scalar>(m) * static_cast<Scalar>(n) / static_cast<Scalar>(m + n);
  return std::min(1.0, 2.0 * std::exp(-2.0 * statistic * statistic * effective));
}

Scalar ks_reject_threshold(Scalar alpha, Index m, Index n) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_parameter, "KS level must lie in (0, 1)");
  if (m < 1 || n < 1) fail(Errc::invalid_sample, "KS sample sizes must be positive");
  const Scalar mf = static_cast<Scalar>(m), nf = static_cast<Scalar>(n);
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) * std::sqrt((mf + nf) / (mf * nf));
}

KSResult ks_test(std::span<const Scalar> a, std::span<const Scalar> b, Scalar alpha) {
  KSResult r;
  r.statistic = ecdf_sup_distance(a, b);
  r.m = static_cast<Index>(a.size());
  r.n = static_cast<Index>(b.size());
  r.p_value = ks_p_value(r.statistic, r.m, r.n);
  r.reject = r.p_value < alpha;
  return r;
}

ShiftReport shift_report(std::span<const Scalar> series, Index n_windows, Index window_len, Scalar alpha,
                         std::uint64_t seed) {
  if (window_len < 1 || static_cast<Index>(series.size()) < window_len)
    fail(Errc::insufficient_data, "series of length " + std::to_string(series.size()) +
                                      " is shorter than the window length " + std::to_string(window_len));
  if (n_windows < 2) fail(Errc::invalid_parameter, "shift audit needs at least two windows");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_parameter, "KS level must lie in (0, 1)");

  ShiftReport rep;
  rep.windows = n_windows;
  rep.window_length = window_len;
  rep.alpha = alpha;
  rep.seed = seed;
  Engine rng(seed);
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(series.size()) - window_len);
  rep.starts.resize(static_cast<std::size_t>(n_windows));
  for (auto& s : rep.starts) s = pick(rng);

  auto window = [&](Index start) { return series.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(window_len)); };
  const auto reference = window(rep.starts.front());
  Index rejected = 0;
  for (std::size_t i = 1; i < rep.starts.size(); ++i) {
    const KSResult r = ks_test(reference, window(rep.starts[i]), alpha);
    rep.p_values.push_back(r.p_value);
    rejected += r.reject ? 1 : 0;
  }
  const auto count = static_cast<Scalar>(rep.p_values.size());
  Scalar total = 0.0;
  for (Scalar p : rep.p_values) total += p;
  rep.p_mean = total / count;
  Scalar sq = 0.0;
  for (Scalar p : rep.p_values) sq += (p - rep.p_mean) * (p - rep.p_mean);
  rep.p_std = std::sqrt(sq / count);
  rep.reject_rate = static_cast<Scalar>(rejected) / count;
  return rep;
}

void write_shift_csv(std::ostream& os, const ShiftReport& report, const std::string& dataset,
                     const std::string& column) {
  os << "dataset,column,rr,mean,std,windows,window_len,alpha,seed\n";
  os.precision(17);
  os << dataset << ',' << column << ',' << report.reject_rate << ',' << report.p_mean << ',' << report.p_std << ','
     << report.windows << ',' << report.window_length << ',' << report.alpha << ',' << report.seed << '\n';
}

}  // namespace fdnet
