#pragma once

#include "fdnet/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fdnet {

/// sup_x |F_a(x) - F_b(x)| over the pooled sample points, by a two-pointer
/// sweep over sorted copies. Tied values advance both sides before the
/// difference is taken.
Scalar ecdf_sup_distance(std::span<const Scalar> a, std::span<const Scalar> b);

/// Large-sample approximation min(1, 2 exp(-2 D^2 m n / (m + n))).
Scalar ks_p_value(Scalar statistic, Index m, Index n);

/// Critical distance sqrt(-ln(alpha / 2) / 2) * sqrt((m + n) / (m n));
/// the null is rejected when D exceeds it.
Scalar ks_reject_threshold(Scalar alpha, Index m, Index n);

struct KSResult {
  Scalar statistic;
  Scalar p_value;
  Index m, n;
  bool reject;
};

KSResult ks_test(std::span<const Scalar> a, std::span<const Scalar> b, Scalar alpha = 0.05);

/// Distribution-shift audit: P-values of one reference window against the
/// other sampled windows.
struct ShiftReport {
  Scalar reject_rate = 0.0;
  Scalar p_mean = 0.0;
  Scalar p_std = 0.0;  // population form over the n - 1 P-values
  Index windows = 0;
  Index window_length = 0;
  Scalar alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<Index> starts;
  std::vector<Scalar> p_values;
};

/// Window starts are drawn uniformly with replacement from
/// [0, size - window_len] using mt19937_64(seed).
ShiftReport shift_report(std::span<const Scalar> series, Index n_windows = 1000, Index window_len = 96,
                         Scalar alpha = 0.05, std::uint64_t seed = 4321);

void write_shift_csv(std::ostream& os, const ShiftReport& report, const std::string& dataset,
                     const std::string& column);

}  // namespace fdnet
