#pragma once

#include "fdnet/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fdnet {

/// Parsed multivariate series; values is T x V, rows in file order.
struct TimeSeriesFrame {
  std::vector<std::string> columns;
  RowMatrix values;
  std::string timestamp_column;          // empty when the file has none
  std::vector<std::string> timestamps;   // parsed, never fed to the model
  std::string target;

  Index rows() const { return values.rows(); }
  Index variates() const { return values.cols(); }
  Index column_index(std::string_view name) const;
  /// Rows [begin, end).
  TimeSeriesFrame row_range(Index begin, Index end) const;
  /// Keep the named columns, in the given order.
  TimeSeriesFrame select(const std::vector<std::string>& names) const;
};

/// Reads a headed CSV. A first column whose first data cell is not numeric
/// is taken as the timestamp column; every other cell must parse as a finite
/// number. Accepts LF and CRLF line endings.
TimeSeriesFrame load_csv(const std::filesystem::path& path, const std::string& target_column);
TimeSeriesFrame parse_csv(std::istream& in, const std::string& target_column, const std::string& source = "<stream>");

/// Ratio mode: train = floor(T * train), val ends at floor(T * (train + val)),
/// the rest is test. Month mode: a month is 30 days of `rows_per_day` rows;
/// the test block takes `test` months after train and val (or the remainder
/// when the series is shorter).
struct SplitSpec {
  enum class Kind { ratio, months };
  Kind kind = Kind::ratio;
  Scalar train = 0.7, val = 0.1, test = 0.2;
  Index rows_per_day = 24;

  static SplitSpec ratios(Scalar train, Scalar val, Scalar test);
  static SplitSpec months(Scalar train, Scalar val, Scalar test, Index rows_per_day);
  /// "ratio:0.7,0.1,0.2" or "months:12,4,4"; month mode reads the frequency.
  static SplitSpec parse(std::string_view text, std::string_view frequency = "1h");
  std::string to_string() const;
};

/// Rows per day for a sampling frequency such as "1h", "15min", "10min", "1d".
Index rows_per_day(std::string_view frequency);

struct SplitBounds {
  Index train_end, val_end, test_end;
};

struct Splits {
  TimeSeriesFrame train, val, test;
  SplitBounds bounds;
};

SplitBounds split_bounds(Index rows, const SplitSpec& spec);
Splits split(const TimeSeriesFrame& frame, const SplitSpec& spec);

/// Per-variate z-score fitted on the training split (population std).
struct Standardizer {
  Array mean;
  Array std;
  std::vector<std::string> degenerate_columns;  // std replaced by 1

  static Standardizer fit(const TimeSeriesFrame& train);
  TimeSeriesFrame transform(const TimeSeriesFrame& frame) const;
  TimeSeriesFrame inverse_transform(const TimeSeriesFrame& frame) const;
  RowMatrix transform(const RowMatrix& values) const;
  RowMatrix inverse_transform(const RowMatrix& values) const;
};

/// Sliding (input, target) windows over a series. Holds the values it
/// indexes, so it stays valid independently of the source frame.
class WindowSet {
 public:
  WindowSet(const RowMatrix& values, Index input_length, Index output_length, Index stride = 1);

  Index size() const noexcept { return count_; }
  Index input_length() const noexcept { return input_length_; }
  Index output_length() const noexcept { return output_length_; }
  Index variates() const { return values_->cols(); }
  Index start(Index i) const;
  /// First target row of window i.
  Index origin(Index i) const { return start(i) + input_length_; }

  RowMatrix input(Index i) const;
  RowMatrix target(Index i) const;
  const RowMatrix& values() const { return *values_; }

  /// [B,1,L_in,V] tensor of the selected windows' inputs.
  Tensor batch_inputs(std::span<const Index> which) const;
  /// [B,L_out,V] tensor of the selected windows' targets.
  Tensor batch_targets(std::span<const Index> which) const;

 private:
  std::shared_ptr<const RowMatrix> values_;
  Index input_length_, output_length_, stride_, count_;
};

WindowSet make_windows(const TimeSeriesFrame& frame, Index input_length, Index output_length, Index stride = 1);

}  // namespace fdnet
