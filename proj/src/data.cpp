#include "fdnet/data.hpp"

#include "fdnet/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fdnet {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::optional<Scalar> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  Scalar v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool getline_any(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

Index TimeSeriesFrame::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<Index>(i);
  fail(Errc::schema, "column '" + std::string(name) + "' not found");
}

TimeSeriesFrame TimeSeriesFrame::row_range(Index begin, Index end) const {
  if (begin < 0 || end > rows() || begin > end) fail(Errc::invalid_argument, "row range out of bounds");
  TimeSeriesFrame out;
  out.columns = columns;
  out.values = values.middleRows(begin, end - begin);
  out.timestamp_column = timestamp_column;
  if (!timestamps.empty()) out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  out.target = target;
  return out;
}

TimeSeriesFrame TimeSeriesFrame::select(const std::vector<std::string>& names) const {
  TimeSeriesFrame out;
  out.columns = names;
  out.values.resize(rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.values.col(static_cast<Index>(j)) = values.col(column_index(names[j]));
  out.timestamp_column = timestamp_column;
  out.timestamps = timestamps;
  out.target = target;
  return out;
}

TimeSeriesFrame parse_csv(std::istream& in, const std::string& target_column, const std::string& source) {
  std::string line;
  if (!getline_any(in, line)) fail(Errc::parse, source + ": missing header row");
  std::vector<std::string> header;
  for (const auto& h : split_fields(line)) header.emplace_back(trim(h));
  if (header.empty()) fail(Errc::parse, source + ": empty header row");

  std::vector<std::vector<std::string>> rows;
  while (getline_any(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_fields(line));
    if (rows.back().size() != header.size())
      fail(Errc::parse, source + ": row " + std::to_string(rows.size() + 1) + " has " +
                            std::to_string(rows.back().size()) + " fields, header has " +
                            std::to_string(header.size()));
  }
  if (rows.empty()) fail(Errc::parse, source + ": no data rows");

  TimeSeriesFrame frame;
  std::size_t first_numeric = 0;
  if (!parse_number(rows.front().front())) {
    frame.timestamp_column = header.front();
    first_numeric = 1;
  }
  frame.columns.assign(header.begin() + static_cast<std::ptrdiff_t>(first_numeric), header.end());
  if (frame.columns.empty()) fail(Errc::schema, source + ": no numeric columns");
  bool has_target = false;
  for (const auto& c : frame.columns) has_target = has_target || c == target_column;
  if (!has_target) fail(Errc::schema, source + ": target column '" + target_column + "' not found");
  frame.target = target_column;

  frame.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(frame.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (first_numeric) frame.timestamps.emplace_back(trim(rows[r].front()));
    for (std::size_t c = first_numeric; c < header.size(); ++c) {
      auto v = parse_number(rows[r][c]);
      if (!v || !std::isfinite(*v))
        fail(Errc::parse, source + ": row " + std::to_string(r + 2) + ", column '" + header[c] +
                              "': not a finite number: '" + std::string(trim(rows[r][c])) + "'");
      frame.values(static_cast<Index>(r), static_cast<Index>(c - first_numeric)) = *v;
    }
  }
  return frame;
}

TimeSeriesFrame load_csv(const std::filesystem::path& path, const std::string& target_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open dataset '" + path.string() + "'");
  return parse_csv(in, target_column, path.string());
}

// ---------------------------------------------------------------------------
// Splits

SplitSpec SplitSpec::ratios(Scalar train, Scalar val, Scalar test) {
  SplitSpec s;
  s.kind = Kind::ratio;
  s.train = train;
  s.val = val;
  s.test = test;
  if (train <= 0 || val <= 0 || test <= 0 || std::abs(train + val + test - 1.0) > 1e-9)
    fail(Errc::invalid_split, "split fractions must be positive and sum to 1");
  return s;
}

SplitSpec SplitSpec::months(Scalar train, Scalar val, Scalar test, Index rows_per_day) {
  SplitSpec s;
  s.kind = Kind::months;
  s.train = train;
  s.val = val;
  s.test = test;
  s.rows_per_day = rows_per_day;
  if (train <= 0 || val <= 0 || test <= 0 || rows_per_day < 1)
    fail(Errc::invalid_split, "month split needs positive month counts and a known frequency");
  return s;
}

Index rows_per_day(std::string_view frequency) {
  auto f = std::string(trim(frequency));
  Index amount = 1;
  std::size_t i = 0;
  while (i < f.size() && std::isdigit(static_cast<unsigned char>(f[i]))) ++i;
  if (i > 0) amount = std::stoll(f.substr(0, i));
  const std::string unit = f.substr(i);
  Index minutes = 0;
  if (unit == "min" || unit == "m" || unit == "t")
    minutes = amount;
  else if (unit == "h")
    minutes = 60 * amount;
  else if (unit == "d" || unit == "day")
    minutes = 1440 * amount;
  if (amount < 1 || minutes == 0 || 1440 % minutes != 0)
    fail(Errc::invalid_split, "unsupported sampling frequency '" + f + "'");
  return 1440 / minutes;
}

SplitSpec SplitSpec::parse(std::string_view text, std::string_view frequency) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) fail(Errc::invalid_split, "split must look like ratio:a,b,c or months:a,b,c");
  const std::string kind(text.substr(0, colon));
  std::vector<Scalar> parts;
  std::stringstream ss{std::string(text.substr(colon + 1))};
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto v = parse_number(item);
    if (!v) fail(Errc::invalid_split, "bad split value '" + item + "'");
    parts.push_back(*v);
  }
  if (parts.size() != 3) fail(Errc::invalid_split, "split needs three values");
  if (kind == "ratio") return ratios(parts[0], parts[1], parts[2]);
  if (kind == "months") return months(parts[0], parts[1], parts[2], fdnet::rows_per_day(frequency));
  fail(Errc::invalid_split, "unknown split kind '" + kind + "'");
}

std::string SplitSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << (kind == Kind::ratio ? "ratio:" : "months:") << train << ',' << val << ',' << test;
  return os.str();
}

SplitBounds split_bounds(Index rows, const SplitSpec& spec) {
  SplitBounds b{};
  if (spec.kind == SplitSpec::Kind::ratio) {
    b.train_end = static_cast<Index>(std::floor(static_cast<Scalar>(rows) * spec.train + 1e-9));
    b.val_end = static_cast<Index>(std::floor(static_cast<Scalar>(rows) * (spec.train + spec.val) + 1e-9));
    b.test_end = rows;
  } else {
    const Scalar month = 30.0 * static_cast<Scalar>(spec.rows_per_day);
    b.train_end = static_cast<Index>(std::floor(spec.train * month));
    b.val_end = static_cast<Index>(std::floor((spec.train + spec.val) * month));
    b.test_end = std::min(rows, static_cast<Index>(std::floor((spec.train + spec.val + spec.test) * month)));
  }
  if (b.train_end < 1 || b.val_end <= b.train_end || b.test_end <= b.val_end || b.val_end > rows)
    fail(Errc::invalid_split, std::to_string(rows) + " rows leave an empty split under " + spec.to_string());
  return b;
}

Splits split(const TimeSeriesFrame& frame, const SplitSpec& spec) {
  const SplitBounds b = split_bounds(frame.rows(), spec);
  return {frame.row_range(0, b.train_end), frame.row_range(b.train_end, b.val_end),
          frame.row_range(b.val_end, b.test_end), b};
}

// ---------------------------------------------------------------------------
// Standardization

Standardizer Standardizer::fit(const TimeSeriesFrame& train) {
  if (train.rows() < 1) fail(Errc::insufficient_data, "cannot fit a standardizer on zero rows");
  Standardizer s;
  const Scalar n = static_cast<Scalar>(train.rows());
  s.mean = train.values.colwise().mean().transpose().array();
  s.std.resize(train.variates());
  for (Index j = 0; j < train.variates(); ++j) {
    const Scalar var = (train.values.col(j).array() - s.mean[j]).square().sum() / n;
    s.std[j] = std::sqrt(var);
    if (!(s.std[j] > 0.0)) {
      s.std[j] = 1.0;
      s.degenerate_columns.push_back(train.columns.at(static_cast<std::size_t>(j)));
      std::cerr << "warning: column '" << train.columns[static_cast<std::size_t>(j)]
                << "' has zero variance on the training split; using std = 1\n";
    }
  }
  return s;
}

RowMatrix Standardizer::transform(const RowMatrix& values) const {
  if (values.cols() != mean.size()) fail(Errc::incompatible_data, "variate count does not match standardizer");
  RowMatrix out = values;
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = ((out.col(j).array() - mean[j]) / std[j]).matrix();
  return out;
}

RowMatrix Standardizer::inverse_transform(const RowMatrix& values) const {
  if (values.cols() != mean.size()) fail(Errc::incompatible_data, "variate count does not match standardizer");
  RowMatrix out = values;
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = (out.col(j).array() * std[j] + mean[j]).matrix();
  return out;
}

TimeSeriesFrame Standardizer::transform(const TimeSeriesFrame& frame) const {
  TimeSeriesFrame out = frame;
  out.values = transform(frame.values);
  return out;
}

TimeSeriesFrame Standardizer::inverse_transform(const TimeSeriesFrame& frame) const {
  TimeSeriesFrame out = frame;
  out.values = inverse_transform(frame.values);
  return out;
}

// ---------------------------------------------------------------------------
// Windows

WindowSet::WindowSet(const RowMatrix& values, Index input_length, Index output_length, Index stride)
    : values_(std::make_shared<const RowMatrix>(values)),
      input_length_(input_length),
      output_length_(output_length),
      stride_(stride),
      count_(0) {
  if (input_length < 1 || output_length < 1 || stride < 1)
    fail(Errc::invalid_parameter, "window lengths and stride must be positive");
  const Index T = values.rows();
  if (T < input_length + output_length)
    fail(Errc::insufficient_data, std::to_string(T) + " rows cannot hold one window of " +
                                      std::to_string(input_length) + " + " + std::to_string(output_length));
  count_ = (T - input_length - output_length) / stride + 1;
}

Index WindowSet::start(Index i) const {
  if (i < 0 || i >= count_) fail(Errc::invalid_window, "window " + std::to_string(i) + " out of range");
  return i * stride_;
}

RowMatrix WindowSet::input(Index i) const { return values_->middleRows(start(i), input_length_); }
RowMatrix WindowSet::target(Index i) const { return values_->middleRows(origin(i), output_length_); }

Tensor WindowSet::batch_inputs(std::span<const Index> which) const {
  const Index B = static_cast<Index>(which.size()), V = variates();
  Tensor out({B, 1, input_length_, V}, 0.0);
  for (Index b = 0; b < B; ++b)
    MatrixMap(out.ptr() + b * input_length_ * V, input_length_, V) = values_->middleRows(start(which[b]), input_length_);
  return out;
}

Tensor WindowSet::batch_targets(std::span<const Index> which) const {
  const Index B = static_cast<Index>(which.size()), V = variates();
  Tensor out({B, output_length_, V}, 0.0);
  for (Index b = 0; b < B; ++b)
    MatrixMap(out.ptr() + b * output_length_ * V, output_length_, V) =
        values_->middleRows(origin(which[b]), output_length_);
  return out;
}

WindowSet make_windows(const TimeSeriesFrame& frame, Index input_length, Index output_length, Index stride) {
  return WindowSet(frame.values, input_length, output_length, stride);
}

}  // namespace fdnet
