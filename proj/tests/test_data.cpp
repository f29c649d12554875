#include "fdnet/data.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fdnet;
using namespace fdnet::testing;

namespace {

TimeSeriesFrame parse(const std::string& text, const std::string& target = "OT") {
  std::istringstream in(text);
  return parse_csv(in, target);
}

TimeSeriesFrame ramp_frame(Index T, Index V) {
  TimeSeriesFrame f;
  for (Index v = 0; v < V; ++v) f.columns.push_back("c" + std::to_string(v));
  f.target = f.columns.back();
  f.values.resize(T, V);
  for (Index t = 0; t < T; ++t)
    for (Index v = 0; v < V; ++v) f.values(t, v) = static_cast<Scalar>(t) + 1000.0 * static_cast<Scalar>(v);
  return f;
}

TimeSeriesFrame random_frame(Index T, Index V, std::uint64_t seed) {
  TimeSeriesFrame f = ramp_frame(T, V);
  const Tensor r = random_tensor({T, V}, seed, 3.0);
  f.values = ConstMatrixMap(r.ptr(), T, V);
  f.values.col(0).array() += 5.0;
  return f;
}

}  // namespace

TEST(Csv, SmallFixtureInFileOrder) {
  const TimeSeriesFrame f = parse("date,HUFL,OT\n2016-07-01 00:00:00,5.8,30.5\n2016-07-01 01:00:00,5.6,27.8\n"
                                  "2016-07-01 02:00:00,-1e-2,27.5\n");
  EXPECT_EQ(f.timestamp_column, "date");
  EXPECT_EQ(f.columns, (std::vector<std::string>{"HUFL", "OT"}));
  EXPECT_EQ(f.timestamps.size(), 3u);
  EXPECT_EQ(f.timestamps[2], "2016-07-01 02:00:00");
  ASSERT_EQ(f.rows(), 3);
  ASSERT_EQ(f.variates(), 2);
  RowMatrix expected(3, 2);
  expected << 5.8, 30.5, 5.6, 27.8, -0.01, 27.5;
  EXPECT_EQ(f.values, expected);
  EXPECT_EQ(f.target, "OT");
  EXPECT_EQ(f.column_index("OT"), 1);

  const TimeSeriesFrame plain = parse("a,OT\n1,2\n3,4\n");
  EXPECT_TRUE(plain.timestamp_column.empty());
  EXPECT_EQ(plain.variates(), 2);
}

TEST(Csv, MissingTargetNamesColumn) {
  try {
    parse("date,HUFL\nx,1\n");
    FAIL() << "expected schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::schema);
    EXPECT_NE(std::string(e.what()).find("OT"), std::string::npos) << e.what();
  }
}

TEST(Csv, CrlfMatchesLf) {
  const TimeSeriesFrame lf = parse("date,a,OT\nd0,1.5,2\nd1,3,4.25\n");
  const TimeSeriesFrame crlf = parse("date,a,OT\r\nd0,1.5,2\r\nd1,3,4.25\r\n");
  EXPECT_EQ(lf.values, crlf.values);
  EXPECT_EQ(lf.columns, crlf.columns);
  EXPECT_EQ(lf.timestamps, crlf.timestamps);
}

TEST(Csv, ParseErrorsCarryLocation) {
  try {
    parse("date,a,OT\nd0,1,2\nd1,oops,4\n");
    FAIL() << "expected parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  }
  EXPECT_FDNET_ERROR(parse("date,a,OT\nd0,1,nan\n"), Errc::parse);
  EXPECT_FDNET_ERROR(parse("date,a,OT\nd0,1\n"), Errc::parse);
  EXPECT_FDNET_ERROR(parse("date,a,OT\n"), Errc::parse);
  EXPECT_FDNET_ERROR(load_csv("/nonexistent/file.csv", "OT"), Errc::io);
}

TEST(Csv, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "fdnet_test_data.csv";
  {
    std::ofstream out(path, std::ios::binary);
    out << "date,x,OT\r\n2020-01-01,1,2\r\n2020-01-02,3,4\r\n";
  }
  const TimeSeriesFrame f = load_csv(path, "OT");
  EXPECT_EQ(f.rows(), 2);
  EXPECT_EQ(f.values(1, 1), 4.0);
  std::filesystem::remove(path);
}

TEST(Split, RatioBoundaries) {
  const TimeSeriesFrame f = ramp_frame(100, 2);
  const Splits s = split(f, SplitSpec::ratios(0.7, 0.1, 0.2));
  EXPECT_EQ(s.bounds.train_end, 70);
  EXPECT_EQ(s.bounds.val_end, 80);
  EXPECT_EQ(s.bounds.test_end, 100);
  EXPECT_EQ(s.train.rows(), 70);
  EXPECT_EQ(s.val.values(0, 0), 70.0);
  EXPECT_EQ(s.test.values(0, 0), 80.0);
  EXPECT_EQ(s.train.columns, f.columns);
}

TEST(Split, MonthBoundaries) {
  const SplitSpec spec = SplitSpec::parse("months:12,4,4", "1h");
  EXPECT_EQ(spec.kind, SplitSpec::Kind::months);
  const SplitBounds b = split_bounds(20 * 30 * 24 + 50, spec);
  EXPECT_EQ(b.train_end, 12 * 30 * 24);
  EXPECT_EQ(b.val_end, 16 * 30 * 24);
  EXPECT_EQ(b.test_end, 20 * 30 * 24);
  EXPECT_EQ(split_bounds(18 * 30 * 24, spec).test_end, 18 * 30 * 24);
  EXPECT_EQ(rows_per_day("15min"), 96);
  EXPECT_EQ(rows_per_day("10min"), 144);
  EXPECT_EQ(rows_per_day("1d"), 1);
  EXPECT_EQ(split_bounds(30 * 96 * 20, SplitSpec::parse("months:12,4,4", "15min")).train_end, 12 * 30 * 96);
}

TEST(Split, ConcatenationIsBitwise) {
  const TimeSeriesFrame f = random_frame(57, 3, 4);
  const Splits s = split(f, SplitSpec::ratios(0.6, 0.2, 0.2));
  RowMatrix joined(s.train.rows() + s.val.rows() + s.test.rows(), 3);
  joined << s.train.values, s.val.values, s.test.values;
  EXPECT_EQ(joined, f.values);
}

TEST(Split, InvalidSpecs) {
  EXPECT_FDNET_ERROR(SplitSpec::ratios(0.7, 0.2, 0.2), Errc::invalid_split);
  EXPECT_FDNET_ERROR(SplitSpec::parse("ratio:0.7,0.3"), Errc::invalid_split);
  EXPECT_FDNET_ERROR(SplitSpec::parse("weeks:1,1,1"), Errc::invalid_split);
  EXPECT_FDNET_ERROR(SplitSpec::parse("months:12,4,4", "7q"), Errc::invalid_split);
  EXPECT_FDNET_ERROR(split(ramp_frame(3, 1), SplitSpec::ratios(0.7, 0.1, 0.2)), Errc::invalid_split);
  EXPECT_FDNET_ERROR(split(ramp_frame(100, 1), SplitSpec::parse("months:12,4,4")), Errc::invalid_split);
  const SplitSpec round = SplitSpec::parse(SplitSpec::ratios(0.7, 0.1, 0.2).to_string());
  EXPECT_EQ(split_bounds(1000, round).val_end, 800);
}

TEST(Standardizer, TrainingSplitIsStandardized) {
  const TimeSeriesFrame f = random_frame(500, 4, 7);
  const Splits s = split(f, SplitSpec::ratios(0.7, 0.1, 0.2));
  const Standardizer z = Standardizer::fit(s.train);
  const RowMatrix t = z.transform(s.train.values);
  for (Index v = 0; v < 4; ++v) {
    const Scalar mean = t.col(v).mean();
    const Scalar std = std::sqrt((t.col(v).array() - mean).square().mean());
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(std, 1.0, 1e-10);
  }
  const RowMatrix back = z.inverse_transform(z.transform(f.values));
  EXPECT_LT(((back - f.values).array().abs() / f.values.array().abs().max(1.0)).maxCoeff(), 1e-12);
  EXPECT_FDNET_ERROR(z.transform(RowMatrix::Zero(3, 2)), Errc::incompatible_data);
}

TEST(Standardizer, ConstantColumn) {
  TimeSeriesFrame f = random_frame(50, 2, 8);
  f.values.col(1).setConstant(3.25);
  const Standardizer z = Standardizer::fit(f);
  EXPECT_EQ(z.std[1], 1.0);
  EXPECT_EQ(z.degenerate_columns, (std::vector<std::string>{"c1"}));
  const TimeSeriesFrame t = z.transform(f);
  for (Index r = 0; r < 50; ++r) EXPECT_EQ(t.values(r, 1), 0.0);
  EXPECT_TRUE(t.values.allFinite());
}

TEST(Standardizer, NoLeakageFromHeldOutRows) {
  TimeSeriesFrame f = random_frame(200, 3, 9);
  const SplitSpec spec = SplitSpec::ratios(0.7, 0.1, 0.2);
  const Standardizer a = Standardizer::fit(split(f, spec).train);
  f.values.bottomRows(60).array() += 1e6;
  const Standardizer b = Standardizer::fit(split(f, spec).train);
  EXPECT_TRUE((a.mean == b.mean).all());
  EXPECT_TRUE((a.std == b.std).all());
}

TEST(Windows, CountsAndAlignment) {
  const TimeSeriesFrame f = ramp_frame(10, 2);
  const WindowSet w = make_windows(f, 4, 2);
  EXPECT_EQ(w.size(), 5);
  EXPECT_EQ(w.input(0), f.values.topRows(4));
  EXPECT_EQ(w.target(0), f.values.middleRows(4, 2));
  EXPECT_EQ(w.origin(4), 8);
  EXPECT_EQ(make_windows(ramp_frame(12, 1), 4, 2, 2).size(), 4);
  EXPECT_EQ(make_windows(ramp_frame(6, 1), 4, 2).size(), 1);
  EXPECT_FDNET_ERROR(make_windows(ramp_frame(5, 1), 4, 2), Errc::insufficient_data);
  EXPECT_FDNET_ERROR(make_windows(ramp_frame(5, 1), 0, 2), Errc::invalid_parameter);
  EXPECT_FDNET_ERROR(w.input(5), Errc::invalid_window);
  for (Index T = 6; T < 40; ++T)
    for (Index s = 1; s <= 3; ++s) EXPECT_EQ(make_windows(ramp_frame(T, 1), 4, 2, s).size(), (T - 6) / s + 1);
}

TEST(Windows, BatchTensorsMatchRows) {
  const TimeSeriesFrame f = random_frame(30, 3, 10);
  const WindowSet w = make_windows(f, 8, 4);
  const Index which[] = {7, 0, 18};
  const Tensor x = w.batch_inputs(which);
  const Tensor y = w.batch_targets(which);
  EXPECT_EQ(x.shape(), (Shape{3, 1, 8, 3}));
  EXPECT_EQ(y.shape(), (Shape{3, 4, 3}));
  for (Index b = 0; b < 3; ++b)
    for (Index v = 0; v < 3; ++v) {
      for (Index t = 0; t < 8; ++t) EXPECT_EQ(x.at({b, 0, t, v}), f.values(which[b] + t, v));
      for (Index t = 0; t < 4; ++t) EXPECT_EQ(y.at({b, t, v}), f.values(which[b] + 8 + t, v));
    }
}

TEST(Windows, RampTargetsContinueInputs) {
  const Splits s = split(ramp_frame(400, 3), SplitSpec::ratios(0.7, 0.1, 0.2));
  for (const TimeSeriesFrame* part : {&s.train, &s.val, &s.test}) {
    const WindowSet w = make_windows(*part, 16, 8);
    for (Index i = 0; i < w.size(); ++i) {
      const RowMatrix in = w.input(i), out = w.target(i);
      for (Index v = 0; v < 3; ++v) {
        EXPECT_EQ(out(0, v), in(15, v) + 1.0);
        for (Index t = 1; t < 8; ++t) EXPECT_EQ(out(t, v), out(t - 1, v) + 1.0);
      }
    }
  }
}

TEST(Windows, OutliveTheirFrame) {
  WindowSet w = [] {
    const TimeSeriesFrame f = ramp_frame(20, 1);
    return make_windows(f, 4, 2);
  }();
  EXPECT_EQ(w.target(3)(1, 0), 8.0);
}
