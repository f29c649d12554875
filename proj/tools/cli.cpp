#include "cli.hpp"

#include "fdnet/checkpoint.hpp"
#include "fdnet/error.hpp"
#include "fdnet/gradcheck.hpp"
#include "fdnet/ks.hpp"
#include "fdnet/metrics.hpp"
#include "fdnet/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

namespace fdnet::cli {

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string data;
  std::string target;
  bool univariate = false;
  std::string variant = "fdnet";
  std::string preset = "long";
  Index l_in = 672, l_out = 96, f = 5, n_layers = 5, embed_dim = 8, heads = 1;
  Scalar alpha = 0.5;
  std::string split = "ratio:0.7,0.1,0.2";
  std::string freq = "1h";
  Scalar lr = 1e-4, dropout = 0.1;
  Index epochs = 10, patience = 3, batch_size = 16, max_steps = 0;
  std::uint64_t seed = 4321;
  std::string out_dir = "run";
  std::string checkpoint;
  std::string part = "test";
  std::string output;
  Index m = 24;
  Index at = 0;
  std::string column;
  bool standardized = false;
  Scalar alpha_ks = 0.05;
  Index windows = 1000, window_len = 96;
  std::string corrupt_op;
  bool verbose = false;

  ModelConfig model_config() const {
    ModelConfig c;
    c.variant = parse_variant(variant);
    c.input_length = l_in;
    c.output_length = l_out;
    c.branches = f;
    c.alpha = alpha;
    c.layers = n_layers;
    c.embed_dim = embed_dim;
    c.heads = heads;
    c.dropout = dropout;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = lr;
    t.batch_size = batch_size;
    t.dropout = dropout;
    t.max_epochs = epochs;
    t.patience = patience;
    t.seed = seed;
    t.max_steps = max_steps;
    t.verbose = verbose;
    return t;
  }

  fs::path checkpoint_path() const {
    return checkpoint.empty() ? fs::path(out_dir) / "checkpoint.bin" : fs::path(checkpoint);
  }
};

std::string num(Scalar v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string quoted(const std::string& s) { return '"' + s + '"'; }

/// key=value lines that reproduce the run through --config.
std::string resolved_config(const RunOptions& o) {
  std::ostringstream os;
  os << "data=" << quoted(o.data) << '\n'
     << "target=" << quoted(o.target) << '\n'
     << "univariate=" << (o.univariate ? "true" : "false") << '\n'
     << "variant=" << quoted(o.variant) << '\n'
     << "l-in=" << o.l_in << '\n'
     << "l-out=" << o.l_out << '\n'
     << "f=" << o.f << '\n'
     << "alpha=" << num(o.alpha) << '\n'
     << "n-layers=" << o.n_layers << '\n'
     << "embed-dim=" << o.embed_dim << '\n'
     << "heads=" << o.heads << '\n'
     << "split=" << quoted(o.split) << '\n'
     << "freq=" << quoted(o.freq) << '\n'
     << "lr=" << num(o.lr) << '\n'
     << "dropout=" << num(o.dropout) << '\n'
     << "epochs=" << o.epochs << '\n'
     << "patience=" << o.patience << '\n'
     << "batch-size=" << o.batch_size << '\n'
     << "max-steps=" << o.max_steps << '\n'
     << "seed=" << o.seed << '\n'
     << "out-dir=" << quoted(o.out_dir) << '\n'
     << "m=" << o.m << '\n';
  return os.str();
}

void require_data(const RunOptions& o) {
  if (o.data.empty()) fail(Errc::invalid_argument, "--data is required");
  if (o.target.empty()) fail(Errc::invalid_argument, "--target is required");
}

TimeSeriesFrame load_frame(const RunOptions& o) {
  require_data(o);
  TimeSeriesFrame frame = load_csv(o.data, o.target);
  if (o.univariate) frame = frame.select({o.target});
  return frame;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) fail(Errc::io, "cannot write " + path.string());
  return os;
}

/// The dataset restricted to the checkpoint's variates, in its order.
TimeSeriesFrame frame_for_checkpoint(const RunOptions& o, const Checkpoint& ck) {
  if (o.data.empty()) fail(Errc::invalid_argument, "--data is required");
  TimeSeriesFrame frame = load_csv(o.data, ck.target);
  if (ck.columns.size() == 1) return frame.select(ck.columns);
  if (frame.columns != ck.columns)
    fail(Errc::incompatible_data, "dataset has " + std::to_string(frame.variates()) + " variates, checkpoint expects " +
                                      std::to_string(ck.columns.size()));
  return frame;
}

TimeSeriesFrame pick_part(const TimeSeriesFrame& frame, const RunOptions& o) {
  if (o.part == "all") return frame;
  Splits s = split(frame, SplitSpec::parse(o.split, o.freq));
  if (o.part == "train") return s.train;
  if (o.part == "val") return s.val;
  if (o.part == "test") return s.test;
  fail(Errc::invalid_argument, "--part must be train, val, test or all");
}

int cmd_train(const RunOptions& o, std::ostream& out, std::ostream& err) {
  const ModelConfig mc = o.model_config();
  const TrainConfig tc = o.train_config();
  tc.validate();
  // Build the model first so structural errors surface before data loading.
  ForecastModel model = ForecastModel::create(mc, o.seed);
  TimeSeriesFrame frame = load_frame(o);
  Splits s = split(frame, SplitSpec::parse(o.split, o.freq));
  Standardizer st = Standardizer::fit(s.train);
  const WindowSet train_w = make_windows(st.transform(s.train), mc.input_length, mc.output_length);
  const WindowSet val_w = make_windows(st.transform(s.val), mc.input_length, mc.output_length);
  if (o.verbose)
    err << "train windows " << train_w.size() << ", val windows " << val_w.size() << ", parameters "
        << model.param_count().total() << '\n';

  TrainHistory history = train(model, train_w, val_w, tc);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin",
                  Checkpoint{model, st, frame.columns, frame.target, {history.best_epoch, history.best_val_mse}});
  {
    auto os = open_output(dir / "history.csv");
    history.write_csv(os);
  }
  {
    auto os = open_output(dir / "config.cfg");
    os << resolved_config(o);
  }
  out << "best_epoch=" << history.best_epoch << '\n'
      << "best_val_mse=" << num(history.best_val_mse) << '\n'
      << "epochs_run=" << history.epochs.size() << '\n';
  return 0;
}

int cmd_evaluate(const RunOptions& o, std::ostream& out, std::ostream&) {
  const Checkpoint ck = load_checkpoint(o.checkpoint_path());
  const TimeSeriesFrame frame = frame_for_checkpoint(o, ck);
  const TimeSeriesFrame part = pick_part(frame, o);
  const ModelConfig& mc = ck.model.config();
  const WindowSet windows = make_windows(ck.standardizer.transform(part), mc.input_length, mc.output_length);
  const MetricsReport rep = evaluate_run(ck.model, windows, ck.standardizer, o.m);
  const fs::path dir(o.out_dir);
  {
    auto os = open_output(dir / "metrics.csv");
    rep.write_csv(os);
  }
  {
    auto os = open_output(dir / "metrics.json");
    os << rep.to_json() << '\n';
  }
  out << "windows=" << rep.windows << '\n'
      << "mse=" << num(rep.mse) << '\n'
      << "mae=" << num(rep.mae) << '\n'
      << "smape=" << num(rep.smape) << '\n'
      << "mase=" << num(rep.mase) << '\n'
      << "owa=" << num(rep.owa) << '\n';
  return 0;
}

/// Standardized [1,1,L_in,V] input for the window starting at row `at`.
Tensor window_input(const RowMatrix& standardized, Index at, Index l_in) {
  if (at < 0 || at + l_in > standardized.rows())
    fail(Errc::invalid_window, "window start " + std::to_string(at) + " needs rows [" + std::to_string(at) + ", " +
                                   std::to_string(at + l_in) + ") but the dataset has " +
                                   std::to_string(standardized.rows()));
  const Index V = standardized.cols();
  Tensor x({1, 1, l_in, V});
  ConstMatrixMap src(standardized.data() + at * V, l_in, V);
  MatrixMap(x.ptr(), l_in, V) = src;
  return x;
}

int cmd_predict(const RunOptions& o, std::ostream& out, std::ostream&) {
  const Checkpoint ck = load_checkpoint(o.checkpoint_path());
  const TimeSeriesFrame frame = frame_for_checkpoint(o, ck);
  const ModelConfig& mc = ck.model.config();
  const RowMatrix standardized = ck.standardizer.transform(frame.values);
  Graph graph;
  const Tensor& y = ck.model
                        .forward(graph, graph.constant(window_input(standardized, o.at, mc.input_length)),
                                 ForwardContext{Mode::eval})
                        .prediction.value();
  const Index V = frame.variates();
  const RowMatrix forecast = ck.standardizer.inverse_transform(RowMatrix(ConstMatrixMap(y.ptr(), mc.output_length, V)));
  const fs::path path = o.output.empty() ? fs::path(o.out_dir) / "forecast.csv" : fs::path(o.output);
  auto os = open_output(path);
  os << std::setprecision(17);
  for (Index v = 0; v < V; ++v) os << (v ? "," : "") << ck.columns[static_cast<std::size_t>(v)];
  os << '\n';
  for (Index t = 0; t < forecast.rows(); ++t) {
    for (Index v = 0; v < V; ++v) os << (v ? "," : "") << forecast(t, v);
    os << '\n';
  }
  out << "forecast=" << path.string() << '\n' << "rows=" << forecast.rows() << '\n' << "columns=" << V << '\n';
  return 0;
}

int cmd_kstest(const RunOptions& o, std::ostream& out, std::ostream&) {
  require_data(o);
  TimeSeriesFrame frame = load_csv(o.data, o.target);
  const std::string column = o.column.empty() ? o.target : o.column;
  const Index j = frame.column_index(column);
  if (o.standardized) {
    Splits s = split(frame, SplitSpec::parse(o.split, o.freq));
    frame = Standardizer::fit(s.train).transform(frame);
  }
  std::vector<Scalar> series(static_cast<std::size_t>(frame.rows()));
  for (Index t = 0; t < frame.rows(); ++t) series[static_cast<std::size_t>(t)] = frame.values(t, j);
  const ShiftReport rep = shift_report(series, o.windows, o.window_len, o.alpha_ks, o.seed);
  const std::string dataset = fs::path(o.data).stem().string();
  auto os = open_output(fs::path(o.out_dir) / "kstest.csv");
  write_shift_csv(os, rep, dataset, column);
  write_shift_csv(out, rep, dataset, column);
  return 0;
}

int cmd_gradcheck(const RunOptions& o, std::ostream& out, std::ostream& err) {
  std::optional<Op> corrupt;
  if (!o.corrupt_op.empty()) {
    for (Op op : differentiable_ops())
      if (op_name(op) == o.corrupt_op) corrupt = op;
    if (!corrupt) fail(Errc::invalid_argument, "unknown op '" + o.corrupt_op + "'");
  }
  set_corrupted_backward(corrupt);
  GradCheckReport rep;
  try {
    rep = run_gradcheck_suite(1e-3, 1e-5, o.seed);
  } catch (...) {
    set_corrupted_backward(std::nullopt);
    throw;
  }
  set_corrupted_backward(std::nullopt);

  out << "case,max_rel_error,status\n" << std::setprecision(6);
  for (const auto& c : rep.cases) out << c.name << ',' << c.max_rel_error << ',' << (c.passed ? "ok" : "FAIL") << '\n';
  out << "covered_ops";
  for (Op op : rep.covered_ops) out << ' ' << op_name(op);
  out << '\n';
  bool ok = true;
  for (const auto& c : rep.cases) {
    if (!c.passed) {
      err << "gradient check failed: " << c.name << " (max relative error " << c.max_rel_error << ")\n";
      ok = false;
    }
  }
  for (Op op : differentiable_ops()) {
    if (std::find(rep.covered_ops.begin(), rep.covered_ops.end(), op) == rep.covered_ops.end()) {
      err << "op not covered by the suite: " << op_name(op) << '\n';
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

int cmd_params(const RunOptions& o, std::ostream& out, std::ostream&) {
  ModelConfig base = o.model_config();
  ModelConfig wide = base;
  wide.output_length = 720;
  const ParamCounts a = ForecastModel::create(base, o.seed).param_count();
  const ParamCounts b = ForecastModel::create(wide, o.seed).param_count();
  out << "group,l_out_" << base.output_length << ",l_out_720,delta\n";
  auto row = [&](const std::string& name, Index x, Index y) { out << name << ',' << x << ',' << y << ',' << y - x << '\n'; };
  for (std::size_t i = 0; i < a.embedding.size(); ++i) {
    const std::string p = "branch" + std::to_string(i);
    row(p + ".embedding", a.embedding[i], b.embedding[i]);
    row(p + ".stack", a.stack[i], b.stack[i]);
    row(p + ".head", a.head[i], b.head[i]);
  }
  row("embedding", a.embedding_total(), b.embedding_total());
  row("stack", a.stack_total(), b.stack_total());
  row("head", a.head_total(), b.head_total());
  row("total", a.total(), b.total());
  return 0;
}

int cmd_export_repr(const RunOptions& o, std::ostream& out, std::ostream&) {
  const Checkpoint ck = load_checkpoint(o.checkpoint_path());
  const TimeSeriesFrame frame = frame_for_checkpoint(o, ck);
  const ModelConfig& mc = ck.model.config();
  const RowMatrix standardized = ck.standardizer.transform(frame.values);
  Graph graph;
  const ForecastOutput fo = ck.model.forward(
      graph, graph.constant(window_input(standardized, o.at, mc.input_length)), ForwardContext{Mode::eval});
  const Index target = frame.column_index(ck.target);
  const fs::path path = o.output.empty() ? fs::path(o.out_dir) / "representations.csv" : fs::path(o.output);
  auto os = open_output(path);
  os << std::setprecision(17) << "branch,time";
  for (Index d = 0; d < mc.embed_dim; ++d) os << ",f" << d;
  os << '\n';
  Index rows = 0;
  for (std::size_t i = 0; i < fo.representations.size(); ++i) {
    const Tensor& r = fo.representations[i].value();  // [1, D, L', V]
    const Index D = r.dim(1), L = r.dim(2), V = r.dim(3);
    for (Index t = 0; t < L; ++t, ++rows) {
      os << i << ',' << t;
      for (Index d = 0; d < D; ++d) os << ',' << r[(d * L + t) * V + target];
      os << '\n';
    }
  }
  out << "representations=" << path.string() << '\n' << "rows=" << rows << '\n';
  return 0;
}

void apply_defaults(RunOptions& o, const CLI::App& app) {
  if (app.count("--patience") == 0) o.patience = std::min(o.patience, o.epochs);
  if (o.preset == "long") return;
  if (o.preset != "exchange") fail(Errc::invalid_argument, "--preset must be long or exchange");
  if (app.count("--l-in") == 0) o.l_in = 96;
  if (app.count("--f") == 0) o.f = 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunOptions o;
  CLI::App app{"Decomposed long-input time-series forecasting"};
  app.name(args.empty() ? "fdnet" : fs::path(args.front()).filename().string());
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "key=value file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--data", o.data, "CSV dataset");
  app.add_option("--target", o.target, "target column");
  app.add_flag("--univariate", o.univariate, "use only the target column");
  app.add_option("--variant", o.variant, "fdnet or funet")->capture_default_str();
  app.add_option("--preset", o.preset, "long (default) or exchange: L_in=96, f=1 unless given")->capture_default_str();
  app.add_option("--l-in", o.l_in, "input length")->capture_default_str();
  app.add_option("--l-out", o.l_out, "forecast horizon")->capture_default_str();
  app.add_option("--f", o.f, "number of focal branches")->capture_default_str();
  app.add_option("--alpha", o.alpha, "focal proportion ratio")->capture_default_str();
  app.add_option("--n-layers", o.n_layers, "maximum stack depth")->capture_default_str();
  app.add_option("--embed-dim", o.embed_dim, "feature dimension D")->capture_default_str();
  app.add_option("--heads", o.heads, "attention heads (funet)")->capture_default_str();
  app.add_option("--split", o.split, "ratio:a,b,c or months:a,b,c")->capture_default_str();
  app.add_option("--freq", o.freq, "sampling frequency for month splits")->capture_default_str();
  app.add_option("--lr", o.lr, "base learning rate")->capture_default_str();
  app.add_option("--dropout", o.dropout, "dropout probability")->capture_default_str();
  app.add_option("--epochs", o.epochs, "maximum epochs")->capture_default_str();
  app.add_option("--patience", o.patience, "early-stopping patience")->capture_default_str();
  app.add_option("--batch-size", o.batch_size, "batch size")->capture_default_str();
  app.add_option("--max-steps", o.max_steps, "cap on optimizer steps, 0 for none")->capture_default_str();
  app.add_option("--seed", o.seed, "random seed")->capture_default_str();
  app.add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
  app.add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out-dir>/checkpoint.bin)");
  app.add_option("--part", o.part, "split to score: train, val, test or all")->capture_default_str();
  app.add_option("--output", o.output, "output file for predict/export-repr");
  app.add_option("--m", o.m, "seasonal periodicity for MASE and the reference")->capture_default_str();
  app.add_option("--at", o.at, "window start row")->capture_default_str();
  app.add_option("--column", o.column, "column for kstest (default: target)");
  app.add_flag("--standardized", o.standardized, "kstest on standardized values");
  app.add_option("--alpha-ks", o.alpha_ks, "KS significance level")->capture_default_str();
  app.add_option("--windows", o.windows, "KS sub-sequences")->capture_default_str();
  app.add_option("--window-len", o.window_len, "KS sub-sequence length")->capture_default_str();
  app.add_option("--corrupt-op", o.corrupt_op)->group("");
  app.add_flag("-v,--verbose", o.verbose, "progress on stderr");

  using Command = int (*)(const RunOptions&, std::ostream&, std::ostream&);
  const std::map<std::string, std::pair<Command, std::string>> commands{
      {"train", {cmd_train, "train a model; writes checkpoint, history and resolved config"}},
      {"evaluate", {cmd_evaluate, "score a checkpoint on a split"}},
      {"predict", {cmd_predict, "forecast one window in original units"}},
      {"kstest", {cmd_kstest, "distribution-shift audit with two-sample KS tests"}},
      {"gradcheck", {cmd_gradcheck, "finite-difference check of every differentiable op"}},
      {"params", {cmd_params, "parameter counts at the configured horizon and at 720"}},
      {"export-repr", {cmd_export_repr, "per-branch representations of one window"}},
  };
  for (const auto& [name, cmd] : commands) app.add_subcommand(name, cmd.second)->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    apply_defaults(o, app);
    for (const auto& [name, cmd] : commands)
      if (app.got_subcommand(name)) return cmd.first(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace fdnet::cli
