#include "fdnet/gradcheck.hpp"

#include "fdnet/error.hpp"
#include "fdnet/fdnet_model.hpp"
#include "fdnet/funet_model.hpp"
#include "fdnet/layers.hpp"
#include "fdnet/model.hpp"
#include "fdnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fdnet {

namespace {

constexpr Scalar rel_floor = 1e-8;

Scalar rel_error(Scalar analytic, Scalar numeric) {
  return std::abs(analytic - numeric) / std::max(rel_floor, std::abs(analytic) + std::abs(numeric));
}

Scalar finite_value(Var loss) {
  if (loss.value().size() != 1) fail(Errc::invalid_argument, "gradient check needs a scalar function");
  const Scalar v = loss.value().item();
  if (!std::isfinite(v)) fail(Errc::numeric_failure, "function value is not finite");
  return v;
}

}  // namespace

Scalar grad_check(const ScalarFn& f, std::span<const Tensor> points, Scalar h) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : points) leaves.push_back(g.variable(p));
    Var loss = f(g, leaves);
    finite_value(loss);
    g.backward(loss);
    for (const Var& l : leaves) analytic.push_back(g.grad(l));
  }
  auto eval = [&](const std::vector<Tensor>& at) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& p : at) leaves.push_back(g.variable(p));
    return finite_value(f(g, leaves));
  };
  std::vector<Tensor> work(points.begin(), points.end());
  Scalar worst = 0.0;
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (Index j = 0; j < work[k].size(); ++j) {
      const Scalar x = work[k][j];
      work[k][j] = x + h;
      const Scalar up = eval(work);
      work[k][j] = x - h;
      const Scalar down = eval(work);
      work[k][j] = x;
      worst = std::max(worst, rel_error(analytic[k][j], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

Scalar grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& point, Scalar h) {
  const Tensor pts[] = {point};
  return grad_check([&](Graph& g, std::span<const Var> in) { return f(g, in[0]); }, pts, h);
}

Scalar grad_check_bound(const std::function<Var(Graph&)>& f, std::span<Tensor* const> targets, Scalar h) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    Var loss = f(g);
    finite_value(loss);
    g.backward(loss);
    for (Tensor* t : targets) analytic.push_back(g.grad(*t));
  }
  auto eval = [&] {
    Graph g;
    return finite_value(f(g));
  };
  Scalar worst = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor& t = *targets[k];
    for (Index j = 0; j < t.size(); ++j) {
      const Scalar x = t[j];
      t[j] = x + h;
      const Scalar up = eval();
      t[j] = x - h;
      const Scalar down = eval();
      t[j] = x;
      worst = std::max(worst, rel_error(analytic[k][j], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

bool GradCheckReport::passed() const {
  for (const auto& c : cases)
    if (!c.passed) return false;
  for (Op op : differentiable_ops())
    if (std::find(covered_ops.begin(), covered_ops.end(), op) == covered_ops.end()) return false;
  return !cases.empty();
}

namespace {

class Suite {
 public:
  Suite(Scalar tol, Scalar h, std::uint64_t seed) : h_(h), seed_(seed) { report_.tolerance = tol; }

  Tensor random(const std::string& name, Shape shape, Scalar spread = 1.0) {
    Engine rng = named_stream(seed_, name);
    std::normal_distribution<Scalar> dist(0.0, spread);
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
  }

  /// Contracts `out` with a fixed random tensor so every output element
  /// carries a distinct weight.
  Var project(const std::string& name, Var out) {
    return sum(mul(out, out.graph().constant(random(name + "/proj", out.shape()))));
  }

  void points(const std::string& name, std::vector<Tensor> pts, const std::function<Var(std::span<const Var>)>& f) {
    auto fn = [&](Graph& g, std::span<const Var> in) {
      Var out = project(name, f(in));
      note(g);
      return out;
    };
    add(name, grad_check(fn, pts, h_));
  }

  void bound(const std::string& name, std::vector<Tensor*> targets, const std::function<Var(Graph&)>& f) {
    auto fn = [&](Graph& g) {
      Var out = project(name, f(g));
      note(g);
      return out;
    };
    add(name, grad_check_bound(fn, targets, h_));
  }

  /// Moves freshly initialized parameters off their structured starting
  /// values (zero biases, g = ||v||) so every path carries gradient.
  void jitter(const std::string& name, const std::vector<Tensor*>& targets) {
    Engine rng = named_stream(seed_, name + "/jitter");
    std::normal_distribution<Scalar> dist(0.0, 0.1);
    for (Tensor* t : targets)
      for (Index i = 0; i < t->size(); ++i) (*t)[i] += dist(rng);
  }

  GradCheckReport finish() { return std::move(report_); }

 private:
  void note(const Graph& g) {
    for (Op op : g.recorded_ops())
      if (op != Op::leaf && std::find(report_.covered_ops.begin(), report_.covered_ops.end(), op) ==
                                report_.covered_ops.end())
        report_.covered_ops.push_back(op);
  }
  void add(const std::string& name, Scalar err) {
    report_.cases.push_back({name, err, err < report_.tolerance});
  }

  Scalar h_;
  std::uint64_t seed_;
  GradCheckReport report_;
};

ModelConfig tiny_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.input_length = 16;
  c.output_length = 4;
  c.branches = 2;
  c.alpha = 0.5;
  c.layers = 2;
  c.embed_dim = 4;
  c.heads = 1;
  c.dropout = 0.1;
  return c;
}

void model_case(Suite& s, const std::string& name, Variant variant, std::uint64_t seed) {
  ForecastModel model = ForecastModel::create(tiny_config(variant), seed);
  Tensor x = s.random(name + "/x", {1, 1, 16, 2});
  Tensor y = s.random(name + "/y", {1, 4, 2});
  std::vector<Tensor*> targets{&x};
  for (auto& p : model.parameters()) targets.push_back(p.tensor);
  s.jitter(name, targets);
  const ForwardContext ctx{Mode::train, seed, 7, 0.1};
  s.bound(name, targets, [&](Graph& g) {
    Var diff = sub(model.forward(g, g.param(x), ctx).prediction, g.constant(y));
    return mean(mul(diff, diff));
  });
}

}  // namespace

GradCheckReport run_gradcheck_suite(Scalar tolerance, Scalar h, std::uint64_t seed) {
  Suite s(tolerance, h, seed);
  auto r = [&](const std::string& n, Shape shape) { return s.random(n, std::move(shape)); };

  s.points("add", {r("add/a", {3, 4}), r("add/b", {3, 4})}, [](auto in) { return add(in[0], in[1]); });
  s.points("add_broadcast", {r("addb/a", {2, 3, 4}), r("addb/b", {3, 1})}, [](auto in) { return add(in[0], in[1]); });
  s.points("sub", {r("sub/a", {3, 4}), r("sub/b", {4})}, [](auto in) { return sub(in[0], in[1]); });
  s.points("mul", {r("mul/a", {3, 4}), r("mul/b", {3, 4})}, [](auto in) { return mul(in[0], in[1]); });
  s.points("mul_broadcast", {r("mulb/a", {2, 3, 4}), r("mulb/b", {2, 1, 4})},
           [](auto in) { return mul(in[0], in[1]); });
  s.points("scale", {r("scale/a", {5})}, [](auto in) { return scale(in[0], -1.7); });
  s.points("matmul", {r("mm/a", {3, 4}), r("mm/b", {4, 5})}, [](auto in) { return matmul(in[0], in[1]); });
  s.points("matmul_batched", {r("mmb/a", {2, 3, 4}), r("mmb/b", {2, 4, 5})},
           [](auto in) { return matmul(in[0], in[1]); });
  s.points("matmul_shared", {r("mms/a", {3, 4}), r("mms/b", {2, 4, 5})},
           [](auto in) { return matmul(in[0], in[1]); });
  s.points("conv2d_time", {r("conv/x", {2, 3, 7, 2}), r("conv/w", {4, 3, 3, 1}), r("conv/b", {4})},
           [](auto in) { return conv2d_time(in[0], in[1], in[2], 1, 1); });
  s.points("conv2d_time_stride2", {r("conv2/x", {1, 2, 8, 3}), r("conv2/w", {3, 2, 3, 1})},
           [](auto in) { return conv2d_time(in[0], in[1], Var{}, 2, 1); });
  s.points("maxpool_time", {r("pool/x", {2, 2, 9, 2})}, [](auto in) { return maxpool_time(in[0]); });
  s.points("gelu", {r("gelu/x", {3, 5})}, [](auto in) { return gelu(in[0]); });
  s.points("dropout", {r("drop/x", {4, 6})}, [seed](auto in) {
    Engine rng = named_stream(seed, "dropout-case");
    return dropout(in[0], 0.3, Mode::train, rng);
  });
  s.points("softmax_lastdim", {r("soft/x", {3, 5})}, [](auto in) { return softmax_lastdim(in[0]); });
  s.points("reshape", {r("reshape/x", {2, 6})}, [](auto in) { return gelu(reshape(in[0], {3, 4})); });
  s.points("permute", {r("perm/x", {2, 3, 4})}, [](auto in) { return gelu(permute(in[0], {2, 0, 1})); });
  s.points("slice", {r("slice/x", {2, 7, 3})}, [](auto in) { return gelu(slice(in[0], 1, 2, 4)); });
  s.points("concat", {r("cat/a", {2, 3, 2}), r("cat/b", {2, 3, 4})}, [](auto in) {
    const Var parts[] = {in[0], in[1]};
    return gelu(concat(parts, 2));
  });
  s.points("sum", {r("sum/x", {3, 4})}, [](auto in) { return mul(sum(gelu(in[0])), sum(in[0])); });
  s.points("mean", {r("mean/x", {3, 4})}, [](auto in) { return mul(mean(gelu(in[0])), mean(in[0])); });
  s.points("weight_norm", {r("wn/v", {4, 3, 3, 1}), r("wn/g", {4})},
           [](auto in) { return weight_norm(in[0], in[1]); });

  {
    WeightNormConv conv = make_wn_conv(3, 4, 3, 2, 1, seed, "gc.wnconv");
    Tensor x = r("wnconv/x", {2, 3, 8, 2});
    std::vector<Tensor*> t{&x, &conv.direction, &conv.magnitude, &conv.bias};
    s.jitter("wn_conv", t);
    s.bound("wn_conv", t, [&](Graph& g) { return wn_conv_forward(g, conv, g.param(x)); });
  }
  {
    ValueEmbedding emb = make_value_embedding(4, seed, "gc.embed");
    Tensor x = r("embed/x", {2, 1, 6, 3});
    std::vector<Tensor*> t{&x, &emb.weight, &emb.bias};
    s.jitter("value_embedding", t);
    s.bound("value_embedding", t, [&](Graph& g) { return value_embedding(g, emb, g.param(x)); });
  }
  {
    LinearHead head = make_linear_head(12, 5, seed, "gc.head");
    Tensor x = r("head/x", {2, 12, 3});
    std::vector<Tensor*> t{&x, &head.weight, &head.bias};
    s.jitter("linear_head", t);
    s.bound("linear_head", t, [&](Graph& g) { return linear_head_forward(g, head, g.param(x)); });
  }
  for (Index heads : {1, 2}) {
    const std::string name = "temporal_attention_h" + std::to_string(heads);
    AttentionParams att = make_attention(4, heads, seed, "gc.attn" + std::to_string(heads));
    Tensor x = r(name + "/x", {2, 4, 5, 2});
    std::vector<Tensor*> t{&x, &att.query, &att.key, &att.value, &att.output};
    s.jitter(name, t);
    s.bound(name, t, [&](Graph& g) { return temporal_attention(g, att, g.param(x)); });
  }
  {
    DFEInitialBlock block = make_dfe_initial(4, seed, "gc.dfe");
    Tensor x = r("dfe/x", {1, 4, 6, 2});
    std::vector<Tensor*> t{&x};
    visit_params(block, "dfe", [&](const std::string&, Tensor& p) { t.push_back(&p); });
    s.jitter("dfe_block", t);
    const ForwardContext ctx{Mode::train, seed, 3, 0.1};
    s.bound("dfe_block", t, [&](Graph& g) { return dfe_initial_forward(g, block, g.param(x), ctx, "gc.dfe"); });
  }
  {
    DFEICOMBlock block = make_dfe_icom(4, 1, seed, "gc.icom");
    Tensor x = r("icom/x", {1, 4, 7, 2});
    std::vector<Tensor*> t{&x};
    visit_params(block, "icom", [&](const std::string&, Tensor& p) { t.push_back(&p); });
    s.jitter("dfe_icom_block", t);
    const ForwardContext ctx{Mode::train, seed, 3, 0.1};
    s.bound("dfe_icom_block", t, [&](Graph& g) { return dfe_icom_forward(g, block, g.param(x), ctx, "gc.icom"); });
  }
  model_case(s, "tiny_fdnet", Variant::fdnet, seed);
  model_case(s, "tiny_funet", Variant::funet, seed);
  return s.finish();
}

}  // namespace fdnet
