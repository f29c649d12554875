#include "fdnet/autodiff.hpp"

#include "fdnet/error.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

namespace fdnet {

namespace {

std::atomic<int> g_corrupted{-1};

constexpr std::array kDifferentiable = {
    Op::add,     Op::sub,         Op::mul,     Op::scale,   Op::matmul, Op::conv2d_time,
    Op::maxpool_time, Op::gelu,   Op::dropout, Op::softmax_lastdim, Op::reshape, Op::permute,
    Op::slice,   Op::concat,      Op::sum,     Op::mean,    Op::weight_norm,
};

void require(bool ok, Errc code, const std::string& message) {
  if (!ok) fail(code, message);
}

Graph& same_graph(Var a, Var b) {
  require(a.valid() && b.valid(), Errc::invalid_argument, "operation on an unbound variable");
  require(&a.graph() == &b.graph(), Errc::invalid_argument, "operands live on different graphs");
  return a.graph();
}

/// For each flat index of `a`, the flat index of `b` under the documented
/// singleton-expansion rule. Empty when the shapes are identical.
std::vector<Index> broadcast_map(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return {};
  if (b.size() > a.size())
    fail(Errc::invalid_shape, std::string(op) + ": cannot broadcast " + to_string(b) + " into " + to_string(a));
  Shape padded(a.size() - b.size(), 1);
  padded.insert(padded.end(), b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (padded[i] != a[i] && padded[i] != 1)
      fail(Errc::invalid_shape, std::string(op) + ": cannot broadcast " + to_string(b) + " into " + to_string(a));

  auto b_strides = strides(padded);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (padded[i] == 1) b_strides[i] = 0;

  const Index n = numel(a);
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> counter(a.size(), 0);
  Index b_off = 0;
  for (Index i = 0; i < n; ++i) {
    map[static_cast<std::size_t>(i)] = b_off;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++counter[ax];
      b_off += b_strides[ax];
      if (counter[ax] < a[ax]) break;
      b_off -= b_strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return map;
}

struct MatmulGeometry {
  Index batch = 1;
  Index m = 0, k = 0, n = 0;
  bool a_batched = false, b_batched = false;
};

MatmulGeometry matmul_geometry(const Shape& a, const Shape& b) {
  auto bad = [&] { fail(Errc::invalid_shape, "matmul: incompatible shapes " + to_string(a) + " x " + to_string(b)); };
  if (a.size() < 2 || a.size() > 3 || b.size() < 2 || b.size() > 3) bad();
  MatmulGeometry g;
  g.a_batched = a.size() == 3;
  g.b_batched = b.size() == 3;
  g.m = a[a.size() - 2];
  g.k = a[a.size() - 1];
  g.n = b[b.size() - 1];
  if (b[b.size() - 2] != g.k) bad();
  if (g.a_batched && g.b_batched && a[0] != b[0]) bad();
  g.batch = g.a_batched ? a[0] : (g.b_batched ? b[0] : 1);
  return g;
}

}  // namespace

std::string_view op_name(Op op) noexcept {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::conv2d_time: return "conv2d_time";
    case Op::maxpool_time: return "maxpool_time";
    case Op::gelu: return "gelu";
    case Op::dropout: return "dropout";
    case Op::softmax_lastdim: return "softmax_lastdim";
    case Op::reshape: return "reshape";
    case Op::permute: return "permute";
    case Op::slice: return "slice";
    case Op::concat: return "concat";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::weight_norm: return "weight_norm";
  }
  return "unknown";
}

std::span<const Op> differentiable_ops() noexcept { return kDifferentiable; }

void set_corrupted_backward(std::optional<Op> op) noexcept {
  g_corrupted.store(op ? static_cast<int>(*op) : -1);
}

std::optional<Op> corrupted_backward() noexcept {
  int v = g_corrupted.load();
  if (v < 0) return std::nullopt;
  return static_cast<Op>(v);
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const {
  require(graph_ != nullptr, Errc::invalid_argument, "value() on an unbound variable");
  return graph_->nodes_[id_].value;
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{Op::leaf, std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  nodes_.push_back(Node{Op::leaf, std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Tensor& parameter) {
  if (auto it = params_.find(&parameter); it != params_.end()) return Var(this, it->second);
  Var v = variable(parameter);
  params_.emplace(&parameter, v.id());
  return v;
}

std::vector<Op> Graph::recorded_ops() const {
  std::vector<Op> out;
  for (const Node& n : nodes_)
    if (std::find(out.begin(), out.end(), n.op) == out.end()) out.push_back(n.op);
  return out;
}

Var Graph::record(Op op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node{op, std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    require(in.valid() && &in.graph() == this, Errc::invalid_argument, "input recorded on a different graph");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  require(loss.valid() && &loss.graph() == this, Errc::invalid_argument, "loss is not on this graph");
  const Tensor& lv = nodes_[loss.id()].value;
  require(lv.size() == 1, Errc::invalid_argument, "backward requires a scalar loss, got " + to_string(lv.shape()));

  grads_.assign(nodes_.size(), Tensor());
  std::vector<bool> allocated(nodes_.size(), false);
  grads_[loss.id()] = Tensor(lv.shape(), 1.0);
  allocated[loss.id()] = true;

  const auto corrupted = corrupted_backward();
  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!allocated[i] || !node.requires_grad || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (!allocated[in]) {
        grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
        allocated[in] = true;
      }
      slots[j] = &grads_[in];
    }
    if (corrupted && *corrupted == node.op) {
      Tensor scaled = grads_[i];
      scaled.data() *= 1.5;
      node.backward(scaled, slots);
    } else {
      node.backward(grads_[i], slots);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!allocated[i]) grads_[i] = Tensor(nodes_[i].value.shape(), 0.0);
}

Tensor Graph::grad(Var v) const {
  require(v.valid() && &v.graph() == this, Errc::invalid_argument, "grad() of a foreign variable");
  if (v.id() < grads_.size()) return grads_[v.id()];
  return Tensor(nodes_[v.id()].value.shape(), 0.0);
}

Tensor Graph::grad(const Tensor& parameter) const {
  auto it = params_.find(&parameter);
  if (it == params_.end() || it->second >= grads_.size()) return Tensor(parameter.shape(), 0.0);
  return grads_[it->second];
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  auto map = broadcast_map(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  const auto& bd = b.value().data();
  if (map.empty()) {
    out.data() += bd;
  } else {
    for (Index i = 0; i < out.size(); ++i) out[i] += bd[map[static_cast<std::size_t>(i)]];
  }
  return g.record(Op::add, std::move(out), {a, b}, [map = std::move(map)](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go.data();
    if (grads[1]) {
      if (map.empty()) {
        grads[1]->data() += go.data();
      } else {
        for (Index i = 0; i < go.size(); ++i) (*grads[1])[map[static_cast<std::size_t>(i)]] += go[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  auto map = broadcast_map(a.shape(), b.shape(), "sub");
  Tensor out = a.value();
  const auto& bd = b.value().data();
  if (map.empty()) {
    out.data() -= bd;
  } else {
    for (Index i = 0; i < out.size(); ++i) out[i] -= bd[map[static_cast<std::size_t>(i)]];
  }
  return g.record(Op::sub, std::move(out), {a, b}, [map = std::move(map)](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go.data();
    if (grads[1]) {
      if (map.empty()) {
        grads[1]->data() -= go.data();
      } else {
        for (Index i = 0; i < go.size(); ++i) (*grads[1])[map[static_cast<std::size_t>(i)]] -= go[i];
      }
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  auto map = broadcast_map(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (map.empty()) {
    out.data() *= bv.data();
  } else {
    for (Index i = 0; i < out.size(); ++i) out[i] *= bv[map[static_cast<std::size_t>(i)]];
  }
  return g.record(Op::mul, std::move(out), {a, b},
                  [map = std::move(map), av, bv](const Tensor& go, auto grads) {
                    if (map.empty()) {
                      if (grads[0]) grads[0]->data() += go.data() * bv.data();
                      if (grads[1]) grads[1]->data() += go.data() * av.data();
                      return;
                    }
                    for (Index i = 0; i < go.size(); ++i) {
                      Index j = map[static_cast<std::size_t>(i)];
                      if (grads[0]) (*grads[0])[i] += go[i] * bv[j];
                      if (grads[1]) (*grads[1])[j] += go[i] * av[i];
                    }
                  });
}

Var scale(Var x, Scalar factor) {
  Tensor out = x.value();
  out.data() *= factor;
  return x.graph().record(Op::scale, std::move(out), {x}, [factor](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += factor * go.data();
  });
}

// ---------------------------------------------------------------------------
// Matrix product

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const MatmulGeometry geo = matmul_geometry(a.shape(), b.shape());
  Shape out_shape = geo.a_batched || geo.b_batched ? Shape{geo.batch, geo.m, geo.n} : Shape{geo.m, geo.n};
  Tensor out(out_shape, 0.0);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Index a_step = geo.a_batched ? geo.m * geo.k : 0;
  const Index b_step = geo.b_batched ? geo.k * geo.n : 0;
  for (Index s = 0; s < geo.batch; ++s) {
    ConstMatrixMap A(av.ptr() + s * a_step, geo.m, geo.k);
    ConstMatrixMap B(bv.ptr() + s * b_step, geo.k, geo.n);
    MatrixMap C(out.ptr() + s * geo.m * geo.n, geo.m, geo.n);
    C.noalias() = A * B;
  }
  return g.record(Op::matmul, std::move(out), {a, b}, [geo, av, bv, a_step, b_step](const Tensor& go, auto grads) {
    for (Index s = 0; s < geo.batch; ++s) {
      ConstMatrixMap dC(go.ptr() + s * geo.m * geo.n, geo.m, geo.n);
      if (grads[0]) {
        ConstMatrixMap B(bv.ptr() + s * b_step, geo.k, geo.n);
        MatrixMap dA(grads[0]->ptr() + s * a_step, geo.m, geo.k);
        dA.noalias() += dC * B.transpose();
      }
      if (grads[1]) {
        ConstMatrixMap A(av.ptr() + s * a_step, geo.m, geo.k);
        MatrixMap dB(grads[1]->ptr() + s * b_step, geo.k, geo.n);
        dB.noalias() += A.transpose() * dC;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Time-axis convolution and pooling

Index windowed_length(Index length, Index kernel, Index stride, Index pad) {
  require(kernel >= 1 && stride >= 1 && pad >= 0, Errc::invalid_parameter, "invalid window geometry");
  Index span = length + 2 * pad - kernel;
  if (span < 0)
    fail(Errc::sequence_too_short, "length " + std::to_string(length) + " too short for kernel " +
                                       std::to_string(kernel) + " with padding " + std::to_string(pad));
  return span / stride + 1;
}

Var conv2d_time(Var input, Var weight, Var bias, Index stride_t, Index pad_t) {
  Graph& g = same_graph(input, weight);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require(xs.size() == 4, Errc::invalid_shape, "conv2d_time: input must be [B,Cin,L,V], got " + to_string(xs));
  require(ws.size() == 4 && ws[3] == 1, Errc::invalid_shape,
          "conv2d_time: weight must be [Cout,Cin,k,1], got " + to_string(ws));
  require(ws[1] == xs[1], Errc::invalid_shape,
          "conv2d_time: channel mismatch " + to_string(xs) + " vs weight " + to_string(ws));
  const Index B = xs[0], Cin = xs[1], L = xs[2], V = xs[3];
  const Index Cout = ws[0], K = ws[2];
  if (bias.valid()) {
    same_graph(input, bias);
    require(bias.shape() == Shape{Cout}, Errc::invalid_shape, "conv2d_time: bias must be [Cout]");
  }
  const Index Lout = windowed_length(L, K, stride_t, pad_t);

  Tensor out({B, Cout, Lout, V}, 0.0);
  const Scalar* x = input.value().ptr();
  const Scalar* w = weight.value().ptr();
  Scalar* y = out.ptr();
  for (Index b = 0; b < B; ++b) {
    for (Index co = 0; co < Cout; ++co) {
      Scalar* yp = y + ((b * Cout + co) * Lout) * V;
      if (bias.valid()) {
        const Scalar bc = bias.value()[co];
        for (Index i = 0; i < Lout * V; ++i) yp[i] = bc;
      }
      for (Index ci = 0; ci < Cin; ++ci) {
        const Scalar* xp = x + ((b * Cin + ci) * L) * V;
        for (Index j = 0; j < K; ++j) {
          const Scalar wv = w[(co * Cin + ci) * K + j];
          for (Index to = 0; to < Lout; ++to) {
            const Index ti = to * stride_t - pad_t + j;
            if (ti < 0 || ti >= L) continue;
            for (Index v = 0; v < V; ++v) yp[to * V + v] += wv * xp[ti * V + v];
          }
        }
      }
    }
  }

  std::vector<Var> inputs{input, weight};
  if (bias.valid()) inputs.push_back(bias);
  const Tensor xv = input.value();
  const Tensor wt = weight.value();
  return g.record(Op::conv2d_time, std::move(out), std::move(inputs),
                  [xv, wt, B, Cin, L, V, Cout, K, Lout, stride_t, pad_t](const Tensor& go, auto grads) {
                    const Scalar* dy = go.ptr();
                    const Scalar* x = xv.ptr();
                    const Scalar* w = wt.ptr();
                    Scalar* dx = grads[0] ? grads[0]->ptr() : nullptr;
                    Scalar* dw = grads[1] ? grads[1]->ptr() : nullptr;
                    Scalar* db = grads.size() > 2 && grads[2] ? grads[2]->ptr() : nullptr;
                    for (Index b = 0; b < B; ++b) {
                      for (Index co = 0; co < Cout; ++co) {
                        const Scalar* gp = dy + ((b * Cout + co) * Lout) * V;
                        if (db)
                          for (Index i = 0; i < Lout * V; ++i) db[co] += gp[i];
                        for (Index ci = 0; ci < Cin; ++ci) {
                          const Scalar* xp = x + ((b * Cin + ci) * L) * V;
                          Scalar* dxp = dx ? dx + ((b * Cin + ci) * L) * V : nullptr;
                          for (Index j = 0; j < K; ++j) {
                            const Index widx = (co * Cin + ci) * K + j;
                            const Scalar wv = w[widx];
                            Scalar acc = 0.0;
                            for (Index to = 0; to < Lout; ++to) {
                              const Index ti = to * stride_t - pad_t + j;
                              if (ti < 0 || ti >= L) continue;
                              for (Index v = 0; v < V; ++v) {
                                acc += gp[to * V + v] * xp[ti * V + v];
                                if (dxp) dxp[ti * V + v] += wv * gp[to * V + v];
                              }
                            }
                            if (dw) dw[widx] += acc;
                          }
                        }
                      }
                    }
                  });
}

Var maxpool_time(Var input, Index kernel, Index stride_t, Index pad_t) {
  const Shape& xs = input.shape();
  require(xs.size() == 4, Errc::invalid_shape, "maxpool_time: input must be [B,C,L,V], got " + to_string(xs));
  require(pad_t < kernel, Errc::invalid_parameter, "maxpool_time: padding must be smaller than the kernel");
  const Index B = xs[0], C = xs[1], L = xs[2], V = xs[3];
  const Index Lout = windowed_length(L, kernel, stride_t, pad_t);
  Tensor out({B, C, Lout, V}, 0.0);
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()), -1);
  const Scalar* x = input.value().ptr();
  for (Index bc = 0; bc < B * C; ++bc) {
    for (Index to = 0; to < Lout; ++to) {
      for (Index v = 0; v < V; ++v) {
        Scalar best = -std::numeric_limits<Scalar>::infinity();
        Index where = -1;
        for (Index j = 0; j < kernel; ++j) {
          const Index ti = to * stride_t - pad_t + j;
          if (ti < 0 || ti >= L) continue;
          const Index idx = (bc * L + ti) * V + v;
          if (where < 0 || x[idx] > best) {
            best = x[idx];
            where = idx;
          }
        }
        const Index o = (bc * Lout + to) * V + v;
        out[o] = best;
        argmax[static_cast<std::size_t>(o)] = where;
      }
    }
  }
  return input.graph().record(Op::maxpool_time, std::move(out), {input},
                              [argmax = std::move(argmax)](const Tensor& go, auto grads) {
                                if (!grads[0]) return;
                                for (Index o = 0; o < go.size(); ++o) {
                                  Index src = argmax[static_cast<std::size_t>(o)];
                                  if (src >= 0) (*grads[0])[src] += go[o];
                                }
                              });
}

// ---------------------------------------------------------------------------
// Activations

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape(), 0.0);
  out.data() = xv.data().unaryExpr([](Scalar t) { return 0.5 * t * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0)); });
  return x.graph().record(Op::gelu, std::move(out), {x}, [xv](const Tensor& go, auto grads) {
    if (!grads[0]) return;
    const Scalar inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    grads[0]->data() += go.data() * xv.data().unaryExpr([inv_sqrt_2pi](Scalar t) {
      const Scalar cdf = 0.5 * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0));
      return cdf + t * inv_sqrt_2pi * std::exp(-0.5 * t * t);
    });
  });
}

Var dropout(Var x, Scalar p, Mode mode, Engine& rng) {
  if (!(p >= 0.0) || p >= 1.0) fail(Errc::invalid_parameter, "dropout probability must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return x;
  std::uniform_real_distribution<Scalar> uniform(0.0, 1.0);
  const Scalar keep_scale = 1.0 / (1.0 - p);
  Array mask(x.value().size());
  for (Index i = 0; i < mask.size(); ++i) mask[i] = uniform(rng) < p ? 0.0 : keep_scale;
  Tensor out = x.value();
  out.data() *= mask;
  return x.graph().record(Op::dropout, std::move(out), {x}, [mask = std::move(mask)](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go.data() * mask;
  });
}

Var softmax_lastdim(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, Errc::invalid_shape, "softmax_lastdim: rank-0 input");
  const Index n = xv.shape().back();
  const Index rows = xv.size() / n;
  Tensor out(xv.shape(), 0.0);
  for (Index r = 0; r < rows; ++r) {
    auto in = xv.data().segment(r * n, n);
    auto y = out.data().segment(r * n, n);
    y = (in - in.maxCoeff()).exp();
    y /= y.sum();
  }
  Tensor yv = out;
  return x.graph().record(Op::softmax_lastdim, std::move(out), {x}, [yv, n, rows](const Tensor& go, auto grads) {
    if (!grads[0]) return;
    for (Index r = 0; r < rows; ++r) {
      auto y = yv.data().segment(r * n, n);
      auto gy = go.data().segment(r * n, n);
      const Scalar dot = (gy * y).sum();
      grads[0]->data().segment(r * n, n) += y * (gy - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation and reductions

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record(Op::reshape, std::move(out), {x}, [](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go.data();
  });
}

Var permute(Var x, std::vector<Index> axes) {
  const Shape& in = x.shape();
  require(axes.size() == in.size(), Errc::invalid_shape, "permute: axis count does not match rank");
  std::vector<bool> seen(in.size(), false);
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    require(axes[i] >= 0 && axes[i] < static_cast<Index>(in.size()) && !seen[static_cast<std::size_t>(axes[i])],
            Errc::invalid_argument, "permute: axes are not a permutation");
    seen[static_cast<std::size_t>(axes[i])] = true;
    out_shape[i] = in[static_cast<std::size_t>(axes[i])];
  }
  const auto in_strides = strides(in);
  std::vector<Index> src_stride(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) src_stride[i] = in_strides[static_cast<std::size_t>(axes[i])];

  const Index n = numel(out_shape);
  std::vector<Index> source(static_cast<std::size_t>(n));
  std::vector<Index> counter(out_shape.size(), 0);
  Index off = 0;
  for (Index i = 0; i < n; ++i) {
    source[static_cast<std::size_t>(i)] = off;
    for (std::size_t ax = out_shape.size(); ax-- > 0;) {
      ++counter[ax];
      off += src_stride[ax];
      if (counter[ax] < out_shape[ax]) break;
      off -= src_stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  Tensor out(out_shape, 0.0);
  const Tensor& xv = x.value();
  for (Index i = 0; i < n; ++i) out[i] = xv[source[static_cast<std::size_t>(i)]];
  return x.graph().record(Op::permute, std::move(out), {x}, [source = std::move(source)](const Tensor& go, auto grads) {
    if (!grads[0]) return;
    for (Index i = 0; i < go.size(); ++i) (*grads[0])[source[static_cast<std::size_t>(i)]] += go[i];
  });
}

namespace {

struct AxisSplit {
  Index outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, Index axis) {
  require(axis >= 0 && axis < static_cast<Index>(s.size()), Errc::invalid_argument, "axis out of range");
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (Index i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Var slice(Var x, Index axis, Index start, Index length) {
  const Shape& in = x.shape();
  const AxisSplit sp = split_axis(in, axis);
  require(start >= 0 && length >= 1 && start + length <= sp.extent, Errc::invalid_shape,
          "slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") out of range for " +
              to_string(in));
  Shape out_shape = in;
  out_shape[static_cast<std::size_t>(axis)] = length;
  Tensor out(out_shape, 0.0);
  const Tensor& xv = x.value();
  for (Index o = 0; o < sp.outer; ++o)
    out.data().segment(o * length * sp.inner, length * sp.inner) =
        xv.data().segment((o * sp.extent + start) * sp.inner, length * sp.inner);
  return x.graph().record(Op::slice, std::move(out), {x}, [sp, start, length](const Tensor& go, auto grads) {
    if (!grads[0]) return;
    for (Index o = 0; o < sp.outer; ++o)
      grads[0]->data().segment((o * sp.extent + start) * sp.inner, length * sp.inner) +=
          go.data().segment(o * length * sp.inner, length * sp.inner);
  });
}

Var concat(std::span<const Var> parts, Index axis) {
  require(!parts.empty(), Errc::invalid_argument, "concat of zero tensors");
  Graph& g = parts.front().graph();
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_axis(first, axis);
  std::vector<Index> extents;
  Index total = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    Shape s = p.shape();
    require(s.size() == first.size(), Errc::invalid_shape, "concat: rank mismatch");
    extents.push_back(s[static_cast<std::size_t>(axis)]);
    total += extents.back();
    s[static_cast<std::size_t>(axis)] = first[static_cast<std::size_t>(axis)];
    require(s == first, Errc::invalid_shape, "concat: shapes differ off the concatenation axis");
  }
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = total;
  Tensor out(out_shape, 0.0);
  Index offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    for (Index o = 0; o < base.outer; ++o)
      out.data().segment((o * total + offset) * base.inner, extents[i] * base.inner) =
          pv.data().segment(o * extents[i] * base.inner, extents[i] * base.inner);
    offset += extents[i];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(Op::concat, std::move(out), std::move(inputs),
                  [extents, total, outer = base.outer, inner = base.inner](const Tensor& go, auto grads) {
                    Index offset = 0;
                    for (std::size_t i = 0; i < extents.size(); ++i) {
                      if (grads[i])
                        for (Index o = 0; o < outer; ++o)
                          grads[i]->data().segment(o * extents[i] * inner, extents[i] * inner) +=
                              go.data().segment((o * total + offset) * inner, extents[i] * inner);
                      offset += extents[i];
                    }
                  });
}

Var sum(Var x) {
  Tensor out = Tensor::scalar(x.value().data().sum());
  return x.graph().record(Op::sum, std::move(out), {x}, [](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go[0];
  });
}

Var mean(Var x) {
  const Scalar n = static_cast<Scalar>(x.value().size());
  Tensor out = Tensor::scalar(x.value().data().sum() / n);
  return x.graph().record(Op::mean, std::move(out), {x}, [n](const Tensor& go, auto grads) {
    if (grads[0]) grads[0]->data() += go[0] / n;
  });
}

// ---------------------------------------------------------------------------
// Weight normalization

namespace {

Array channel_norms(const Tensor& v) {
  require(v.rank() >= 1, Errc::invalid_shape, "weight_norm: direction must have a leading channel axis");
  const Index channels = v.dim(0);
  const Index per = v.size() / channels;
  Array norms(channels);
  for (Index c = 0; c < channels; ++c) {
    norms[c] = v.data().segment(c * per, per).matrix().norm();
    if (!(norms[c] > 0.0)) fail(Errc::degenerate_weight, "zero-norm direction in channel " + std::to_string(c));
  }
  return norms;
}

Tensor normalized(const Tensor& v, const Tensor& g, const Array& norms) {
  const Index channels = v.dim(0);
  require(g.shape() == Shape{channels}, Errc::invalid_shape,
          "weight_norm: magnitude must be [" + std::to_string(channels) + "]");
  const Index per = v.size() / channels;
  Tensor out(v.shape(), 0.0);
  for (Index c = 0; c < channels; ++c)
    out.data().segment(c * per, per) = v.data().segment(c * per, per) * (g[c] / norms[c]);
  return out;
}

}  // namespace

Tensor weight_norm_value(const Tensor& direction, const Tensor& magnitude) {
  return normalized(direction, magnitude, channel_norms(direction));
}

Var weight_norm(Var direction, Var magnitude) {
  Graph& g = same_graph(direction, magnitude);
  const Tensor& v = direction.value();
  const Tensor& gv = magnitude.value();
  const Array norms = channel_norms(v);
  Tensor out = normalized(v, gv, norms);
  const Index channels = v.dim(0);
  const Index per = v.size() / channels;
  return g.record(Op::weight_norm, std::move(out), {direction, magnitude},
                  [v, gv, norms, channels, per](const Tensor& go, auto grads) {
                    for (Index c = 0; c < channels; ++c) {
                      auto dw = go.data().segment(c * per, per);
                      Array unit = v.data().segment(c * per, per) / norms[c];
                      const Scalar proj = (dw * unit).sum();
                      if (grads[1]) (*grads[1])[c] += proj;
                      if (grads[0]) grads[0]->data().segment(c * per, per) += (gv[c] / norms[c]) * (dw - proj * unit);
                    }
                  });
}

}  // namespace fdnet
