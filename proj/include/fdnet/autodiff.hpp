#pragma once

#include "fdnet/rng.hpp"
#include "fdnet/tensor.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fdnet {

/// Operation tags recorded on the tape.
enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scale,
  matmul,
  conv2d_time,
  maxpool_time,
  gelu,
  dropout,
  softmax_lastdim,
  reshape,
  permute,
  slice,
  concat,
  sum,
  mean,
  weight_norm,
};

std::string_view op_name(Op op) noexcept;

/// Every tag with a backward rule, in declaration order.
std::span<const Op> differentiable_ops() noexcept;

enum class Mode { train, eval };

class Graph;

/// Handle to a node on a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives dL/d(output) and accumulates into dL/d(input_i). Entries of
/// `input_grads` are null for inputs that do not require gradients.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// the node vector is already a topological order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  /// Leaf bound to a model parameter; repeated calls with the same parameter
  /// return the same node.
  Var param(const Tensor& parameter);

  /// Reverse sweep from a single-element loss.
  void backward(Var loss);

  /// Gradient of the last backward() w.r.t. a node (zeros when unreached).
  Tensor grad(Var v) const;
  /// Gradient w.r.t. a parameter bound via param(); zeros when the parameter
  /// was never bound or did not contribute to the loss.
  Tensor grad(const Tensor& parameter) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id()).op; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::span<const std::size_t> inputs(Var v) const { return nodes_.at(v.id()).inputs; }
  /// Distinct tags on the tape, in first-use order.
  std::vector<Op> recorded_ops() const;

  Var record(Op op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

 private:
  friend class Var;
  struct Node {
    Op op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Tensor*, std::size_t> params_;
};

/// Test hook: while set, the backward rule of `op` receives its upstream
/// gradient scaled by 1.5, which a gradient check must detect.
void set_corrupted_backward(std::optional<Op> op) noexcept;
std::optional<Op> corrupted_backward() noexcept;

// Broadcasting rule for add/sub/mul: `b` is left-padded with singleton axes
// to the rank of `a`; every axis of `b` must then equal the matching axis of
// `a` or be 1. The result has the shape of `a`. Nothing else broadcasts.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, Scalar factor);

/// Matrix product. 2-D x 2-D is the plain product; a 3-D operand is a batch
/// of matrices, and a 2-D operand paired with it is shared across the batch.
Var matmul(Var a, Var b);

/// Convolution over the time axis of [B,Cin,L,V] with a [Cout,Cin,k,1]
/// kernel. Variate axis: kernel extent 1, stride 1, no padding. `bias` may be
/// an invalid Var for no bias.
Var conv2d_time(Var input, Var weight, Var bias, Index stride_t, Index pad_t);

/// Max over time windows of [B,C,L,V]; padding acts as -infinity. Gradient
/// goes to the first maximal element of each window.
Var maxpool_time(Var input, Index kernel = 3, Index stride_t = 2, Index pad_t = 1);

/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Var gelu(Var x);

/// Inverted dropout. Identity in eval mode or when p == 0.
Var dropout(Var x, Scalar p, Mode mode, Engine& rng);

Var softmax_lastdim(Var x);

Var reshape(Var x, Shape shape);
Var permute(Var x, std::vector<Index> axes);
Var slice(Var x, Index axis, Index start, Index length);
Var concat(std::span<const Var> parts, Index axis);
Var sum(Var x);
Var mean(Var x);

/// Weight-normalized kernel: w[c] = g[c] * v[c] / ||v[c]|| per leading index c.
Var weight_norm(Var direction, Var magnitude);
Tensor weight_norm_value(const Tensor& direction, const Tensor& magnitude);

/// Output length of a time-axis window op; throws sequence-too-short if < 1.
Index windowed_length(Index length, Index kernel, Index stride, Index pad);

}  // namespace fdnet
