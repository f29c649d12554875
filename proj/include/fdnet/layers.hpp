#pragma once

#include "fdnet/autodiff.hpp"
#include "fdnet/rng.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>

namespace fdnet {

/// Per-forward settings. Dropout sites draw from a stream named after the
/// site and keyed by (seed, step), so a forward pass is reproducible.
struct ForwardContext {
  Mode mode = Mode::eval;
  std::uint64_t seed = 4321;
  std::uint64_t step = 0;
  Scalar dropout = 0.1;

  Engine stream(std::string_view site) const { return Engine(mix_seed(mix_seed(seed, hash_name(site)), step)); }
};

/// Conv over time with weight w = g * v / ||v||, norm per output channel.
struct WeightNormConv {
  Tensor direction;  // [Cout, Cin, k, 1]
  Tensor magnitude;  // [Cout]
  Tensor bias;       // [Cout]
  Index stride_t = 1;
  Index pad_t = 0;

  Index out_channels() const { return direction.dim(0); }
  Index in_channels() const { return direction.dim(1); }
  Index kernel() const { return direction.dim(2); }
};

/// Scalar-to-D lift of every (time, variate) element via a 1x1 conv.
struct ValueEmbedding {
  Tensor weight;  // [D, 1, 1, 1]
  Tensor bias;    // [D]
};

/// Projection shared by all variates: y[:, v] = W x[:, v] + b.
struct LinearHead {
  Tensor weight;  // [out_len, in_len]
  Tensor bias;    // [out_len]

  Index in_length() const { return weight.dim(1); }
  Index out_length() const { return weight.dim(0); }
};

/// Canonical multi-head self-attention, no projection biases.
struct AttentionParams {
  Tensor query, key, value, output;  // [d, d], applied as x * W
  Index heads = 1;

  Index dim() const { return query.dim(0); }
};

Tensor wn_effective_weight(const WeightNormConv& layer);
Var wn_effective_weight(Graph& graph, const WeightNormConv& layer);
Var wn_conv_forward(Graph& graph, const WeightNormConv& layer, Var input);

/// [B,1,L,V] -> [B,D,L,V].
Var value_embedding(Graph& graph, const ValueEmbedding& layer, Var x);

/// [B,in,V] -> [B,out,V].
Var linear_head_forward(Graph& graph, const LinearHead& head, Var features);

/// Self-attention over the middle axis of [N,L,d]; each of the N sequences
/// is attended independently.
Var attention_forward(Graph& graph, const AttentionParams& params, Var x);

/// Attention over time applied per variate to a [B,D,L,V] feature map.
Var temporal_attention(Graph& graph, const AttentionParams& params, Var x);

// Initialization: Kaiming-uniform on fan-in with negative slope sqrt(5),
// the usual conv/linear default, which gives bound 1 / sqrt(fan_in). Each
// tensor draws from the stream named by (seed, name), so results do not
// depend on construction order. Biases start at zero; g starts at ||v||.

inline Scalar kaiming_bound(Index fan_in) { return 1.0 / std::sqrt(static_cast<Scalar>(fan_in)); }
Tensor kaiming_uniform(Shape shape, Index fan_in, std::uint64_t seed, std::string_view name);
WeightNormConv make_wn_conv(Index in_ch, Index out_ch, Index kernel, Index stride_t, Index pad_t,
                            std::uint64_t seed, const std::string& name);
ValueEmbedding make_value_embedding(Index embed_dim, std::uint64_t seed, const std::string& name);
LinearHead make_linear_head(Index in_len, Index out_len, std::uint64_t seed, const std::string& name);
AttentionParams make_attention(Index dim, Index heads, std::uint64_t seed, const std::string& name);

// Parameter visitors. `f(name, tensor)` is called once per trainable tensor in
// a fixed order; constness of the layer carries through to the tensor.

template <class Layer, class F>
  requires std::same_as<std::remove_const_t<Layer>, WeightNormConv>
void visit_params(Layer& l, const std::string& prefix, F&& f) {
  f(prefix + ".v", l.direction);
  f(prefix + ".g", l.magnitude);
  f(prefix + ".bias", l.bias);
}

template <class Layer, class F>
  requires std::same_as<std::remove_const_t<Layer>, ValueEmbedding> ||
           std::same_as<std::remove_const_t<Layer>, LinearHead>
void visit_params(Layer& l, const std::string& prefix, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <class Layer, class F>
  requires std::same_as<std::remove_const_t<Layer>, AttentionParams>
void visit_params(Layer& l, const std::string& prefix, F&& f) {
  f(prefix + ".wq", l.query);
  f(prefix + ".wk", l.key);
  f(prefix + ".wv", l.value);
  f(prefix + ".wo", l.output);
}

}  // namespace fdnet
