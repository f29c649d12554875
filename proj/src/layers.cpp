#include "fdnet/layers.hpp"

#include "fdnet/error.hpp"

#include <cmath>

namespace fdnet {

Tensor wn_effective_weight(const WeightNormConv& layer) {
  return weight_norm_value(layer.direction, layer.magnitude);
}

Var wn_effective_weight(Graph& graph, const WeightNormConv& layer) {
  return weight_norm(graph.param(layer.direction), graph.param(layer.magnitude));
}

Var wn_conv_forward(Graph& graph, const WeightNormConv& layer, Var input) {
  return conv2d_time(input, wn_effective_weight(graph, layer), graph.param(layer.bias), layer.stride_t,
                     layer.pad_t);
}

Var value_embedding(Graph& graph, const ValueEmbedding& layer, Var x) {
  if (x.shape().size() != 4 || x.shape()[1] != 1)
    fail(Errc::invalid_shape, "value_embedding expects [B,1,L,V], got " + to_string(x.shape()));
  return conv2d_time(x, graph.param(layer.weight), graph.param(layer.bias), 1, 0);
}

Var linear_head_forward(Graph& graph, const LinearHead& head, Var features) {
  const Shape& s = features.shape();
  if (s.size() != 3 || s[1] != head.in_length())
    fail(Errc::invalid_shape, "linear head expects [B," + std::to_string(head.in_length()) + ",V], got " +
                                  to_string(s));
  Var y = matmul(graph.param(head.weight), features);
  Var b = reshape(graph.param(head.bias), {head.out_length(), 1});
  return add(y, b);
}

Var attention_forward(Graph& graph, const AttentionParams& params, Var x) {
  const Shape& s = x.shape();
  const Index d = params.dim();
  const Index h = params.heads;
  if (s.size() != 3 || s[2] != d)
    fail(Errc::invalid_shape, "attention expects [N,L," + std::to_string(d) + "], got " + to_string(s));
  if (h < 1 || d % h != 0)
    fail(Errc::invalid_parameter, "head count " + std::to_string(h) + " does not divide dimension " +
                                      std::to_string(d));
  const Index N = s[0], L = s[1], dh = d / h;

  Var q = matmul(x, graph.param(params.query));
  Var k = matmul(x, graph.param(params.key));
  Var v = matmul(x, graph.param(params.value));
  auto split_heads = [&](Var t) {
    if (h == 1) return t;
    return reshape(permute(reshape(t, {N, L, h, dh}), {0, 2, 1, 3}), {N * h, L, dh});
  };
  q = split_heads(q);
  k = split_heads(k);
  v = split_heads(v);

  Var scores = scale(matmul(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<Scalar>(dh)));
  Var context = matmul(softmax_lastdim(scores), v);
  if (h != 1) context = reshape(permute(reshape(context, {N, h, L, dh}), {0, 2, 1, 3}), {N, L, d});
  return matmul(context, graph.param(params.output));
}

Var temporal_attention(Graph& graph, const AttentionParams& params, Var x) {
  const Shape& s = x.shape();
  if (s.size() != 4) fail(Errc::invalid_shape, "temporal attention expects [B,D,L,V], got " + to_string(s));
  const Index B = s[0], D = s[1], L = s[2], V = s[3];
  Var seq = reshape(permute(x, {0, 3, 2, 1}), {B * V, L, D});
  Var out = attention_forward(graph, params, seq);
  return permute(reshape(out, {B, V, L, D}), {0, 3, 2, 1});
}

Tensor kaiming_uniform(Shape shape, Index fan_in, std::uint64_t seed, std::string_view name) {
  Engine rng = named_stream(seed, name);
  const Scalar bound = kaiming_bound(fan_in);
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  Tensor t(std::move(shape), 0.0);
  for (Scalar& x : t.values()) x = dist(rng);
  return t;
}

WeightNormConv make_wn_conv(Index in_ch, Index out_ch, Index kernel, Index stride_t, Index pad_t,
                            std::uint64_t seed, const std::string& name) {
  WeightNormConv layer;
  layer.direction = kaiming_uniform({out_ch, in_ch, kernel, 1}, in_ch * kernel, seed, name + ".v");
  layer.magnitude = Tensor({out_ch}, 0.0);
  const Index per = in_ch * kernel;
  for (Index c = 0; c < out_ch; ++c)
    layer.magnitude[c] = layer.direction.data().segment(c * per, per).matrix().norm();
  layer.bias = Tensor({out_ch}, 0.0);
  layer.stride_t = stride_t;
  layer.pad_t = pad_t;
  return layer;
}

ValueEmbedding make_value_embedding(Index embed_dim, std::uint64_t seed, const std::string& name) {
  return {kaiming_uniform({embed_dim, 1, 1, 1}, 1, seed, name + ".weight"), Tensor({embed_dim}, 0.0)};
}

LinearHead make_linear_head(Index in_len, Index out_len, std::uint64_t seed, const std::string& name) {
  return {kaiming_uniform({out_len, in_len}, in_len, seed, name + ".weight"), Tensor({out_len}, 0.0)};
}

AttentionParams make_attention(Index dim, Index heads, std::uint64_t seed, const std::string& name) {
  if (heads < 1 || dim % heads != 0)
    fail(Errc::invalid_parameter, "head count " + std::to_string(heads) + " does not divide dimension " +
                                      std::to_string(dim));
  AttentionParams p;
  p.query = kaiming_uniform({dim, dim}, dim, seed, name + ".wq");
  p.key = kaiming_uniform({dim, dim}, dim, seed, name + ".wk");
  p.value = kaiming_uniform({dim, dim}, dim, seed, name + ".wv");
  p.output = kaiming_uniform({dim, dim}, dim, seed, name + ".wo");
  p.heads = heads;
  return p;
}

}  // namespace fdnet
