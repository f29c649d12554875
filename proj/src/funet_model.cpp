#include "fdnet/funet_model.hpp"

#include "fdnet/error.hpp"
#include "fdnet/model_common.hpp"

namespace fdnet {

Index funet_stack_length(Index length, Index depth) {
  for (Index i = 0; i < depth; ++i) {
    if (length < 2)
      fail(Errc::sequence_too_short, "DFE-ICOM block needs at least 2 time steps, got " + std::to_string(length));
    length = halved_length(length);
  }
  return length;
}

DFEICOMBlock make_dfe_icom(Index channels, Index heads, std::uint64_t seed, const std::string& name) {
  return {
      make_attention(channels, heads, seed, name + ".attn"),
      make_wn_conv(channels, channels, 1, 1, 0, seed, name + ".conv1"),
      make_wn_conv(channels, channels, 3, 2, 1, seed, name + ".conv2"),
      make_wn_conv(channels, channels, 3, 1, 1, seed, name + ".conv3"),
  };
}

FUNetModel make_funet(const ModelConfig& config, std::uint64_t seed) {
  if (config.variant != Variant::funet) fail(Errc::invalid_argument, "make_funet called with a non-FUNet config");
  if (config.embed_dim < 1 || config.output_length < 1)
    fail(Errc::invalid_parameter, "embedding dimension and output length must be positive");
  FUNetModel model;
  model.config = config;
  model.plan = make_focal_plan(config.input_length, config.branches, config.alpha, config.layers, Variant::funet);
  const Index D = config.embed_dim;
  for (Index i = 0; i < config.branches; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::string p = "branch" + std::to_string(i);
    const Index depth = model.plan.depths[ui];
    const Index out_len = funet_stack_length(model.plan.lengths[ui], depth);
    FUNetBranch br;
    br.embedding = make_value_embedding(D, seed, p + ".embed");
    for (Index j = 0; j < depth; ++j)
      br.blocks.push_back(make_dfe_icom(D, config.heads, seed, p + ".block" + std::to_string(j)));
    br.head = make_linear_head(D * out_len, config.output_length, seed, p + ".head");
    model.branches.push_back(std::move(br));
  }
  return model;
}

Var dfe_icom_forward(Graph& graph, const DFEICOMBlock& block, Var x, const ForwardContext& ctx,
                     const std::string& site) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != block.mix.in_channels())
    fail(Errc::invalid_shape, "DFE-ICOM block expects [B," + std::to_string(block.mix.in_channels()) +
                                  ",L,V], got " + to_string(s));
  if (s[2] < 2)
    fail(Errc::sequence_too_short, "DFE-ICOM block needs at least 2 time steps, got " + std::to_string(s[2]));
  auto activate = [&](Var t, const char* tag) {
    Engine rng = ctx.stream(site + tag);
    return gelu(dropout(t, ctx.dropout, ctx.mode, rng));
  };
  Var attended = temporal_attention(graph, block.attention, x);
  Var a = activate(add(x, wn_conv_forward(graph, block.mix, attended)), ".drop1");
  Var b = activate(wn_conv_forward(graph, block.downsample, a), ".drop2");
  Var c = activate(wn_conv_forward(graph, block.refine, b), ".drop3");
  return add(c, maxpool_time(x, 3, 2, 1));
}

ForecastOutput funet_forward(Graph& graph, const FUNetModel& model, Var x, const ForwardContext& ctx) {
  check_model_input(x, model.plan);
  ForecastOutput out;
  auto parts = slice_input(x, model.plan);
  for (std::size_t i = 0; i < model.branches.size(); ++i) {
    const FUNetBranch& br = model.branches[i];
    const std::string p = "branch" + std::to_string(i);
    Var h = value_embedding(graph, br.embedding, parts[i]);
    for (std::size_t j = 0; j < br.blocks.size(); ++j)
      h = dfe_icom_forward(graph, br.blocks[j], h, ctx, p + ".block" + std::to_string(j));
    out.representations.push_back(h);
    out.branch_outputs.push_back(linear_head_forward(graph, br.head, flatten_per_variate(h)));
  }
  out.prediction = sum_branches(out.branch_outputs);
  return out;
}

ParamCounts param_count(const FUNetModel& model) {
  return count_params(model.branches.size(), [&](auto&& f) { visit_params(model, f); });
}

}  // namespace fdnet
