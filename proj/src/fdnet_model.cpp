#include "fdnet/fdnet_model.hpp"

#include "fdnet/error.hpp"
#include "fdnet/model_common.hpp"

namespace fdnet {

DFEInitialBlock make_dfe_initial(Index channels, std::uint64_t seed, const std::string& name) {
  return {
      make_wn_conv(channels, channels, 1, 1, 0, seed, name + ".conv1"),
      make_wn_conv(channels, channels, 3, 1, 1, seed, name + ".conv2"),
      make_wn_conv(channels, channels, 1, 1, 0, seed, name + ".conv3"),
      make_wn_conv(channels, channels, 3, 1, 1, seed, name + ".conv4"),
  };
}

FDNetModel make_fdnet(const ModelConfig& config, std::uint64_t seed) {
  if (config.variant != Variant::fdnet) fail(Errc::invalid_argument, "make_fdnet called with a non-FDNet config");
  if (config.embed_dim < 1 || config.output_length < 1)
    fail(Errc::invalid_parameter, "embedding dimension and output length must be positive");
  FDNetModel model;
  model.config = config;
  model.plan = make_focal_plan(config.input_length, config.branches, config.alpha, config.layers, Variant::fdnet);
  const Index D = config.embed_dim;
  for (Index i = 0; i < config.branches; ++i) {
    const std::string p = "branch" + std::to_string(i);
    FDNetBranch br;
    br.embedding = make_value_embedding(D, seed, p + ".embed");
    for (Index j = 0; j < model.plan.depths[static_cast<std::size_t>(i)]; ++j)
      br.blocks.push_back(make_dfe_initial(D, seed, p + ".block" + std::to_string(j)));
    br.head = make_linear_head(D * model.plan.lengths[static_cast<std::size_t>(i)], config.output_length, seed,
                               p + ".head");
    model.branches.push_back(std::move(br));
  }
  return model;
}

Var dfe_initial_forward(Graph& graph, const DFEInitialBlock& block, Var x, const ForwardContext& ctx,
                        const std::string& site) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != block.pointwise1.in_channels())
    fail(Errc::invalid_shape, "DFE block expects [B," + std::to_string(block.pointwise1.in_channels()) +
                                  ",L,V], got " + to_string(s));
  auto activate = [&](Var t, const char* tag) {
    Engine rng = ctx.stream(site + tag);
    return gelu(dropout(t, ctx.dropout, ctx.mode, rng));
  };
  Var h1 = activate(wn_conv_forward(graph, block.pointwise1, x), ".drop1");
  Var h2 = activate(add(wn_conv_forward(graph, block.temporal1, h1), x), ".drop2");
  Var h3 = activate(wn_conv_forward(graph, block.pointwise2, h2), ".drop3");
  return activate(add(wn_conv_forward(graph, block.temporal2, h3), h2), ".drop4");
}

ForecastOutput fdnet_forward(Graph& graph, const FDNetModel& model, Var x, const ForwardContext& ctx) {
  check_model_input(x, model.plan);
  ForecastOutput out;
  auto parts = slice_input(x, model.plan);
  for (std::size_t i = 0; i < model.branches.size(); ++i) {
    const FDNetBranch& br = model.branches[i];
    const std::string p = "branch" + std::to_string(i);
    Var h = value_embedding(graph, br.embedding, parts[i]);
    for (std::size_t j = 0; j < br.blocks.size(); ++j)
      h = dfe_initial_forward(graph, br.blocks[j], h, ctx, p + ".block" + std::to_string(j));
    out.representations.push_back(h);
    out.branch_outputs.push_back(linear_head_forward(graph, br.head, flatten_per_variate(h)));
  }
  out.prediction = sum_branches(out.branch_outputs);
  return out;
}

ParamCounts param_count(const FDNetModel& model) {
  return count_params(model.branches.size(), [&](auto&& f) { visit_params(model, f); });
}

}  // namespace fdnet
