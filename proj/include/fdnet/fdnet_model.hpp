#pragma once

#include "fdnet/layers.hpp"
#include "fdnet/model_config.hpp"

#include <string>
#include <vector>

namespace fdnet {

/// Four weight-normalized convolutions, 1x1 / 3x1 / 1x1 / 3x1, with
/// residuals into both 3x1 outputs. Preserves channels and length.
struct DFEInitialBlock {
  WeightNormConv pointwise1;
  WeightNormConv temporal1;
  WeightNormConv pointwise2;
  WeightNormConv temporal2;
};

struct FDNetBranch {
  ValueEmbedding embedding;
  std::vector<DFEInitialBlock> blocks;
  LinearHead head;
};

struct FDNetModel {
  ModelConfig config;
  FocalPlan plan;
  std::vector<FDNetBranch> branches;
};

DFEInitialBlock make_dfe_initial(Index channels, std::uint64_t seed, const std::string& name);
FDNetModel make_fdnet(const ModelConfig& config, std::uint64_t seed);

/// x [B,D,L,V] -> [B,D,L,V]; `site` names the block's dropout streams.
Var dfe_initial_forward(Graph& graph, const DFEInitialBlock& block, Var x, const ForwardContext& ctx,
                        const std::string& site);

/// x [B,1,L_in,V] -> prediction [B,L_out,V] as the sum of per-branch heads.
/// Features are flattened channel-major: index d * L_i + t.
ForecastOutput fdnet_forward(Graph& graph, const FDNetModel& model, Var x, const ForwardContext& ctx);

ParamCounts param_count(const FDNetModel& model);

template <class Block, class F>
  requires std::same_as<std::remove_const_t<Block>, DFEInitialBlock>
void visit_params(Block& b, const std::string& prefix, F&& f) {
  visit_params(b.pointwise1, prefix + ".conv1", f);
  visit_params(b.temporal1, prefix + ".conv2", f);
  visit_params(b.pointwise2, prefix + ".conv3", f);
  visit_params(b.temporal2, prefix + ".conv4", f);
}

template <class Model, class F>
  requires std::same_as<std::remove_const_t<Model>, FDNetModel>
void visit_params(Model& m, F&& f) {
  for (std::size_t i = 0; i < m.branches.size(); ++i) {
    auto& br = m.branches[i];
    const std::string p = "branch" + std::to_string(i);
    visit_params(br.embedding, p + ".embed", f);
    for (std::size_t j = 0; j < br.blocks.size(); ++j) visit_params(br.blocks[j], p + ".block" + std::to_string(j), f);
    visit_params(br.head, p + ".head", f);
  }
}

}  // namespace fdnet
