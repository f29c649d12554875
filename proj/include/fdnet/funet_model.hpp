#pragma once

#include "fdnet/layers.hpp"
#include "fdnet/model_config.hpp"

#include <string>
#include <vector>

namespace fdnet {

/// Attention + 1x1 conv with a residual, then a stride-2 3x1 conv and a 3x1
/// conv, joined with a stride-2 max-pool skip. Halves temporal length.
struct DFEICOMBlock {
  AttentionParams attention;
  WeightNormConv mix;         // 1x1 after attention
  WeightNormConv downsample;  // 3x1, stride 2, pad 1
  WeightNormConv refine;      // 3x1, stride 1, pad 1
};

struct FUNetBranch {
  ValueEmbedding embedding;
  std::vector<DFEICOMBlock> blocks;
  LinearHead head;
};

struct FUNetModel {
  ModelConfig config;
  FocalPlan plan;
  std::vector<FUNetBranch> branches;
};

/// L -> floor((L - 1) / 2) + 1.
constexpr Index halved_length(Index length) noexcept { return (length - 1) / 2 + 1; }
/// Temporal length after `depth` DFE-ICOM blocks.
Index funet_stack_length(Index length, Index depth);

DFEICOMBlock make_dfe_icom(Index channels, Index heads, std::uint64_t seed, const std::string& name);
FUNetModel make_funet(const ModelConfig& config, std::uint64_t seed);

/// x [B,D,L,V] -> [B,D,halved_length(L),V]; needs L >= 2.
Var dfe_icom_forward(Graph& graph, const DFEICOMBlock& block, Var x, const ForwardContext& ctx,
                     const std::string& site);

ForecastOutput funet_forward(Graph& graph, const FUNetModel& model, Var x, const ForwardContext& ctx);

ParamCounts param_count(const FUNetModel& model);

template <class Block, class F>
  requires std::same_as<std::remove_const_t<Block>, DFEICOMBlock>
void visit_params(Block& b, const std::string& prefix, F&& f) {
  visit_params(b.attention, prefix + ".attn", f);
  visit_params(b.mix, prefix + ".conv1", f);
  visit_params(b.downsample, prefix + ".conv2", f);
  visit_params(b.refine, prefix + ".conv3", f);
}

template <class Model, class F>
  requires std::same_as<std::remove_const_t<Model>, FUNetModel>
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
