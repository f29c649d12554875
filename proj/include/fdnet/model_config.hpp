#pragma once

#include "fdnet/autodiff.hpp"
#include "fdnet/focal_plan.hpp"

#include <string>
#include <vector>

namespace fdnet {

/// Structural hyper-parameters shared by FDNet and FUNet. Defaults follow
/// the long-input benchmark setting (672 in, 5 branches, 5 layers, D = 8).
struct ModelConfig {
  Variant variant = Variant::fdnet;
  Index input_length = 672;
  Index output_length = 96;
  Index branches = 5;
  Scalar alpha = 0.5;
  Index layers = 5;
  Index embed_dim = 8;
  Index heads = 1;
  Scalar dropout = 0.1;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Result of one forward pass.
struct ForecastOutput {
  Var prediction;                       // [B, L_out, V]
  std::vector<Var> branch_outputs;      // f x [B, L_out, V], oldest first
  std::vector<Var> representations;     // f x [B, D, L_i', V], post-stack, pre-flatten
};

/// Exact parameter counts by group. Branch vectors are oldest first.
struct ParamCounts {
  std::vector<Index> embedding;
  std::vector<Index> stack;
  std::vector<Index> head;

  Index embedding_total() const;
  Index stack_total() const;
  Index head_total() const;
  Index total() const;
};

}  // namespace fdnet
