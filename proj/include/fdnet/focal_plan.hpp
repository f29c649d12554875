#pragma once

#include "fdnet/autodiff.hpp"

#include <string_view>
#include <vector>

namespace fdnet {

enum class Variant { fdnet, funet };

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view name);

/// Split of an input window into consecutive sub-sequences, oldest first.
/// Branch i covers lengths[i] steps and is processed by depths[i] blocks.
struct FocalPlan {
  Index input_length = 0;
  Index branches = 1;
  Scalar alpha = 0.5;
  Variant variant = Variant::fdnet;
  std::vector<Index> lengths;
  std::vector<Index> depths;

  /// Offset of each branch inside the input window.
  std::vector<Index> starts() const;
  friend bool operator==(const FocalPlan&, const FocalPlan&) = default;
};

/// Proportions oldest -> newest are {a, a^2, ..., a^(f-1), a^(f-1)}. Every
/// branch but the oldest gets floor(L * proportion); the oldest absorbs the
/// rest. FDNet depths rise to `max_depth` at the newest branch; FUNet depths
/// fall {f-1, ..., 1, 1}. Both are clipped below at 1.
FocalPlan make_focal_plan(Index input_length, Index branches, Scalar alpha, Index max_depth, Variant variant);

/// Contiguous temporal slices of x [B,1,L_in,V], one per branch.
std::vector<Var> slice_input(Var x, const FocalPlan& plan);

}  // namespace fdnet
