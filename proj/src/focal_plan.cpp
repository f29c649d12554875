#include "fdnet/focal_plan.hpp"

#include "fdnet/error.hpp"

#include <algorithm>
#include <cmath>

namespace fdnet {

std::string_view variant_name(Variant v) noexcept { return v == Variant::fdnet ? "fdnet" : "funet"; }

Variant parse_variant(std::string_view name) {
  if (name == "fdnet") return Variant::fdnet;
  if (name == "funet") return Variant::funet;
  fail(Errc::invalid_argument, "unknown variant '" + std::string(name) + "' (expected fdnet or funet)");
}

std::vector<Index> FocalPlan::starts() const {
  std::vector<Index> s(lengths.size(), 0);
  for (std::size_t i = 1; i < lengths.size(); ++i) s[i] = s[i - 1] + lengths[i - 1];
  return s;
}

FocalPlan make_focal_plan(Index input_length, Index branches, Scalar alpha, Index max_depth, Variant variant) {
  if (branches < 1) fail(Errc::invalid_plan, "branch count must be at least 1");
  if (max_depth < 1) fail(Errc::invalid_plan, "layer count must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_plan, "ratio alpha must lie in (0, 1)");
  if (input_length < 1) fail(Errc::invalid_plan, "input length must be positive");

  FocalPlan plan;
  plan.input_length = input_length;
  plan.branches = branches;
  plan.alpha = alpha;
  plan.variant = variant;
  plan.lengths.assign(static_cast<std::size_t>(branches), 0);
  plan.depths.assign(static_cast<std::size_t>(branches), 1);

  Index assigned = 0;
  for (Index i = 1; i < branches; ++i) {
    const Index exponent = std::min(i + 1, branches - 1);
    // The small slack keeps exact dyadic products (e.g. 672 / 16) from
    // rounding down through representation error.
    const Scalar share = static_cast<Scalar>(input_length) * std::pow(alpha, static_cast<Scalar>(exponent));
    plan.lengths[static_cast<std::size_t>(i)] = static_cast<Index>(std::floor(share + 1e-9));
    assigned += plan.lengths[static_cast<std::size_t>(i)];
  }
  plan.lengths[0] = input_length - assigned;
  for (Index len : plan.lengths)
    if (len < 1)
      fail(Errc::invalid_plan, "input length " + std::to_string(input_length) + " is too short for " +
                                   std::to_string(branches) + " branches");

  for (Index i = 0; i < branches; ++i) {
    const Index from_newest = branches - 1 - i;
    Index depth = 1;
    if (variant == Variant::fdnet) {
      depth = max_depth - from_newest;
    } else {
      depth = i == branches - 1 ? 1 : branches - 1 - i;
    }
    plan.depths[static_cast<std::size_t>(i)] = std::max<Index>(depth, 1);
  }
  return plan;
}

std::vector<Var> slice_input(Var x, const FocalPlan& plan) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != plan.input_length)
    fail(Errc::invalid_shape, "input " + to_string(s) + " does not match plan length " +
                                  std::to_string(plan.input_length));
  std::vector<Var> parts;
  const auto starts = plan.starts();
  for (std::size_t i = 0; i < plan.lengths.size(); ++i) parts.push_back(slice(x, 2, starts[i], plan.lengths[i]));
  return parts;
}

}  // namespace fdnet
