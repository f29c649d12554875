#pragma once

#include "fdnet/autodiff.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fdnet {

/// Builds a scalar on `graph` from leaves created for each checked point.
using ScalarFn = std::function<Var(Graph& graph, std::span<const Var> inputs)>;

/// Max over all coordinates of all points of
///   |analytic - central difference| / max(1e-8, |analytic| + |numeric|).
/// Throws numeric-failure when any evaluation is non-finite.
Scalar grad_check(const ScalarFn& f, std::span<const Tensor> points, Scalar h = 1e-5);
Scalar grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& point, Scalar h = 1e-5);

/// Same measure for tensors that `f` binds with Graph::param, such as model
/// parameters; each is perturbed in place and restored afterwards.
Scalar grad_check_bound(const std::function<Var(Graph&)>& f, std::span<Tensor* const> targets, Scalar h = 1e-5);

struct GradCheckCase {
  std::string name;
  Scalar max_rel_error;
  bool passed;
};

struct GradCheckReport {
  Scalar tolerance;
  std::vector<GradCheckCase> cases;
  /// Tags exercised by at least one case.
  std::vector<Op> covered_ops;

  bool passed() const;
};

/// Full verification suite: one case per differentiable op, the layer
/// reparameterizations, and tiny end-to-end FDNet and FUNet models.
GradCheckReport run_gradcheck_suite(Scalar tolerance = 1e-3, Scalar h = 1e-5, std::uint64_t seed = 4321);

}  // namespace fdnet
