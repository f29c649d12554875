#pragma once

#include "fdnet/fdnet_model.hpp"
#include "fdnet/funet_model.hpp"

#include <string>
#include <variant>
#include <vector>

namespace fdnet {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedParam {
  std::string name;
  const Tensor* tensor;
};

/// Either forecasting network behind one interface.
class ForecastModel {
 public:
  explicit ForecastModel(FDNetModel model) : impl_(std::move(model)) {}
  explicit ForecastModel(FUNetModel model) : impl_(std::move(model)) {}

  static ForecastModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const;
  const FocalPlan& plan() const;
  Variant variant() const { return config().variant; }

  ForecastOutput forward(Graph& graph, Var x, const ForwardContext& ctx) const;

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;
  ParamCounts param_count() const;

  /// Temporal length of each branch representation after its stack.
  std::vector<Index> representation_lengths() const;

  const std::variant<FDNetModel, FUNetModel>& impl() const { return impl_; }
  std::variant<FDNetModel, FUNetModel>& impl() { return impl_; }

 private:
  std::variant<FDNetModel, FUNetModel> impl_;
};

/// Values of every parameter, in parameters() order.
std::vector<Tensor> snapshot(const ForecastModel& model);
void restore(ForecastModel& model, const std::vector<Tensor>& values);

}  // namespace fdnet
