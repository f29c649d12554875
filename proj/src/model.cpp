#include "fdnet/model.hpp"

#include "fdnet/error.hpp"
#include "fdnet/model_common.hpp"

#include <numeric>

namespace fdnet {

Index ParamCounts::embedding_total() const { return std::accumulate(embedding.begin(), embedding.end(), Index{0}); }
Index ParamCounts::stack_total() const { return std::accumulate(stack.begin(), stack.end(), Index{0}); }
Index ParamCounts::head_total() const { return std::accumulate(head.begin(), head.end(), Index{0}); }
Index ParamCounts::total() const { return embedding_total() + stack_total() + head_total(); }

void check_model_input(Var x, const FocalPlan& plan) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != plan.input_length)
    fail(Errc::invalid_shape, "model input must be [B,1," + std::to_string(plan.input_length) + ",V], got " +
                                  to_string(s));
  if (!x.value().all_finite()) fail(Errc::numeric_input, "model input contains NaN or Inf");
}

Var flatten_per_variate(Var features) {
  const Shape& s = features.shape();
  if (s.size() != 4) fail(Errc::invalid_shape, "flatten expects [B,D,L,V], got " + to_string(s));
  return reshape(features, {s[0], s[1] * s[2], s[3]});
}

Var sum_branches(const std::vector<Var>& outputs) {
  Var total = outputs.front();
  for (std::size_t i = 1; i < outputs.size(); ++i) total = add(total, outputs[i]);
  return total;
}

ForecastModel ForecastModel::create(const ModelConfig& config, std::uint64_t seed) {
  if (config.variant == Variant::fdnet) return ForecastModel(make_fdnet(config, seed));
  return ForecastModel(make_funet(config, seed));
}

const ModelConfig& ForecastModel::config() const {
  return std::visit([](const auto& m) -> const ModelConfig& { return m.config; }, impl_);
}

const FocalPlan& ForecastModel::plan() const {
  return std::visit([](const auto& m) -> const FocalPlan& { return m.plan; }, impl_);
}

ForecastOutput ForecastModel::forward(Graph& graph, Var x, const ForwardContext& ctx) const {
  if (const auto* fd = std::get_if<FDNetModel>(&impl_)) return fdnet_forward(graph, *fd, x, ctx);
  return funet_forward(graph, std::get<FUNetModel>(impl_), x, ctx);
}

std::vector<NamedParam> ForecastModel::parameters() {
  std::vector<NamedParam> out;
  std::visit([&](auto& m) { visit_params(m, [&](const std::string& n, Tensor& t) { out.push_back({n, &t}); }); },
             impl_);
  return out;
}

std::vector<ConstNamedParam> ForecastModel::parameters() const {
  std::vector<ConstNamedParam> out;
  std::visit(
      [&](const auto& m) { visit_params(m, [&](const std::string& n, const Tensor& t) { out.push_back({n, &t}); }); },
      impl_);
  return out;
}

ParamCounts ForecastModel::param_count() const {
  return std::visit([](const auto& m) { return fdnet::param_count(m); }, impl_);
}

std::vector<Index> ForecastModel::representation_lengths() const {
  const FocalPlan& p = plan();
  std::vector<Index> out;
  for (std::size_t i = 0; i < p.lengths.size(); ++i)
    out.push_back(variant() == Variant::fdnet ? p.lengths[i] : funet_stack_length(p.lengths[i], p.depths[i]));
  return out;
}

std::vector<Tensor> snapshot(const ForecastModel& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.parameters()) out.push_back(*p.tensor);
  return out;
}

void restore(ForecastModel& model, const std::vector<Tensor>& values) {
  auto params = model.parameters();
  if (params.size() != values.size()) fail(Errc::invalid_argument, "snapshot does not match model parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor->shape() != values[i].shape())
      fail(Errc::invalid_shape, "snapshot shape mismatch for " + params[i].name);
    *params[i].tensor = values[i];
  }
}

}  // namespace fdnet
