#pragma once

#include "fdnet/autodiff.hpp"
#include "fdnet/error.hpp"
#include "fdnet/focal_plan.hpp"
#include "fdnet/model_config.hpp"

#include <functional>
#include <string>

namespace fdnet {

/// Shape [B,1,L_in,V] and finiteness check for model inputs.
void check_model_input(Var x, const FocalPlan& plan);

/// [B,D,L,V] -> [B,D*L,V], channel-major.
Var flatten_per_variate(Var features);

/// Left-to-right sum, oldest branch first.
Var sum_branches(const std::vector<Var>& outputs);

/// Groups parameters named "branch<i>.{embed,block<j>,head}..." by branch.
template <class Visit>
ParamCounts count_params(std::size_t branches, Visit&& visit) {
  ParamCounts c;
  c.embedding.assign(branches, 0);
  c.stack.assign(branches, 0);
  c.head.assign(branches, 0);
  visit([&](const std::string& name, const Tensor& t) {
    const auto dot = name.find('.');
    const std::size_t b = std::stoul(name.substr(6, dot - 6));
    const std::string rest = name.substr(dot + 1);
    if (rest.starts_with("embed"))
      c.embedding.at(b) += t.size();
    else if (rest.starts_with("head"))
      c.head.at(b) += t.size();
    else
      c.stack.at(b) += t.size();
  });
  return c;
}

}  // namespace fdnet
