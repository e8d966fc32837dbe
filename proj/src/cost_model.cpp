// Copyright 2026 The srcperm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "srcperm/cost_model.hpp"

#include <algorithm>

namespace srcperm {

double query_rate(const SourceProfile& profile, double intersect_count) {
  double residual = std::max(0.0, profile.cardinality - intersect_count);
  double denom = profile.full_cost_ms();
  if (residual <= 0.0 || denom <= 0.0) return 0.0;
  return residual / denom;
}

double average_rate(std::span<const PermStep> steps) {
  if (steps.empty()) throw Error("empty permutation");
  double tuples = 0.0, cost = 0.0;
  for (const auto& s : steps) {
    tuples += s.residual;
    cost += s.cost_ms;
  }
  return cost > 0.0 ? tuples / cost : 0.0;
}

std::size_t covering_prefix(std::span<const PermStep> steps, double k) {
  double cum = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    cum += steps[i].residual;
    if (cum >= k) return i + 1;
  }
  return steps.size();
}

TimeCost time_cost(std::span<const PermStep> steps, double k, CostSemantics semantics) {
  TimeCost out;
  double cum = 0.0, cost = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (cum + s.residual >= k && s.residual > 0.0) {
      out.prefix_len = i + 1;
      if (semantics == CostSemantics::marginal) {
        out.ms = cost + (k - cum) * s.cost_ms / s.residual;
      } else {
        out.ms = k * (cost + s.cost_ms) / (cum + s.residual);
      }
      return out;
    }
    cum += s.residual;
    cost += s.cost_ms;
  }
  out.shortfall = true;
  out.prefix_len = steps.size();
  out.ms = cost;
  return out;
}

std::vector<PermStep> perm_steps(std::span<const SourceId> order, const StatsSnapshot& stats) {
  std::vector<PermStep> steps;
  steps.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto profile = stats.profile(order[i]);
    double inter = intersect_count(order.first(i), order[i], stats);
    steps.push_back(PermStep{profile.full_cost_ms(), std::max(0.0, profile.cardinality - inter)});
  }
  return steps;
}

double avg_query_rate(const PermState& perm, const StatsSnapshot& stats) {
  if (perm.order.empty()) throw Error("empty permutation");
  auto steps = perm_steps(perm.order, stats);
  return average_rate(steps);
}

TimeCost permutation_time_cost(const PermState& perm, const StatsSnapshot& stats, std::size_t k,
                               CostSemantics semantics) {
  auto steps = perm_steps(perm.order, stats);
  return time_cost(steps, static_cast<double>(k), semantics);
}

}  // namespace srcperm
