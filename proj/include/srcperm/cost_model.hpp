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

#pragma once

#include <span>
#include <vector>

#include "srcperm/lattice.hpp"
#include "srcperm/types.hpp"

namespace srcperm {

/// How a permutation's retrieval time is accounted.
///
/// `marginal`: sources are read one after another; residual tuples of a
/// source arrive uniformly over its ta + tr|S| window, so the last source is
/// charged only for the fraction it needs. This reproduces the piecewise
/// optimal table and the crossing point of the three-source example.
///
/// `prefix_average`: T = k / v_avg over the minimal covering prefix. This is
/// the definition the approximation bound is stated against.
enum class CostSemantics { marginal, prefix_average };

/// One source as seen at its position in a permutation.
struct PermStep {
  double cost_ms = 0.0;   // ta + tr|S|
  double residual = 0.0;  // |S| - |∩S|, clamped at 0
};

struct TimeCost {
  double ms = 0.0;
  bool shortfall = false;       // whole permutation holds fewer than k residual tuples
  std::size_t prefix_len = 0;   // i_k, or the full length on shortfall
};

/// (|S| - |∩S|) / (ta + tr|S|). A zero denominator yields 0.
double query_rate(const SourceProfile& profile, double intersect_count);

/// Σ residual / Σ cost over `steps`. Throws Error("empty permutation").
double average_rate(std::span<const PermStep> steps);

/// Length of the minimal prefix whose residual sum reaches k; steps.size()
/// if it never does.
std::size_t covering_prefix(std::span<const PermStep> steps, double k);

TimeCost time_cost(std::span<const PermStep> steps, double k, CostSemantics semantics);

/// Residual/cost steps of `order` evaluated against the snapshot lattice.
std::vector<PermStep> perm_steps(std::span<const SourceId> order, const StatsSnapshot& stats);

/// v_avg of the permutation as given; callers truncate at i_k first.
double avg_query_rate(const PermState& perm, const StatsSnapshot& stats);

TimeCost permutation_time_cost(const PermState& perm, const StatsSnapshot& stats, std::size_t k,
                               CostSemantics semantics = CostSemantics::marginal);

}  // namespace srcperm
