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

#include "srcperm/maxent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace srcperm {

namespace {
// Starting value for unweighted cells: exp(-1) solves the stationarity
// condition of −Σ w·log w exactly, rather than of the relative-entropy form.
const double kUniformPrior = std::exp(-1.0);
// Rows that cannot be met (all their mass sits in cells pinned by zero rows)
// would otherwise scale without bound and poison shared cells with inf·0.
const double kMaxMultiplier = 1e15;

double rel_residual(double sum, double target, double scale) {
  double err = std::abs(sum - target);
  if (err == 0.0) return 0.0;
  return err / std::max(scale, 1e-12);
}
}  // namespace

MaxEntNonConvergence::MaxEntNonConvergence(MaxEntResult last)
    : Error("maxent did not converge after " + std::to_string(last.iterations) + " iterations"),
      last_(std::move(last)) {}

ScalingSolver::ScalingSolver(std::size_t rows, std::vector<std::vector<std::uint32_t>> cell_rows,
                             std::vector<double> prior)
    : rows_(rows),
      cell_rows_(std::move(cell_rows)),
      row_cells_(rows),
      prior_(std::move(prior)),
      multipliers_(rows, 1.0),
      values_(cell_rows_.size(), 0.0) {
  if (prior_.empty()) prior_.assign(cell_rows_.size(), kUniformPrior);
  if (prior_.size() != cell_rows_.size()) throw Error("prior size does not match cell count");
  for (std::uint32_t c = 0; c < cell_rows_.size(); ++c) {
    for (auto r : cell_rows_[c]) {
      if (r >= rows_) throw Error("cell references a row outside the problem");
      row_cells_[r].push_back(c);
    }
  }
}

void ScalingSolver::reset_multipliers() { std::fill(multipliers_.begin(), multipliers_.end(), 1.0); }

void ScalingSolver::refresh(std::span<const char> active) {
  for (std::size_t c = 0; c < cell_rows_.size(); ++c) {
    if (!active[c]) {
      values_[c] = 0.0;
      continue;
    }
    double v = prior_[c];
    for (auto r : cell_rows_[c]) v *= multipliers_[r];
    values_[c] = std::isfinite(v) ? v : std::numeric_limits<double>::max();
  }
}

double ScalingSolver::row_sum(std::size_t r, std::span<const char> active) const {
  double s = 0.0;
  for (auto c : row_cells_[r]) {
    if (active[c]) s += values_[c];
  }
  return s;
}

double ScalingSolver::sweep(std::span<const double> targets, std::span<const double> scale,
                            std::span<const char> include, std::span<const char> hard,
                            std::span<const char> active) {
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!include[r]) continue;
    double sum = row_sum(r, active);
    double target = targets[r];
    if (target <= 0.0) {
      multipliers_[r] = 0.0;
      for (auto c : row_cells_[r]) values_[c] = 0.0;
      continue;
    }
    if (sum <= 0.0 || !std::isfinite(sum)) continue;
    double f = target / sum;
    if (multipliers_[r] * f > kMaxMultiplier) f = kMaxMultiplier / multipliers_[r];
    multipliers_[r] *= f;
    for (auto c : row_cells_[r]) {
      if (!active[c]) continue;
      values_[c] *= f;
      if (!std::isfinite(values_[c])) values_[c] = std::numeric_limits<double>::max();
    }
  }
  double worst = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!hard[r]) continue;
    bool has_active = false;
    for (auto c : row_cells_[r]) {
      if (active[c]) {
        has_active = true;
        break;
      }
    }
    if (!has_active) continue;
    worst = std::max(worst, rel_residual(row_sum(r, active), targets[r], scale[r]));
  }
  return worst;
}

ScalingSolver::Outcome ScalingSolver::solve(std::span<const double> targets,
                                            std::span<const double> scale,
                                            std::span<const char> hard,
                                            std::span<const char> active,
                                            const MaxEntOptions& options) {
  for (std::size_t r = 0; r < rows_; ++r) {
    if (targets[r] > 0.0 && !(multipliers_[r] > 0.0 && std::isfinite(multipliers_[r]))) {
      multipliers_[r] = 1.0;
    }
  }
  refresh(active);

  std::vector<char> all(rows_, 1);
  bool any_soft = false;
  for (std::size_t r = 0; r < rows_; ++r) any_soft |= !hard[r];

  Outcome out;
  if (any_soft) {
    for (std::size_t it = 0; it < options.soft_iterations && out.iterations < options.max_iterations;
         ++it) {
      ++out.iterations;
      double worst_all = sweep(targets, scale, all, all, active);
      if (worst_all <= options.tolerance) break;
    }
  }
  out.max_hard_residual = sweep(targets, scale, hard, hard, active);
  ++out.iterations;
  // Rows that no free cell can satisfy leave a residual floor; stop once a
  // window of sweeps stops shrinking it.
  double checkpoint = out.max_hard_residual;
  while (out.max_hard_residual > options.tolerance && out.iterations < options.max_iterations) {
    out.max_hard_residual = sweep(targets, scale, hard, hard, active);
    ++out.iterations;
    if (options.stall_window > 0 && out.iterations % options.stall_window == 0) {
      if (out.max_hard_residual > checkpoint * (1.0 - options.stall_gain)) break;
      checkpoint = out.max_hard_residual;
    }
    // Scaling closes the gap only slowly when the optimum drives cells to
    // zero; Newton steps on the dual converge geometrically there.
    if (options.newton_after > 0 && out.iterations == options.newton_after &&
        out.max_hard_residual > options.tolerance) {
      std::size_t budget = options.max_iterations - std::min(options.max_iterations, out.iterations);
      out.max_hard_residual = newton(targets, scale, hard, active, options, budget, out.iterations);
      break;
    }
  }
  out.converged = out.max_hard_residual <= options.tolerance;
  return out;
}

double ScalingSolver::newton(std::span<const double> targets, std::span<const double> scale,
                             std::span<const char> hard, std::span<const char> active,
                             const MaxEntOptions& options, std::size_t budget,
                             std::size_t& iterations) {
  // Variables are log-multipliers of the hard rows that still need mass;
  // soft and zero-target rows keep their current multipliers.
  std::vector<std::uint32_t> vars;
  std::vector<int> var_of(rows_, -1);
  for (std::uint32_t r = 0; r < rows_; ++r) {
    if (!hard[r] || !(targets[r] > 0.0) || !(multipliers_[r] > 0.0)) continue;
    var_of[r] = static_cast<int>(vars.size());
    vars.push_back(r);
  }
  const std::size_t m = vars.size();
  const double log_cap = std::log(kMaxMultiplier);

  auto residual = [&] {
    double worst = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (!hard[r]) continue;
      bool has_active = false;
      for (auto c : row_cells_[r]) has_active |= active[c] != 0;
      if (!has_active) continue;
      worst = std::max(worst, rel_residual(row_sum(r, active), targets[r], scale[r]));
    }
    return worst;
  };
  auto dual = [&] {
    double phi = 0.0;
    for (std::size_t c = 0; c < values_.size(); ++c) {
      if (active[c]) phi += values_[c];
    }
    for (auto r : vars) phi -= targets[r] * std::log(multipliers_[r]);
    return phi;
  };

  double worst = residual();
  std::vector<double> grad(m), hess(m * m), dir(m), saved(m);
  for (std::size_t step = 0; step < budget && worst > options.tolerance && m > 0; ++step) {
    ++iterations;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t c = 0; c < cell_rows_.size(); ++c) {
      if (!active[c] || values_[c] <= 0.0) continue;
      const auto& rs = cell_rows_[c];
      for (auto a : rs) {
        int i = var_of[a];
        if (i < 0) continue;
        grad[i] += values_[c];
        for (auto b : rs) {
          int j = var_of[b];
          if (j >= 0) hess[i * m + j] += values_[c];
        }
      }
    }
    for (std::size_t i = 0; i < m; ++i) grad[i] -= targets[vars[i]];

    // Cholesky of the ridge-regularized Hessian, then solve H d = -g.
    double ridge = 0.0;
    for (std::size_t i = 0; i < m; ++i) ridge = std::max(ridge, hess[i * m + i]);
    ridge = std::max(ridge * 1e-12, 1e-300);
    for (std::size_t i = 0; i < m; ++i) hess[i * m + i] += ridge;
    bool ok = true;
    for (std::size_t j = 0; j < m && ok; ++j) {
      double d = hess[j * m + j];
      for (std::size_t k = 0; k < j; ++k) d -= hess[j * m + k] * hess[j * m + k];
      if (!(d > 0.0)) {
        ok = false;
        break;
      }
      d = std::sqrt(d);
      hess[j * m + j] = d;
      for (std::size_t i = j + 1; i < m; ++i) {
        double v = hess[i * m + j];
        for (std::size_t k = 0; k < j; ++k) v -= hess[i * m + k] * hess[j * m + k];
        hess[i * m + j] = v / d;
      }
    }
    if (!ok) break;
    for (std::size_t i = 0; i < m; ++i) {
      double v = -grad[i];
      for (std::size_t k = 0; k < i; ++k) v -= hess[i * m + k] * dir[k];
      dir[i] = v / hess[i * m + i];
    }
    for (std::size_t i = m; i-- > 0;) {
      double v = dir[i];
      for (std::size_t k = i + 1; k < m; ++k) v -= hess[k * m + i] * dir[k];
      dir[i] = v / hess[i * m + i];
    }

    double slope = 0.0;
    for (std::size_t i = 0; i < m; ++i) slope += grad[i] * dir[i];
    if (!(slope < 0.0)) break;
    double phi = dual();
    for (std::size_t i = 0; i < m; ++i) saved[i] = multipliers_[vars[i]];
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-10; alpha *= 0.5) {
      for (std::size_t i = 0; i < m; ++i) {
        double lambda = std::min(std::log(saved[i]) + alpha * dir[i], log_cap);
        multipliers_[vars[i]] = std::exp(lambda);
      }
      refresh(active);
      if (dual() <= phi + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      for (std::size_t i = 0; i < m; ++i) multipliers_[vars[i]] = saved[i];
      refresh(active);
      break;
    }
    worst = residual();
  }
  return worst;
}

double entropy_objective(std::span<const double> values) {
  double h = 0.0;
  for (double w : values) {
    if (w > 0.0) h -= w * std::log(w);
  }
  return h;
}

MaxEntResult maxent_solve(const std::map<SourceId, double>& constraints,
                          const std::map<CellSignature, double>& known,
                          const std::vector<CellSignature>& free, const MaxEntOptions& options) {
  MaxEntProblem problem;
  problem.constraints = constraints;
  problem.known = known;
  problem.free = free;
  for (const auto& sig : free) problem.width = std::max(problem.width, sig.width());
  for (const auto& [sig, v] : known) problem.width = std::max(problem.width, sig.width());
  return maxent_solve(problem, options);
}

MaxEntResult maxent_solve(const MaxEntProblem& problem, const MaxEntOptions& options) {
  MaxEntResult result;
  // Dense row numbering over the constrained sources.
  std::map<SourceId, std::uint32_t> row_of;
  std::vector<SourceId> row_source;
  for (const auto& [s, v] : problem.constraints) {
    row_of.emplace(s, static_cast<std::uint32_t>(row_source.size()));
    row_source.push_back(s);
  }
  const std::size_t rows = row_source.size();

  std::vector<double> known_sum(rows, 0.0);
  for (const auto& [sig, v] : problem.known) {
    for (auto m : sig.members()) {
      if (auto it = row_of.find(m); it != row_of.end()) known_sum[it->second] += v;
    }
  }

  std::vector<std::vector<std::uint32_t>> cell_rows(problem.free.size());
  for (std::size_t c = 0; c < problem.free.size(); ++c) {
    for (auto m : problem.free[c].members()) {
      if (auto it = row_of.find(m); it != row_of.end()) cell_rows[c].push_back(it->second);
    }
  }

  std::vector<double> targets(rows), scale(rows);
  std::vector<char> hard(rows, 1);
  for (auto s : problem.soft) {
    if (auto it = row_of.find(s); it != row_of.end()) hard[it->second] = 0;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double b = problem.constraints.at(row_source[r]);
    scale[r] = b;
    double residual = b - known_sum[r];
    if (residual < -options.tolerance * std::max(b, 1.0)) {
      std::ostringstream msg;
      msg << "constraint for source " << row_source[r].index << " overshot by " << -residual
          << "; clamped to 0";
      result.diagnostics.push_back(msg.str());
    }
    targets[r] = std::max(0.0, residual);
  }

  std::vector<double> prior = problem.prior;
  ScalingSolver solver(rows, cell_rows, std::move(prior));
  std::vector<char> active(problem.free.size(), 1);
  for (std::size_t c = 0; c < cell_rows.size(); ++c) {
    if (cell_rows[c].empty()) {
      active[c] = 0;
      result.diagnostics.push_back("free cell " + problem.free[c].to_hex() +
                                   " appears in no constraint; left at 0");
    }
  }
  auto outcome = solver.solve(targets, scale, hard, active, options);
  result.iterations = outcome.iterations;
  result.converged = outcome.converged;

  auto values = solver.values();
  std::vector<double> row_total = known_sum;
  for (std::size_t c = 0; c < problem.free.size(); ++c) {
    result.values[problem.free[c]] = values[c];
    for (auto r : cell_rows[c]) row_total[r] += values[c];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    bool has_free = false;
    for (std::size_t c = 0; c < cell_rows.size() && !has_free; ++c) {
      has_free = std::find(cell_rows[c].begin(), cell_rows[c].end(), r) != cell_rows[c].end();
    }
    double res = std::abs(row_total[r] - problem.constraints.at(row_source[r]));
    result.residuals[row_source[r]] = res;
    if (!has_free && res > options.tolerance * std::max(scale[r], 1.0)) {
      result.diagnostics.push_back("constraint for source " + std::to_string(row_source[r].index) +
                                   " has no free cell; residual " + std::to_string(res));
    }
  }
  if (!result.converged && options.throw_on_nonconvergence) {
    throw MaxEntNonConvergence(std::move(result));
  }
  return result;
}

}  // namespace srcperm
