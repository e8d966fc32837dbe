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

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "srcperm/lattice.hpp"

namespace srcperm {

struct MaxEntOptions {
  /// Convergence when every hard row satisfies |Σw − b| ≤ tolerance·b.
  double tolerance = 1e-9;
  std::size_t max_iterations = 10000;
  /// Sweeps over hard+soft rows before soft rows are released.
  std::size_t soft_iterations = 200;
  bool throw_on_nonconvergence = true;
  /// Give up when a window of this many sweeps cuts the worst hard residual
  /// by less than `stall_gain` (relative). 0 disables the check.
  std::size_t stall_window = 200;
  double stall_gain = 1e-3;
  /// Switch from scaling sweeps to Newton steps on the dual after this many
  /// hard sweeps. 0 keeps scaling throughout.
  std::size_t newton_after = 300;
};

/// Maximum-entropy fill-in over the per-source marginal constraints.
///
/// Free cells maximize −Σ w·log w (or, when `prior` is given, minimize the
/// relative entropy Σ w·log(w/prior) − w) subject to Σ_{cells ∋ i} w = b_i.
/// Known cells contribute their fixed values to each row. Rows listed in
/// `soft` are honoured best-effort: feasible hard rows always converge even
/// if the soft rows conflict with them.
struct MaxEntProblem {
  std::size_t width = 0;
  std::map<SourceId, double> constraints;
  std::map<CellSignature, double> known;
  std::vector<CellSignature> free;
  std::vector<double> prior;  // empty or one entry per free cell
  std::vector<SourceId> soft;
};

struct MaxEntResult {
  std::map<CellSignature, double> values;
  std::map<SourceId, double> residuals;  // |known + free − b| per constraint
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> diagnostics;
};

class MaxEntNonConvergence : public Error {
 public:
  explicit MaxEntNonConvergence(MaxEntResult last);
  const MaxEntResult& last() const { return last_; }

 private:
  MaxEntResult last_;
};

MaxEntResult maxent_solve(const std::map<SourceId, double>& constraints,
                          const std::map<CellSignature, double>& known,
                          const std::vector<CellSignature>& free, const MaxEntOptions& options = {});

MaxEntResult maxent_solve(const MaxEntProblem& problem, const MaxEntOptions& options = {});

/// −Σ w·log w with 0·log 0 = 0.
double entropy_objective(std::span<const double> values);

/// Iterative proportional scaling over sparse constraint rows.
///
/// Each active cell's value stays of the form prior_c · Π_{rows ∋ c} μ_row,
/// which is the stationarity condition of the Lagrangian. The multipliers
/// persist between solve() calls, so a re-solve after a few cells became
/// known starts from the previous dual point and converges in a handful of
/// sweeps.
class ScalingSolver {
 public:
  ScalingSolver(std::size_t rows, std::vector<std::vector<std::uint32_t>> cell_rows,
                std::vector<double> prior);

  struct Outcome {
    std::size_t iterations = 0;
    bool converged = false;
    double max_hard_residual = 0.0;  // relative to the row scale
  };

  /// `targets[r]` is the mass row r still needs from active cells, `scale[r]`
  /// the full constraint value used for the relative tolerance.
  Outcome solve(std::span<const double> targets, std::span<const double> scale,
                std::span<const char> hard, std::span<const char> active,
                const MaxEntOptions& options);

  std::span<const double> values() const { return values_; }
  std::size_t cell_count() const { return cell_rows_.size(); }
  void reset_multipliers();

 private:
  double row_sum(std::size_t r, std::span<const char> active) const;
  void refresh(std::span<const char> active);
  double sweep(std::span<const double> targets, std::span<const double> scale,
               std::span<const char> include, std::span<const char> hard,
               std::span<const char> active);
  double newton(std::span<const double> targets, std::span<const double> scale,
                std::span<const char> hard, std::span<const char> active,
                const MaxEntOptions& options, std::size_t budget, std::size_t& iterations);

  std::size_t rows_;
  std::vector<std::vector<std::uint32_t>> cell_rows_;
  std::vector<std::vector<std::uint32_t>> row_cells_;
  std::vector<double> prior_;
  std::vector<double> multipliers_;
  std::vector<double> values_;
};

}  // namespace srcperm
