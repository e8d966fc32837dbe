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

#include "srcperm/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace srcperm {

StatsSnapshot initial_detection(const DetectionBackend& backend,
                                const InitialDetectionConfig& config, DetectionReport* report) {
  if (config.theta_sc < 0.0) throw Error("theta_sc must be nonnegative");
  if (!(config.sample_rate > 0.0 && config.sample_rate <= 1.0)) {
    throw Error("sample rate must lie in (0, 1]");
  }
  const std::size_t l = backend.source_count();
  if (l == 0) throw Error("empty universe");
  DetectionReport local;
  DetectionReport& rep = report ? *report : local;
  const double scale = 1.0 / config.sample_rate;

  StatsSnapshot snap;
  snap.version = 1;
  snap.stage = Stage::initial;
  snap.theta_sc = config.theta_sc;
  snap.sources.resize(l);

  double total = 0.0;
  std::vector<SourceId> available;
  for (std::size_t i = 0; i < l; ++i) {
    SourceId s(i);
    auto& st = snap.sources[i];
    st.access_time_ms = backend.access_time_ms(s);
    st.per_tuple_ms = backend.per_tuple_ms(s);
    ++rep.cardinality_queries;
    try {
      st.cardinality = backend.count_source(s, Predicate::all, config.sample_rate) * scale;
      st.detected = true;
      available.push_back(s);
      total += st.cardinality;
    } catch (const SourceUnavailable&) {
      st.cardinality = 0.0;
      st.available = false;
      st.detected = false;
      rep.unavailable.push_back(s);
    }
  }
  const double threshold =
      config.threshold_mode == ThresholdMode::relative ? config.theta_sc * total : config.theta_sc;
  const bool admit_all = threshold <= 0.0;

  std::map<SourceId, double> constraints;
  for (auto s : available) constraints[s] = snap.sources[s.index].cardinality;

  auto solve_round = [&](const std::vector<CellSignature>& free, bool last) {
    std::map<CellSignature, double> known;
    for (const auto& [sig, cell] : snap.cells) {
      if (cell.provenance == Provenance::detected && cell.value > 0.0) known.emplace(sig, cell.value);
    }
    MaxEntOptions opts = config.maxent;
    opts.throw_on_nonconvergence = false;
    if (!last) opts.max_iterations = std::min(opts.max_iterations, config.round_iterations);
    auto result = maxent_solve(constraints, known, free, opts);
    for (auto& d : result.diagnostics) rep.diagnostics.push_back(std::move(d));
    for (const auto& sig : free) {
      snap.cells[sig] = LatticeCell{sig, result.values.at(sig), Provenance::maxent_estimated};
    }
  };

  std::vector<CellSignature> current;
  for (auto s : available) {
    if (snap.sources[s.index].cardinality > 0.0) current.emplace_back(l, std::initializer_list<std::uint32_t>{s.index});
  }
  rep.rounds = 1;
  if (!current.empty()) solve_round(current, l == 1);

  for (std::size_t level = 1; !current.empty(); ++level) {
    // Prune by estimate, then detect what survived.
    std::vector<CellSignature> detected_now;
    for (const auto& sig : current) {
      auto& cell = snap.cells.at(sig);
      if (cell.value <= threshold) {
        cell.provenance = Provenance::pruned_zero;
        cell.value = 0.0;
        ++rep.pruned;
        continue;
      }
      ++rep.cell_queries;
      cell.value = backend.count_cell(sig, Predicate::all, config.sample_rate) * scale;
      cell.provenance = Provenance::detected;
      detected_now.push_back(sig);
    }
    if (level == l) break;

    // Children accumulate the detected mass of their level-q parents.
    std::unordered_map<CellSignature, double> parent_mass;
    for (const auto& sig : detected_now) {
      double v = snap.cells.at(sig).value;
      if (v <= 0.0 && !admit_all) continue;
      for (auto s : available) {
        if (sig.test(s)) continue;
        CellSignature child = sig;
        child.set(s);
        parent_mass[child] += v;
      }
    }
    std::vector<CellSignature> next;
    for (const auto& [child, mass] : parent_mass) {
      if (admit_all || mass > threshold) next.push_back(child);
    }
    std::sort(next.begin(), next.end());
    if (next.empty()) break;
    ++rep.rounds;
    solve_round(next, level + 1 == l);
    current = std::move(next);
  }
  return snap;
}

std::map<SourceId, double> online_scale_cardinalities(const std::map<SourceId, double>& partial,
                                                      const StatsSnapshot& initial,
                                                      std::span<const SourceId> perm,
                                                      double prior_ratio) {
  double ratio_sum = 0.0;
  std::size_t usable = 0;
  for (const auto& [s, count] : partial) {
    double base = initial.sources.at(s.index).cardinality;
    if (base <= 0.0) continue;
    ratio_sum += count / base;
    ++usable;
  }
  double ratio = usable > 0 ? ratio_sum / static_cast<double>(usable) : prior_ratio;
  std::map<SourceId, double> out;
  auto fill = [&](SourceId s) {
    if (auto it = partial.find(s); it != partial.end()) {
      out[s] = it->second;
    } else {
      out[s] = initial.sources.at(s.index).cardinality * ratio;
    }
  };
  for (auto s : perm) fill(s);
  for (std::size_t i = 0; i < initial.sources.size(); ++i) {
    if (!out.count(SourceId(i))) fill(SourceId(i));
  }
  return out;
}

OnlineDetector::OnlineDetector(const DetectionBackend& backend, Predicate predicate,
                               SnapshotPtr initial, std::vector<SourceId> perm_hint,
                               OnlineDetectionConfig config)
    : backend_(backend),
      predicate_(predicate),
      initial_(std::move(initial)),
      perm_hint_(std::move(perm_hint)),
      config_(config) {
  if (!initial_) throw Error("online detection needs an initial snapshot");
  const std::size_t l = initial_->width();
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<double> prior;
  for (const auto& [sig, cell] : initial_->cells) {
    double v = cell.effective_value();
    if (v <= 0.0) continue;
    cells_.push_back(sig);
    initial_values_.push_back(v);
    prior.push_back(v * config_.prior_ratio);
    std::vector<std::uint32_t> r;
    for (auto m : sig.members()) r.push_back(m.index);
    rows.push_back(std::move(r));
  }
  values_ = prior;
  cell_known_.assign(cells_.size(), 0);
  solver_ = std::make_unique<ScalingSolver>(l, std::move(rows), std::move(prior));

  cardinality_.resize(l);
  available_.resize(l);
  for (std::size_t i = 0; i < l; ++i) {
    cardinality_[i] = initial_->sources[i].cardinality * config_.prior_ratio;
    available_[i] = initial_->sources[i].available;
  }
  current_ = publish(Stage::initial);
}

bool OnlineDetector::done() const {
  return next_source_ >= perm_hint_.size() && in_substage_2_ && next_cell_ >= order_.size();
}

std::size_t OnlineDetector::next_step_queries() const {
  if (done()) return 0;
  if (next_source_ < perm_hint_.size()) return 1;
  return std::min(config_.batch_size, order_.size() - next_cell_);
}

void OnlineDetector::resolve() {
  const std::size_t l = cardinality_.size();
  std::vector<double> targets(cardinality_), scale(cardinality_);
  std::vector<char> hard(l, 0), active(cells_.size(), 0);
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    if (cell_known_[c]) {
      for (auto m : cells_[c].members()) targets[m.index] -= values_[c];
    } else {
      active[c] = 1;
    }
  }
  for (std::size_t r = 0; r < l; ++r) {
    hard[r] = detected_.count(SourceId(r)) ? 1 : 0;
    if (targets[r] < -config_.maxent.tolerance * std::max(scale[r], 1.0)) {
      std::ostringstream msg;
      msg << "query constraint for source " << r << " overshot by " << -targets[r]
          << "; clamped to 0";
      diagnostics_.push_back(msg.str());
    }
    targets[r] = std::max(0.0, targets[r]);
  }
  auto outcome = solver_->solve(targets, scale, hard, active, config_.maxent);
  if (!outcome.converged) {
    diagnostics_.push_back("maxent stopped at residual " + std::to_string(outcome.max_hard_residual));
  }
  auto v = solver_->values();
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    if (active[c]) values_[c] = v[c];
  }
}

void OnlineDetector::enter_substage_2() {
  in_substage_2_ = true;
  order_index_.resize(cells_.size());
  std::iota(order_index_.begin(), order_index_.end(), std::size_t{0});
  std::vector<double> gap(cells_.size());
  for (std::size_t c = 0; c < cells_.size(); ++c) gap[c] = std::abs(values_[c] - initial_values_[c]);
  std::stable_sort(order_index_.begin(), order_index_.end(),
                   [&](std::size_t a, std::size_t b) { return gap[a] > gap[b]; });
  order_.clear();
  for (auto idx : order_index_) order_.emplace_back(cells_[idx], gap[idx]);
}

SnapshotPtr OnlineDetector::step() {
  if (done()) return current_;
  if (next_source_ < perm_hint_.size()) {
    SourceId s = perm_hint_[next_source_++];
    ++detections_;
    if (available_[s.index]) {
      try {
        detected_[s] = backend_.count_source(s, predicate_);
      } catch (const SourceUnavailable& e) {
        available_[s.index] = 0;
        diagnostics_.push_back(e.what());
      }
    }
    auto est = online_scale_cardinalities(detected_, *initial_, perm_hint_, config_.prior_ratio);
    for (const auto& [src, v] : est) cardinality_[src.index] = available_[src.index] ? v : 0.0;
    resolve();
    if (next_source_ >= perm_hint_.size()) {
      enter_substage_2();
      current_ = publish(order_.empty() ? Stage::final : Stage::online_substage_1);
    } else {
      current_ = publish(Stage::online_substage_1);
    }
    return current_;
  }

  std::size_t batch = std::max<std::size_t>(1, config_.batch_size);
  for (std::size_t b = 0; b < batch && next_cell_ < order_.size(); ++b) {
    std::size_t idx = order_index_[next_cell_++];
    values_[idx] = backend_.count_cell(cells_[idx], predicate_);
    cell_known_[idx] = 1;
    ++detections_;
  }
  resolve();
  current_ = publish(next_cell_ >= order_.size() ? Stage::final : Stage::online_substage_2);
  return current_;
}

SnapshotPtr OnlineDetector::publish(Stage stage) {
  auto snap = std::make_shared<StatsSnapshot>();
  snap->version = initial_->version + (++version_);
  snap->stage = stage;
  snap->theta_sc = initial_->theta_sc;
  snap->sources = initial_->sources;
  for (std::size_t i = 0; i < snap->sources.size(); ++i) {
    auto& st = snap->sources[i];
    st.cardinality = cardinality_[i];
    st.detected = detected_.count(SourceId(i)) > 0;
    st.available = available_[i] != 0;
  }
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    snap->cells.emplace(cells_[c], LatticeCell{cells_[c], values_[c],
                                               cell_known_[c] ? Provenance::detected
                                                              : Provenance::maxent_estimated});
  }
  return snap;
}

std::vector<SnapshotPtr> online_detection(const DetectionBackend& backend, const QuerySpec& query,
                                          SnapshotPtr initial, std::vector<SourceId> perm_hint,
                                          const StopLatch& stop, OnlineDetectionConfig config) {
  OnlineDetector detector(backend, query.predicate, std::move(initial), std::move(perm_hint), config);
  std::vector<SnapshotPtr> stream{detector.current()};
  while (!detector.done() && !stop.raised()) stream.push_back(detector.step());
  return stream;
}

}  // namespace srcperm
