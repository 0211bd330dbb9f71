#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace qprobe {

/// Monitored nodes, sampling grid and optional finite-shot budget.
struct ProbeConfig {
  std::vector<int> monitored{0, 1, 2, 3, 4};
  TimeGrid grid{0.05, 10};
  std::optional<std::int64_t> shots;  // empty: exact probabilities

  int m() const { return static_cast<int>(monitored.size()); }
  int feature_dim() const { return m() * grid.steps; }

  static ProbeConfig first_nodes(int m, int steps, double dt) {
    ProbeConfig cfg;
    cfg.monitored.clear();
    for (int i = 0; i < m; ++i) cfg.monitored.push_back(i);
    cfg.grid = TimeGrid{dt, steps};
    return cfg;
  }

  void validate() const {
    if (monitored.empty()) throw ParameterError("probe: monitored set is empty");
    std::set<int> seen;
    for (int i : monitored) {
      if (i < 0) throw ParameterError("probe: negative node index");
      if (!seen.insert(i).second) throw ParameterError("probe: duplicate monitored node " + std::to_string(i));
    }
    grid.validate();
    if (shots && *shots < 1) throw ParameterError("probe: shots must be positive");
  }

  void validate_for(const Graph& g) const {
    validate();
    for (int i : monitored)
      if (i >= g.n())
        throw ParameterError("probe: monitored node " + std::to_string(i) + " out of range for n=" +
                             std::to_string(g.n()));
  }
};

/// Time-major: (p_{s1}(t1), ..., p_{sM}(t1), ..., p_{s1}(tT), ..., p_{sM}(tT)).
using FeatureVector = std::vector<double>;

/// Equal real amplitude 1/sqrt(M) on every monitored node.
inline QuantumState initial_state(const std::vector<int>& monitored, int n) {
  if (monitored.empty()) throw ParameterError("initial_state: monitored set is empty");
  std::set<int> seen;
  QuantumState psi = QuantumState::Zero(n);
  const double amp = 1.0 / std::sqrt(static_cast<double>(monitored.size()));
  for (int i : monitored) {
    if (i < 0 || i >= n) throw ParameterError("initial_state: node " + std::to_string(i) + " out of range");
    if (!seen.insert(i).second) throw ParameterError("initial_state: duplicate node " + std::to_string(i));
    psi(i) = amp;
  }
  return psi;
}

/// Occupation of every node at every grid time (rows: times, cols: nodes).
inline Eigen::MatrixXd all_occupations(const EffectiveHamiltonian& h, const ProbeConfig& cfg) {
  cfg.validate_for(h.graph);
  const auto states = evolve(h, initial_state(cfg.monitored, h.graph.n()), cfg.grid);
  Eigen::MatrixXd occ(cfg.grid.steps, h.graph.n());
  for (int k = 0; k < cfg.grid.steps; ++k) occ.row(k) = states[static_cast<std::size_t>(k)].cwiseAbs2().transpose();
  return occ;
}

/// Replaces p by (successes in `shots` Bernoulli(p) trials)/shots; feature f
/// draws from its own stream derive_seed(seed, {f}).
inline void apply_shot_noise(FeatureVector& x, std::int64_t shots, std::uint64_t seed) {
  for (std::size_t f = 0; f < x.size(); ++f) {
    Rng rng = make_rng(derive_seed(seed, {f}));
    const double p = std::clamp(x[f], 0.0, 1.0);
    std::binomial_distribution<std::int64_t> draw(shots, p);
    x[f] = static_cast<double>(draw(rng)) / static_cast<double>(shots);
  }
}

/// Monitored occupations on the probe grid. `shot_seed` is required iff the
/// config asks for finite shots.
inline FeatureVector extract_features(const EffectiveHamiltonian& h, const ProbeConfig& cfg,
                                      std::optional<std::uint64_t> shot_seed = std::nullopt) {
  cfg.validate_for(h.graph);
  if (cfg.shots && !shot_seed) throw ParameterError("extract_features: shots requested without an rng seed");
  const auto states = evolve(h, initial_state(cfg.monitored, h.graph.n()), cfg.grid);
  FeatureVector x;
  x.reserve(static_cast<std::size_t>(cfg.feature_dim()));
  for (const auto& psi : states)
    for (int i : cfg.monitored) x.push_back(std::clamp(occupation(psi, i), 0.0, 1.0));
  if (cfg.shots) apply_shot_noise(x, *cfg.shots, *shot_seed);
  return x;
}

}  // namespace qprobe
