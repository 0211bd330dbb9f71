#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"

// Units: hbar = 1 throughout, so exp(-i H t) with H = gamma*A and t measured in
// units of hbar/gamma when gamma = 1.

namespace qprobe {

using cplx = std::complex<double>;
using QuantumState = Eigen::VectorXcd;

/// Uniform grid t_k = k*dt, k = 1..steps.
struct TimeGrid {
  double dt = 0.05;
  int steps = 10;

  double time(int k) const { return k * dt; }

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(steps));
    for (int k = 1; k <= steps; ++k) t.push_back(time(k));
    return t;
  }

  /// Dimensionless total probing time gamma*t_T/hbar.
  double tau(double gamma = 1.0) const { return gamma * time(steps); }
  bool is_short_time(double gamma = 1.0) const { return tau(gamma) < 1.0; }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("time grid: dt must be positive");
    if (steps < 1) throw ParameterError("time grid: steps must be >= 1");
  }
};

/// Imaginary self-loop -i*strength*|alpha><alpha|.
struct Leak {
  int alpha = 0;
  double strength = 0.0;  // Gamma, same units as gamma
};

struct EffectiveHamiltonian {
  Graph graph;
  double gamma = 1.0;
  std::optional<Leak> leak;

  bool is_hermitian() const { return !leak.has_value(); }

  void validate() const {
    if (!(gamma > 0.0)) throw ParameterError("hamiltonian: gamma must be positive");
    if (leak) {
      if (leak->alpha < 0 || leak->alpha >= graph.n())
        throw ParameterError("hamiltonian: leak node " + std::to_string(leak->alpha) + " out of range");
      if (!(leak->strength >= 0.0) || !std::isfinite(leak->strength))
        throw ParameterError("hamiltonian: leak strength must be finite and >= 0");
    }
  }

  Eigen::MatrixXcd matrix() const {
    Eigen::MatrixXcd h = (gamma * graph.adjacency()).cast<cplx>();
    if (leak) h(leak->alpha, leak->alpha) -= cplx(0.0, leak->strength);
    return h;
  }
};

namespace detail {

inline void require_normalised(const QuantumState& psi0, int n) {
  if (psi0.size() != n)
    throw ParameterError("evolve: state has dimension " + std::to_string(psi0.size()) + ", graph has " +
                         std::to_string(n) + " nodes");
  if (std::abs(psi0.squaredNorm() - 1.0) > 1e-10) throw ParameterError("evolve: initial state is not normalised");
}

inline void require_finite(const Eigen::MatrixXcd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite entries in propagator");
}

}  // namespace detail

/// exp(-i*gamma*t*A) via one eigendecomposition A = V diag(lambda) V^T, reused
/// for every requested time.
class HermitianPropagator {
public:
  explicit HermitianPropagator(const EffectiveHamiltonian& h) : gamma_(h.gamma), n_(h.graph.n()) {
    h.validate();
    if (!h.is_hermitian()) throw ParameterError("HermitianPropagator: hamiltonian carries a leak");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.graph.adjacency());
    if (es.info() != Eigen::Success) throw NumericalError("HermitianPropagator: eigendecomposition failed");
    vectors_ = es.eigenvectors();
    values_ = es.eigenvalues();
  }

  const Eigen::VectorXd& eigenvalues() const { return values_; }

  QuantumState apply(const QuantumState& psi0, double t) const {
    if (t == 0.0) return psi0;
    const Eigen::VectorXcd coeff = vectors_.transpose().cast<cplx>() * psi0;
    Eigen::VectorXcd phased(coeff.size());
    for (Eigen::Index j = 0; j < coeff.size(); ++j)
      phased(j) = std::polar(1.0, -gamma_ * t * values_(j)) * coeff(j);
    return vectors_.cast<cplx>() * phased;
  }

  int n() const { return n_; }

private:
  double gamma_;
  int n_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd values_;
};

/// Dense exp(-i*H*t) by scaling and squaring with a Pade approximant.
inline Eigen::MatrixXcd propagator(const EffectiveHamiltonian& h, double t) {
  h.validate();
  const Eigen::MatrixXcd m = (cplx(0.0, -t) * h.matrix()).eval();
  Eigen::MatrixXcd u = m.exp();
  detail::require_finite(u, "propagator");
  return u;
}

inline std::vector<QuantumState> evolve_hermitian(const EffectiveHamiltonian& h, const QuantumState& psi0,
                                                  std::span<const double> times) {
  if (!h.is_hermitian()) throw ParameterError("evolve_hermitian: hamiltonian carries a leak");
  detail::require_normalised(psi0, h.graph.n());
  HermitianPropagator u(h);
  std::vector<QuantumState> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(u.apply(psi0, t));
  return out;
}

inline std::vector<QuantumState> evolve_hermitian(const EffectiveHamiltonian& h, const QuantumState& psi0,
                                                  const TimeGrid& grid) {
  grid.validate();
  const auto t = grid.times();
  return evolve_hermitian(h, psi0, std::span<const double>(t));
}

/// Arbitrary times: one matrix exponential per time.
inline std::vector<QuantumState> evolve_nonhermitian(const EffectiveHamiltonian& h, const QuantumState& psi0,
                                                     std::span<const double> times) {
  detail::require_normalised(psi0, h.graph.n());
  std::vector<QuantumState> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back(psi0);
      continue;
    }
    out.push_back(propagator(h, t) * psi0);
  }
  return out;
}

/// Uniform grid: psi(t_k) = U(dt)^k psi0 with a single exponential.
inline std::vector<QuantumState> evolve_nonhermitian(const EffectiveHamiltonian& h, const QuantumState& psi0,
                                                     const TimeGrid& grid) {
  grid.validate();
  detail::require_normalised(psi0, h.graph.n());
  const Eigen::MatrixXcd step = propagator(h, grid.dt);
  std::vector<QuantumState> out;
  out.reserve(static_cast<std::size_t>(grid.steps));
  QuantumState psi = psi0;
  for (int k = 1; k <= grid.steps; ++k) {
    psi = step * psi;
    out.push_back(psi);
  }
  return out;
}

/// Dispatches on the presence of a leak.
inline std::vector<QuantumState> evolve(const EffectiveHamiltonian& h, const QuantumState& psi0,
                                        const TimeGrid& grid) {
  return h.is_hermitian() ? evolve_hermitian(h, psi0, grid) : evolve_nonhermitian(h, psi0, grid);
}

inline double occupation(const QuantumState& psi, int i) {
  if (i < 0 || i >= psi.size())
    throw ParameterError("occupation: node " + std::to_string(i) + " out of range");
  return std::norm(psi(i));
}

}  // namespace qprobe
