#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "qprobe/dynamics.hpp"
#include "qprobe/probe.hpp"

using namespace qprobe;

namespace {

QuantumState basis(int n, int i) { return QuantumState::Unit(n, i); }

Graph valid_graph(int n, double p, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_valid(n, p, rng);
}

double rel_err(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(HermitianEvolutionTest, SingleEdgeRabi) {
  const EffectiveHamiltonian h{Graph::path(2), 1.0, std::nullopt};
  const std::vector<double> times{0.1, 0.3, 0.5};
  const auto states = evolve_hermitian(h, basis(2, 0), times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    EXPECT_NEAR(occupation(states[k], 0), std::pow(std::cos(times[k]), 2), 1e-12);
    EXPECT_NEAR(occupation(states[k], 1), std::pow(std::sin(times[k]), 2), 1e-12);
  }
  EXPECT_NEAR(occupation(evolve_hermitian(h, basis(2, 0), std::vector<double>{0.5})[0], 0), 0.770151, 1e-6);
}

TEST(HermitianEvolutionTest, IdentityAtTimeZero) {
  const auto g = valid_graph(15, 0.4, 2);
  const EffectiveHamiltonian h{g, 1.0, std::nullopt};
  const auto psi0 = initial_state({0, 1, 2}, 15);
  const auto out = evolve_hermitian(h, psi0, std::vector<double>{0.0});
  EXPECT_EQ(out[0], psi0);
}

TEST(HermitianEvolutionTest, AgreesWithTaylorSeries) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = valid_graph(12, 0.5, s);
    const EffectiveHamiltonian h{g, 1.0, std::nullopt};
    const auto psi0 = initial_state({0, 1, 2, 3, 4}, 12);
    for (double t : {0.3, 0.05, 0.5}) {
      const auto exact = evolve_hermitian(h, psi0, std::vector<double>{t})[0];
      const auto series = oracle::taylor(h.matrix(), psi0, t, 40);
      EXPECT_LE((exact - series).norm(), 1e-10);
    }
  }
}

TEST(HermitianEvolutionTest, GammaScalesTime) {
  const auto g = valid_graph(10, 0.5, 4);
  const auto psi0 = initial_state({0, 1}, 10);
  const auto a = evolve_hermitian({g, 2.0, std::nullopt}, psi0, std::vector<double>{0.2})[0];
  const auto b = evolve_hermitian({g, 1.0, std::nullopt}, psi0, std::vector<double>{0.4})[0];
  EXPECT_LE((a - b).norm(), 1e-12);
}

TEST(HermitianEvolutionTest, Preconditions) {
  const EffectiveHamiltonian leaky{Graph::path(3), 1.0, Leak{2, 0.5}};
  EXPECT_THROW(evolve_hermitian(leaky, basis(3, 0), TimeGrid{}), ParameterError);
  const EffectiveHamiltonian h{Graph::path(3), 1.0, std::nullopt};
  EXPECT_THROW(evolve_hermitian(h, QuantumState::Ones(3), TimeGrid{}), ParameterError);
  EXPECT_THROW(evolve_hermitian(h, basis(4, 0), TimeGrid{}), ParameterError);
  EXPECT_THROW(evolve_hermitian(h, basis(3, 0), TimeGrid{0.0, 3}), ParameterError);
}

TEST(HermitianEvolutionTest, UnitarityOnDenseGraphs) {
  double worst = 0.0;
  const ProbeConfig cfg;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const EffectiveHamiltonian h{valid_graph(50, 0.6, s), 1.0, std::nullopt};
    for (const auto& psi : evolve_hermitian(h, initial_state(cfg.monitored, 50), cfg.grid))
      worst = std::max(worst, std::abs(psi.squaredNorm() - 1.0));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(NonHermitianEvolutionTest, ZeroLeakMatchesHermitian) {
  const auto g = valid_graph(20, 0.5, 6);
  const auto psi0 = initial_state({0, 1, 2, 3, 4}, 20);
  const EffectiveHamiltonian herm{g, 1.0, std::nullopt};
  const EffectiveHamiltonian leak0{g, 1.0, Leak{19, 0.0}};
  const TimeGrid grid{0.05, 10};
  const auto a = evolve_hermitian(herm, psi0, grid);
  const auto b = evolve_nonhermitian(leak0, psi0, grid);
  const auto c = evolve_nonhermitian(leak0, psi0, std::span<const double>(grid.times()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_LE((a[k] - b[k]).norm(), 1e-12);
    EXPECT_LE((a[k] - c[k]).norm(), 1e-12);
  }
}

TEST(NonHermitianEvolutionTest, StepDoublingOracle) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto g = valid_graph(10, 0.5, s);
    const EffectiveHamiltonian h{g, 1.0, Leak{9, 1.0}};
    const auto psi0 = initial_state({0, 1, 2, 3, 4}, 10);
    const auto ours = evolve_nonhermitian(h, psi0, std::vector<double>{0.5})[0];
    const auto ref = oracle::step_doubled(h.matrix(), psi0, 0.5, 4);
    EXPECT_LE(rel_err(ours, ref), 1e-10);
  }
}

TEST(NonHermitianEvolutionTest, NormLossMatchesIntegratedLeak) {
  // Single edge, leak on node 1, start on node 0:
  // |psi(t)|^2 = 1 - 2*Gamma * int_0^t |psi_1(s)|^2 ds.
  const double leak = 0.7, t = 0.2;
  const EffectiveHamiltonian h{Graph::path(2), 1.0, Leak{1, leak}};
  const int intervals = 400;
  std::vector<double> s;
  for (int i = 0; i <= intervals; ++i) s.push_back(t * i / intervals);
  const auto states = evolve_nonhermitian(h, basis(2, 0), s);
  std::vector<double> p1;
  for (const auto& psi : states) p1.push_back(occupation(psi, 1));
  const double integral = oracle::simpson(p1, t / intervals);
  EXPECT_NEAR(states.back().squaredNorm(), 1.0 - 2.0 * leak * integral, 1e-10);
  EXPECT_LT(states.back().squaredNorm(), 1.0);
}

TEST(NonHermitianEvolutionTest, NormIsMonotone) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto g = valid_graph(30, 0.5, s);
    const EffectiveHamiltonian h{g, 1.0, Leak{29, 0.1 + 0.1 * static_cast<double>(s)}};
    const auto states = evolve_nonhermitian(h, initial_state({0, 1, 2, 3, 4}, 30), TimeGrid{0.1, 30});
    double prev = 1.0;
    for (const auto& psi : states) {
      const double nrm = psi.squaredNorm();
      EXPECT_LE(nrm, prev + 1e-12);
      EXPECT_GT(nrm, 0.0);
      prev = nrm;
    }
  }
}

TEST(NonHermitianEvolutionTest, NormDecayDerivativeLaw) {
  const double h_step = 1e-4;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto g = valid_graph(10, 0.5, 100 + s);
    const double leak = 0.25 + 0.1 * static_cast<double>(s);
    const EffectiveHamiltonian h{g, 1.0, Leak{9, leak}};
    const auto psi0 = initial_state({0, 1, 2, 3, 4}, 10);
    const double t = 0.5;
    const auto st = evolve_nonhermitian(h, psi0, std::vector<double>{t - h_step, t, t + h_step});
    const double fd = (st[2].squaredNorm() - st[0].squaredNorm()) / (2.0 * h_step);
    const double law = -2.0 * leak * occupation(st[1], 9);
    EXPECT_LE(std::abs(fd - law), 1e-4 * std::abs(law)) << "seed " << s;
  }
}

TEST(NonHermitianEvolutionTest, NoDecayWithoutOverlap) {
  // Path 0-1-2, leak on the middle node; the antisymmetric state is a zero mode
  // with no weight on node 1.
  const EffectiveHamiltonian h{Graph::path(3), 1.0, Leak{1, 1.5}};
  QuantumState psi0 = QuantumState::Zero(3);
  psi0(0) = 1.0 / std::sqrt(2.0);
  psi0(2) = -1.0 / std::sqrt(2.0);
  for (const auto& psi : evolve_nonhermitian(h, psi0, TimeGrid{0.1, 20}))
    EXPECT_NEAR(psi.squaredNorm(), 1.0, 1e-10);
}

TEST(NonHermitianEvolutionTest, Preconditions) {
  EXPECT_THROW(evolve_nonhermitian({Graph::path(3), 1.0, Leak{3, 1.0}}, basis(3, 0), TimeGrid{}), ParameterError);
  EXPECT_THROW(evolve_nonhermitian({Graph::path(3), 1.0, Leak{1, -1.0}}, basis(3, 0), TimeGrid{}), ParameterError);
  EXPECT_THROW(evolve_nonhermitian({Graph::path(3), 0.0, Leak{1, 1.0}}, basis(3, 0), TimeGrid{}), ParameterError);
}

TEST(ShortTimeExpansionTest, FourthOrderErrorScalesAsTauFifth) {
  const auto g = valid_graph(8, 0.5, 21);
  const EffectiveHamiltonian h{g, 1.0, std::nullopt};
  const auto psi0 = initial_state({0, 1, 2}, 8);
  const double norm_a = Eigen::JacobiSVD<Eigen::MatrixXd>(g.adjacency()).singularValues()(0);
  std::vector<double> err;
  for (double tau : {0.1, 0.05, 0.025}) {
    const auto exact = evolve_hermitian(h, psi0, std::vector<double>{tau})[0];
    const auto approx = oracle::taylor(h.matrix(), psi0, tau, 4);
    err.push_back((exact - approx).norm());
    const double bound = std::pow(norm_a * tau, 5) / 120.0 * std::exp(norm_a * tau);
    EXPECT_LE(err.back(), bound);
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double ratio = err[i] / err[i + 1];
    EXPECT_GE(ratio, 32.0 / 2.0);
    EXPECT_LE(ratio, 32.0 * 2.0);
  }
}

TEST(OccupationTest, IndexChecks) {
  const auto psi = basis(3, 1);
  EXPECT_EQ(occupation(psi, 1), 1.0);
  EXPECT_THROW(occupation(psi, 3), ParameterError);
  EXPECT_THROW(occupation(psi, -1), ParameterError);
}

TEST(TimeGridTest, ShortTimeRegime) {
  TimeGrid g{0.05, 10};
  EXPECT_DOUBLE_EQ(g.tau(), 0.5);
  EXPECT_TRUE(g.is_short_time());
  EXPECT_FALSE((TimeGrid{0.2, 10}).is_short_time());
  EXPECT_EQ(g.times().size(), 10u);
  EXPECT_DOUBLE_EQ(g.times().front(), 0.05);
}
