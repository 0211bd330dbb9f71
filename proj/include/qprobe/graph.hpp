#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace qprobe {

using Edge = std::pair<int, int>;
using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Undirected simple graph on nodes 0..n-1. Edges are stored once as (i,j) with
/// i<j, sorted lexicographically.
class Graph {
public:
  Graph() = default;

  Graph(int n, std::vector<Edge> edges) : n_(n), edges_(std::move(edges)) {
    if (n_ < 1) throw ParameterError("graph: node count must be positive");
    for (auto& [i, j] : edges_) {
      if (i < 0 || j < 0 || i >= n_ || j >= n_)
        throw ParameterError("graph: edge (" + std::to_string(i) + "," + std::to_string(j) +
                             ") out of range for n=" + std::to_string(n_));
      if (i == j) throw ParameterError("graph: self-loop on node " + std::to_string(i));
      if (i > j) std::swap(i, j);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  }

  int n() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  bool has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{i, j});
  }

  std::vector<int> degrees() const {
    std::vector<int> d(static_cast<std::size_t>(n_), 0);
    for (auto [i, j] : edges_) {
      ++d[static_cast<std::size_t>(i)];
      ++d[static_cast<std::size_t>(j)];
    }
    return d;
  }

  std::vector<std::vector<int>> neighbours() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_));
    for (auto [i, j] : edges_) {
      adj[static_cast<std::size_t>(i)].push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(i);
    }
    return adj;
  }

  Eigen::MatrixXd adjacency() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
    for (auto [i, j] : edges_) a(i, j) = a(j, i) = 1.0;
    return a;
  }

  IntMatrix integer_adjacency() const {
    IntMatrix a = IntMatrix::Zero(n_, n_);
    for (auto [i, j] : edges_) a(i, j) = a(j, i) = 1;
    return a;
  }

  static Graph complete(int n) {
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
    return Graph(n, std::move(e));
  }

  static Graph path(int n) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return Graph(n, std::move(e));
  }

  static Graph cycle(int n) {
    auto g = path(n);
    auto e = g.edges_;
    if (n > 2) e.emplace_back(0, n - 1);
    return Graph(n, std::move(e));
  }

  /// Star with centre 0.
  static Graph star(int n) {
    std::vector<Edge> e;
    for (int i = 1; i < n; ++i) e.emplace_back(0, i);
    return Graph(n, std::move(e));
  }

  /// FNV-1a over the canonical (n, sorted edges) encoding.
  std::uint64_t canonical_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    mix(static_cast<std::uint64_t>(n_));
    for (auto [i, j] : edges_) {
      mix(static_cast<std::uint64_t>(i));
      mix(static_cast<std::uint64_t>(j));
    }
    return h;
  }

  std::string hash_hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << canonical_hash();
    return os.str();
  }

  friend bool operator==(const Graph&, const Graph&) = default;

private:
  int n_ = 0;
  std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Ensembles

/// G(n,p): each unordered pair, in lexicographic order, is kept with probability p.
inline Graph gen_erdos_renyi(int n, double p, Rng& rng) {
  if (n < 2) throw ParameterError("erdos_renyi: n must be >= 2");
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("erdos_renyi: p must lie in (0,1)");
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (uniform01(rng) < p) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

/// Preferential attachment. Seeded with the complete graph on m_attach+1 nodes;
/// each later node attaches to m_attach distinct existing nodes chosen with
/// probability proportional to degree. Edge count is
/// m(m+1)/2 + m(n-m-1).
inline Graph gen_barabasi_albert(int n, int m_attach, Rng& rng) {
  if (m_attach < 1 || m_attach >= n)
    throw ParameterError("barabasi_albert: need 1 <= m_attach < n");
  std::vector<Edge> e;
  std::vector<int> stubs;  // node i appears deg(i) times
  for (int i = 0; i <= m_attach; ++i)
    for (int j = i + 1; j <= m_attach; ++j) {
      e.emplace_back(i, j);
      stubs.push_back(i);
      stubs.push_back(j);
    }
  for (int v = m_attach + 1; v < n; ++v) {
    std::vector<int> targets;
    while (static_cast<int>(targets.size()) < m_attach) {
      auto pick = stubs[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(stubs.size()))];
      if (std::find(targets.begin(), targets.end(), pick) == targets.end()) targets.push_back(pick);
    }
    for (int t : targets) {
      e.emplace_back(t, v);
      stubs.push_back(t);
      stubs.push_back(v);
    }
  }
  return Graph(n, std::move(e));
}

/// Small-world ring: each node joined to k_ring/2 neighbours per side, then every
/// lattice edge (i, i+j) has its far end rewired with probability p_rewire to a
/// uniformly chosen node that keeps the graph simple.
inline Graph gen_watts_strogatz(int n, int k_ring, double p_rewire, Rng& rng) {
  if (k_ring < 2 || k_ring % 2 != 0 || k_ring >= n)
    throw ParameterError("watts_strogatz: k_ring must be even with 2 <= k_ring < n");
  if (!(p_rewire >= 0.0 && p_rewire <= 1.0))
    throw ParameterError("watts_strogatz: p_rewire must lie in [0,1]");
  std::vector<std::vector<char>> adj(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  auto set = [&](int a, int b, char v) {
    adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = v;
    adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = v;
  };
  for (int i = 0; i < n; ++i)
    for (int j = 1; j <= k_ring / 2; ++j) set(i, (i + j) % n, 1);
  for (int j = 1; j <= k_ring / 2; ++j) {
    for (int i = 0; i < n; ++i) {
      int v = (i + j) % n;
      if (uniform01(rng) >= p_rewire) continue;
      int degree = 0;
      for (char c : adj[static_cast<std::size_t>(i)]) degree += c;
      if (degree >= n - 1) continue;
      int w = 0;
      do {
        w = static_cast<int>(uniform01(rng) * n);
      } while (w == i || adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(w)]);
      set(i, v, 0);
      set(i, w, 1);
    }
  }
  std::vector<Edge> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

/// Connected, which for n >= 2 also rules out isolated nodes.
inline bool is_valid(const Graph& g) {
  if (g.n() < 1) return false;
  auto adj = g.neighbours();
  std::vector<char> seen(static_cast<std::size_t>(g.n()), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == g.n();
}

inline constexpr int kDefaultMaxAttempts = 10000;

/// Draws G(n,p) until a connected graph appears.
inline Graph sample_valid(int n, double p, Rng& rng, int max_attempts = kDefaultMaxAttempts,
                          int* attempts_used = nullptr) {
  if (max_attempts < 1) throw ParameterError("sample_valid: max_attempts must be >= 1");
  for (int a = 1; a <= max_attempts; ++a) {
    auto g = gen_erdos_renyi(n, p, rng);
    if (is_valid(g)) {
      if (attempts_used) *attempts_used = a;
      return g;
    }
  }
  std::ostringstream os;
  os << "sample_valid: no connected G(" << n << "," << p << ") in " << max_attempts
     << " attempts; p is likely below the connectivity threshold ln(n)/n";
  throw EnsembleError(os.str());
}

// ---------------------------------------------------------------------------
// Observables

/// Exact Tr[A^k] for k in {2,3,4}:
///   Tr A^2 = sum_i d_i, Tr A^3 = sum_ij (A^2)_ij A_ij, Tr A^4 = sum_ij (A^2)_ij^2.
inline std::int64_t trace_power_exact(const Graph& g, int k) {
  if (k < 2 || k > 4) throw ParameterError("trace_power: k must be 2, 3 or 4");
  if (k == 2) return 2 * static_cast<std::int64_t>(g.edge_count());
  const IntMatrix a = g.integer_adjacency();
  const IntMatrix a2 = a * a;
  if (k == 3) return a2.cwiseProduct(a).sum();
  return a2.cwiseProduct(a2).sum();
}

inline double trace_power(const Graph& g, int k) { return static_cast<double>(trace_power_exact(g, k)); }

/// Tr[A_c^k] for the complete graph K_n (spectrum: n-1 once, -1 with multiplicity n-1).
inline double complete_graph_moment(int n, int k) {
  if (n < 2) throw ParameterError("complete_graph_moment: n must be >= 2");
  if (k < 2 || k > 4) throw ParameterError("complete_graph_moment: k must be 2, 3 or 4");
  const double m = n - 1;
  return std::pow(m, k) + m * ((k % 2 == 0) ? 1.0 : -1.0);
}

/// Fraction of nodes with degree strictly above mean + population std.
inline double hub_density(const Graph& g) {
  const auto d = g.degrees();
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double var = 0.0;
  for (int x : d) var += (x - mean) * (x - mean);
  const double threshold = mean + std::sqrt(var / n);
  const auto hubs = std::count_if(d.begin(), d.end(), [&](int x) { return x > threshold; });
  return static_cast<double>(hubs) / n;
}

inline Eigen::VectorXd adjacency_spectrum(const Graph& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.adjacency(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("adjacency_spectrum: eigensolver failed");
  return es.eigenvalues();  // ascending
}

/// |lambda_min / lambda_max| of A.
inline double spectral_ratio(const Graph& g) {
  if (g.edge_count() == 0) throw ParameterError("spectral_ratio: graph has no edges");
  const auto ev = adjacency_spectrum(g);
  return std::abs(ev(0) / ev(ev.size() - 1));
}

enum class ObservableKind { TrA2, TrA3, TrA4, HubDensity, NetworkSize, SpectralRatio, Gamma };

inline constexpr std::array<ObservableKind, 7> kAllObservables{
    ObservableKind::TrA2,        ObservableKind::TrA3,          ObservableKind::TrA4,
    ObservableKind::HubDensity,  ObservableKind::NetworkSize,   ObservableKind::SpectralRatio,
    ObservableKind::Gamma};

inline std::string_view to_string(ObservableKind k) {
  switch (k) {
    case ObservableKind::TrA2: return "trA2";
    case ObservableKind::TrA3: return "trA3";
    case ObservableKind::TrA4: return "trA4";
    case ObservableKind::HubDensity: return "hub";
    case ObservableKind::NetworkSize: return "size";
    case ObservableKind::SpectralRatio: return "ratio";
    case ObservableKind::Gamma: return "gamma";
  }
  return "?";
}

inline ObservableKind parse_observable(std::string_view s) {
  for (auto k : kAllObservables)
    if (to_string(k) == s) return k;
  throw ParameterError("unknown observable '" + std::string(s) +
                       "' (expected trA2, trA3, trA4, hub, size, ratio or gamma)");
}

/// Reference node count used to normalise NetworkSize targets.
inline constexpr double kNetworkSizeReference = 100.0;

/// Normalised regression target for a graph observable.
inline double observable(const Graph& g, ObservableKind kind) {
  switch (kind) {
    case ObservableKind::TrA2:
    case ObservableKind::TrA3:
    case ObservableKind::TrA4: {
      const int k = kind == ObservableKind::TrA2 ? 2 : kind == ObservableKind::TrA3 ? 3 : 4;
      return trace_power(g, k) / complete_graph_moment(g.n(), k);
    }
    case ObservableKind::HubDensity: return hub_density(g);
    case ObservableKind::NetworkSize: return g.n() / kNetworkSizeReference;
    case ObservableKind::SpectralRatio: return spectral_ratio(g);
    case ObservableKind::Gamma:
      throw ParameterError("observable: Gamma is a property of the leak, use the intrusion experiment");
  }
  throw ParameterError("observable: unknown kind");
}

}  // namespace qprobe
