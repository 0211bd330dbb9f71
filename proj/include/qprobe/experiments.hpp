#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "composition.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "probe.hpp"
#include "readout.hpp"
#include "rng.hpp"

namespace qprobe {

/// Runs fn(0..count-1) on up to `threads` workers. Work items must be
/// independent; the exception of the lowest failing index is rethrown.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace detail {

/// Rethrows the active library error with a provenance prefix, keeping its type.
[[noreturn]] inline void rethrow_annotated(const std::string& where) {
  try {
    throw;
  } catch (const EnsembleError& e) {
    throw EnsembleError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(where + ": " + e.what());
  } catch (const MetricError& e) {
    throw MetricError(where + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace detail

enum class Side : std::uint64_t { Train = 0, Test = 1 };

inline std::uint64_t side_seed(std::uint64_t master_seed, Side side) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(side)});
}

/// One (features, target) pair plus where it came from.
struct TrainingPattern {
  FeatureVector features;
  double target = 0.0;
  ObservableKind task = ObservableKind::TrA2;
  EnsembleCell cell;
  std::size_t index = 0;
  std::optional<Graph> graph;  // absent when patterns share one base graph
  std::string graph_hash;
  std::optional<double> gamma_leak;
};

using Dataset = std::vector<TrainingPattern>;

struct DatasetStats {
  std::size_t graphs = 0;
  std::size_t attempts = 0;

  double rejection_rate() const {
    return attempts == 0 ? 0.0 : 1.0 - static_cast<double>(graphs) / static_cast<double>(attempts);
  }
};

/// Draws every cell's graphs (rejection-sampled to connectivity) in
/// round-robin order and probes each one. Graph k of a cell uses the stream
/// derive_seed(seed, {cell, k}), so the result does not depend on `threads`.
inline Dataset build_dataset(const EnsembleSpec& spec, ObservableKind task, const ProbeConfig& probe,
                             std::uint64_t seed, int threads = 1, DatasetStats* stats = nullptr,
                             double gamma = 1.0) {
  if (task == ObservableKind::Gamma)
    throw ParameterError("build_dataset: the gamma task needs build_intrusion_dataset");
  probe.validate();
  const auto order = round_robin(spec);
  Dataset out(order.size());
  std::vector<int> attempts(order.size(), 0);
  parallel_for(order.size(), threads, [&](std::size_t k) {
    const auto slot = order[k];
    const auto& cell = spec.cells[slot.cell];
    try {
      Rng rng = make_rng(derive_seed(seed, {slot.cell, static_cast<std::uint64_t>(slot.within)}));
      Graph g = sample_valid(cell.n, cell.p, rng, kDefaultMaxAttempts, &attempts[k]);
      const EffectiveHamiltonian h{g, gamma, std::nullopt};
      std::optional<std::uint64_t> shot_seed;
      if (probe.shots) shot_seed = derive_seed(seed, {slot.cell, static_cast<std::uint64_t>(slot.within), 1});
      auto& pat = out[k];
      pat.features = extract_features(h, probe, shot_seed);
      pat.target = observable(g, task);
      pat.task = task;
      pat.cell = cell;
      pat.index = k;
      pat.graph_hash = g.hash_hex();
      pat.graph = std::move(g);
    } catch (const Error&) {
      std::ostringstream where;
      where << "pattern " << k << " (cell G(" << cell.n << "," << cell.p << ") draw " << slot.within << ")";
      detail::rethrow_annotated(where.str());
    }
  });
  if (stats) {
    stats->graphs = order.size();
    stats->attempts = 0;
    for (int a : attempts) stats->attempts += static_cast<std::size_t>(a);
  }
  return out;
}

inline Eigen::MatrixXd feature_matrix(const Dataset& data) {
  if (data.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(data.front().features.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), dim);
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (static_cast<Eigen::Index>(data[r].features.size()) != dim)
      throw ParameterError("feature_matrix: pattern " + std::to_string(r) + " has inconsistent feature length");
    x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(data[r].features.data(), dim);
  }
  return x;
}

inline Eigen::VectorXd target_vector(const Dataset& data) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t r = 0; r < data.size(); ++r) y(static_cast<Eigen::Index>(r)) = data[r].target;
  return y;
}

/// Gamma targets below this are left out of MAPE (they still count for r).
inline constexpr double kGammaMapeFloor = 1e-3;

/// MAPE and Pearson r for one split. r is NaN when undefined (constant vector).
inline Metrics task_metrics(ObservableKind task, std::span<const double> truth, std::span<const double> pred) {
  Metrics m;
  m.n_samples = truth.size();
  if (task == ObservableKind::Gamma) {
    std::vector<double> t, p;
    for (std::size_t k = 0; k < truth.size(); ++k)
      if (std::abs(truth[k]) >= kGammaMapeFloor) {
        t.push_back(truth[k]);
        p.push_back(pred[k]);
      }
    m.mape = mape(t, p);
  } else {
    m.mape = mape(truth, pred);
  }
  try {
    m.pearson_r = pearson(truth, pred);
  } catch (const MetricError&) {
    m.pearson_r = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

inline ReadoutModel fit_readout(const Dataset& train, ObservableKind task, std::optional<double> lambda) {
  const auto x = feature_matrix(train);
  const auto y = target_vector(train);
  return lambda ? fit_ridge(x, y, *lambda, task) : fit_ridge_cv(x, y, task);
}

/// One learning task: observable, training and test compositions, probe, lambda
/// (empty = 5-fold cross-validation) and the master seed.
struct TaskSpec {
  ObservableKind observable = ObservableKind::TrA2;
  EnsembleSpec train;
  EnsembleSpec test;
  ProbeConfig probe;
  std::optional<double> lambda = kDefaultLambda;
  std::uint64_t master_seed = 0;
  bool shared_seeds = false;  // degenerate: test stream = train stream
  int threads = 1;
};

struct TaskReport {
  ObservableKind task = ObservableKind::TrA2;
  Metrics train;
  Metrics test;
  ReadoutModel model;
  std::vector<double> train_truth, train_pred, test_truth, test_pred;
  std::vector<EnsembleCell> test_cells;
  bool disjoint = true;
  double seconds = 0.0;
};

inline std::vector<double> predict_all(const ReadoutModel& model, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& p : data) out.push_back(predict(model, p.features));
  return out;
}

inline std::vector<double> targets_of(const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& p : data) out.push_back(p.target);
  return out;
}

/// Fits on the training split only, evaluates on both.
inline TaskReport evaluate_split(ObservableKind task, const Dataset& train, const Dataset& test,
                                 std::optional<double> lambda) {
  TaskReport rep;
  rep.task = task;
  rep.model = fit_readout(train, task, lambda);
  rep.train_truth = targets_of(train);
  rep.test_truth = targets_of(test);
  rep.train_pred = predict_all(rep.model, train);
  rep.test_pred = predict_all(rep.model, test);
  rep.train = task_metrics(task, rep.train_truth, rep.train_pred);
  rep.test = task_metrics(task, rep.test_truth, rep.test_pred);
  for (const auto& p : test) rep.test_cells.push_back(p.cell);
  return rep;
}

inline bool splits_disjoint(const Dataset& a, const Dataset& b) {
  std::unordered_set<std::string> seen;
  for (const auto& p : a) seen.insert(p.graph_hash);
  return std::none_of(b.begin(), b.end(), [&](const auto& p) { return seen.contains(p.graph_hash); });
}

inline TaskReport run_task(const TaskSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  const auto train_seed = side_seed(spec.master_seed, Side::Train);
  const auto test_seed = spec.shared_seeds ? train_seed : side_seed(spec.master_seed, Side::Test);
  const auto train = build_dataset(spec.train, spec.observable, spec.probe, train_seed, spec.threads);
  const auto test = build_dataset(spec.test, spec.observable, spec.probe, test_seed, spec.threads);
  const bool disjoint = splits_disjoint(train, test);
  if (!disjoint && !spec.shared_seeds)
    throw EnsembleError("run_task: a graph appears in both the training and the test split");
  auto rep = evaluate_split(spec.observable, train, test, spec.lambda);
  rep.disjoint = disjoint;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Intrusion: one fixed base graph, an imaginary self-loop of random strength.

struct IntrusionSpec {
  int n = 100;
  double p = 0.5;
  int alpha = 99;
  double gamma = 1.0;
  double max_leak = 2.0;  // Gamma ~ U[0, max_leak * gamma]
  int n_train = 360;
  int n_test = 40;
  ProbeConfig probe;
  std::optional<double> lambda = kDefaultLambda;
  std::uint64_t master_seed = 0;
  int threads = 1;
};

struct IntrusionDataset {
  Graph base;
  Dataset train;
  Dataset test;
};

inline constexpr std::uint64_t kIntrusionBaseStream = 2;

/// Base graph: the first connected G(n,p) on the intrusion stream.
inline Graph intrusion_base_graph(const IntrusionSpec& spec) {
  Rng rng = make_rng(derive_seed(spec.master_seed, {kIntrusionBaseStream}));
  return sample_valid(spec.n, spec.p, rng);
}

/// Probes the base graph with leak strength `leak` at `alpha`; target Gamma/gamma.
inline TrainingPattern intrusion_pattern(const Graph& base, const IntrusionSpec& spec, double leak, std::size_t index,
                                         std::optional<std::uint64_t> shot_seed = std::nullopt) {
  const EffectiveHamiltonian h{base, spec.gamma, Leak{spec.alpha, leak}};
  TrainingPattern pat;
  pat.features = extract_features(h, spec.probe, shot_seed);
  pat.target = leak / spec.gamma;
  pat.task = ObservableKind::Gamma;
  pat.cell = EnsembleCell{spec.n, spec.p, 1};
  pat.index = index;
  pat.graph_hash = base.hash_hex();
  pat.gamma_leak = leak;
  return pat;
}

inline IntrusionDataset build_intrusion_dataset(const IntrusionSpec& spec) {
  spec.probe.validate();
  if (spec.alpha < 0 || spec.alpha >= spec.n)
    throw ParameterError("intrusion: alpha " + std::to_string(spec.alpha) + " out of range");
  if (std::find(spec.probe.monitored.begin(), spec.probe.monitored.end(), spec.alpha) != spec.probe.monitored.end())
    throw ParameterError("intrusion: leak node " + std::to_string(spec.alpha) + " must not be monitored");
  if (spec.n_train < 1 || spec.n_test < 1) throw ParameterError("intrusion: split sizes must be positive");
  if (!(spec.max_leak >= 0.0)) throw ParameterError("intrusion: max_leak must be >= 0");

  IntrusionDataset ds;
  ds.base = intrusion_base_graph(spec);
  auto build = [&](Side side, int count) {
    const auto seed = side_seed(spec.master_seed, side);
    Dataset out(static_cast<std::size_t>(count));
    parallel_for(out.size(), spec.threads, [&](std::size_t k) {
      try {
        Rng rng = make_rng(derive_seed(seed, {k}));
        const double leak = uniform01(rng) * spec.max_leak * spec.gamma;
        std::optional<std::uint64_t> shot_seed;
        if (spec.probe.shots) shot_seed = derive_seed(seed, {k, 1});
        out[k] = intrusion_pattern(ds.base, spec, leak, k, shot_seed);
      } catch (const Error&) {
        detail::rethrow_annotated("intrusion pattern " + std::to_string(k));
      }
    });
    return out;
  };
  ds.train = build(Side::Train, spec.n_train);
  ds.test = build(Side::Test, spec.n_test);
  return ds;
}

inline TaskReport run_intrusion(const IntrusionSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  const auto ds = build_intrusion_dataset(spec);
  auto rep = evaluate_split(ObservableKind::Gamma, ds.train, ds.test, spec.lambda);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Benchmark table: published reference values per row

struct Table1Entry {
  int row_id = 0;
  ObservableKind task = ObservableKind::TrA2;
  const char* train = "";
  const char* test = "";
  double ref_train_mape = 0.0;
  double ref_test_mape = 0.0;
  std::optional<double> ref_train_r;
  std::optional<double> ref_test_r;
};

inline const std::vector<Table1Entry>& table1_entries() {
  using K = ObservableKind;
  static const char* mix50tr = "90xG(50,p=0.2|0.4|0.6|0.8)";
  static const char* mix50te = "10xG(50,p=0.2|0.4|0.6|0.8)";
  static const std::vector<Table1Entry> rows{
      {1, K::TrA2, "150xG(50,0.6)", "50xG(50,0.6)", 0.88, 1.25, {}, {}},
      {2, K::TrA2, "350xG(50,0.6)", "50xG(50,0.6)", 1.05, 1.16, {}, {}},
      {3, K::TrA2, mix50tr, mix50te, 5.63, 6.04, {}, {}},
      {4, K::TrA3, "150xG(50,0.6)", "50xG(50,0.6)", 2.83, 3.75, {}, {}},
      {5, K::TrA3, "350xG(50,0.6)", "50xG(50,0.6)", 3.19, 3.86, {}, {}},
      {6, K::TrA3, mix50tr, mix50te, 33.53, 34.97, 0.99484, 0.99485},
      {7, K::TrA4, "150xG(50,0.6)", "50xG(50,0.6)", 3.46, 4.79, {}, {}},
      {8, K::TrA4, "350xG(50,0.6)", "50xG(50,0.6)", 3.98, 4.66, {}, {}},
      {9, K::TrA4, mix50tr, mix50te, 54.44, 59.19, 0.99535, 0.99569},
      {10, K::HubDensity, "360xG(100,0.5)", "40xG(100,0.5)", 9.55, 8.88, {}, {}},
      {11, K::HubDensity, "90xG(100,p=0.2|0.4|0.6|0.8)", "10xG(100,p=0.2|0.4|0.6|0.8)", 12.01, 10.34, {}, {}},
      {12, K::NetworkSize, "90xG(n=20|40|60|80,0.5)", "10xG(n=20|40|60|80,0.5)", 7.05, 7.88, {}, {}},
      {13, K::SpectralRatio, mix50tr, mix50te, 7.9, 8.22, {}, {}},
      {14, K::Gamma, "360xGamma(100,0.5)", "40xGamma(100,0.5)", 13.53, 2.14, 0.99867, 0.99913},
  };
  return rows;
}

struct Table1Options {
  ProbeConfig probe;
  std::optional<double> lambda = kDefaultLambda;
  int threads = 1;
};

struct Table1Result {
  Table1Entry entry;
  TaskReport report;
};

inline std::uint64_t table1_row_seed(std::uint64_t master_seed, int row_id) {
  return derive_seed(master_seed, {100, static_cast<std::uint64_t>(row_id)});
}

inline TaskReport run_table1_row(const Table1Entry& e, std::uint64_t master_seed, const Table1Options& opt) {
  try {
    if (e.task == ObservableKind::Gamma) {
      IntrusionSpec spec;
      spec.probe = opt.probe;
      spec.lambda = opt.lambda;
      spec.threads = opt.threads;
      spec.master_seed = table1_row_seed(master_seed, e.row_id);
      return run_intrusion(spec);
    }
    TaskSpec spec;
    spec.observable = e.task;
    spec.train = parse_composition(e.train);
    spec.test = parse_composition(e.test);
    spec.probe = opt.probe;
    spec.lambda = opt.lambda;
    spec.threads = opt.threads;
    spec.master_seed = table1_row_seed(master_seed, e.row_id);
    return run_task(spec);
  } catch (const Error&) {
    detail::rethrow_annotated("table row " + std::to_string(e.row_id) + " (" + std::string(to_string(e.task)) + ")");
  }
}

inline std::vector<Table1Result> reproduce_table1(std::uint64_t master_seed, const Table1Options& opt = {}) {
  std::vector<Table1Result> out;
  for (const auto& e : table1_entries()) out.push_back({e, run_table1_row(e, master_seed, opt)});
  return out;
}

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt17(const std::optional<double>& v) { return v ? fmt17(*v) : std::string{}; }

}  // namespace detail

/// CSV report; `preamble` lines are emitted first, each prefixed with "# ".
inline std::string render_table1_csv(const std::vector<Table1Result>& rows,
                                     const std::vector<std::string>& preamble = {}) {
  std::ostringstream os;
  for (const auto& line : preamble) os << "# " << line << "\n";
  os << "task,row_id,train_mape,test_mape,train_r,test_r,ref_train_mape,ref_test_mape\n";
  for (const auto& r : rows) {
    os << to_string(r.entry.task) << ',' << r.entry.row_id << ',' << detail::fmt17(r.report.train.mape) << ','
       << detail::fmt17(r.report.test.mape) << ',' << detail::fmt17(r.report.train.pearson_r) << ','
       << detail::fmt17(r.report.test.pearson_r) << ',' << detail::fmt17(r.entry.ref_train_mape) << ','
       << detail::fmt17(r.entry.ref_test_mape) << "\n";
  }
  return os.str();
}

inline std::string render_table1_text(const std::vector<Table1Result>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-3s %-6s %-30s %-30s %17s %17s %21s\n", "row", "task", "train", "test",
                "MAPE TrS (ref)", "MAPE TS (ref)", "r TrS | TS");
  os << line;
  for (const auto& r : rows) {
    char tr[32], te[32], rr[48];
    std::snprintf(tr, sizeof tr, "%6.2f%% (%.2f%%)", r.report.train.mape, r.entry.ref_train_mape);
    std::snprintf(te, sizeof te, "%6.2f%% (%.2f%%)", r.report.test.mape, r.entry.ref_test_mape);
    std::snprintf(rr, sizeof rr, "%.5f | %.5f", r.report.train.pearson_r, r.report.test.pearson_r);
    std::snprintf(line, sizeof line, "%-3d %-6s %-30s %-30s %17s %17s %21s\n", r.entry.row_id,
                  std::string(to_string(r.entry.task)).c_str(), r.entry.train, r.entry.test, tr, te, rr);
    os << line;
  }
  return os.str();
}

}  // namespace qprobe
