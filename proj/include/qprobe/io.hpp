#pragma once

#include <json.hpp>

#include <Eigen/Dense>

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "composition.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "graph.hpp"
#include "probe.hpp"
#include "readout.hpp"

// JSON persistence. Doubles are written in shortest round-trip form, so every
// value reads back bit-identical.

namespace qprobe {

using json = nlohmann::json;

inline json to_json(const Graph& g) {
  json edges = json::array();
  for (auto [i, j] : g.edges()) edges.push_back({i, j});
  return {{"n", g.n()}, {"edges", std::move(edges)}};
}

inline Graph graph_from_json(const json& j) {
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ParseError("graph: each edge must be a pair");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return Graph(j.at("n").get<int>(), std::move(edges));
}

inline json to_json(const ProbeConfig& p) {
  return {{"monitored", p.monitored},
          {"dt", p.grid.dt},
          {"steps", p.grid.steps},
          {"shots", p.shots ? json(*p.shots) : json(nullptr)}};
}

inline ProbeConfig probe_from_json(const json& j) {
  ProbeConfig p;
  p.monitored = j.at("monitored").get<std::vector<int>>();
  p.grid.dt = j.at("dt").get<double>();
  p.grid.steps = j.at("steps").get<int>();
  if (j.contains("shots") && !j.at("shots").is_null()) p.shots = j.at("shots").get<std::int64_t>();
  p.validate();
  return p;
}

inline json to_json(const TrainingPattern& p, const json& config = nullptr) {
  json out;
  if (p.graph)
    out["graph"] = to_json(*p.graph);
  else
    out["graph_ref"] = p.graph_hash;
  out["gamma_leak"] = p.gamma_leak ? json(*p.gamma_leak) : json(nullptr);
  out["features"] = p.features;
  out["target"] = p.target;
  out["task"] = std::string(to_string(p.task));
  out["cell"] = {{"n", p.cell.n}, {"p", p.cell.p}};
  out["index"] = p.index;
  if (!config.is_null()) out["config"] = config;
  return out;
}

inline TrainingPattern pattern_from_json(const json& j) {
  TrainingPattern p;
  if (j.contains("graph")) {
    p.graph = graph_from_json(j.at("graph"));
    p.graph_hash = p.graph->hash_hex();
  } else {
    p.graph_hash = j.at("graph_ref").get<std::string>();
  }
  if (j.contains("gamma_leak") && !j.at("gamma_leak").is_null()) p.gamma_leak = j.at("gamma_leak").get<double>();
  p.features = j.at("features").get<std::vector<double>>();
  p.target = j.at("target").get<double>();
  p.task = parse_observable(j.at("task").get<std::string>());
  p.cell.n = j.at("cell").at("n").get<int>();
  p.cell.p = j.at("cell").at("p").get<double>();
  p.cell.count = 1;
  p.index = j.at("index").get<std::size_t>();
  return p;
}

/// JSON lines, one pattern per line, each carrying `config`.
inline void write_dataset(std::ostream& os, const Dataset& data, const json& config = nullptr) {
  for (const auto& p : data) os << to_json(p, config).dump() << '\n';
}

struct LoadedDataset {
  Dataset patterns;
  json config;  // from the first line, null if absent
};

inline LoadedDataset read_dataset(std::istream& is, const std::string& name = "dataset") {
  LoadedDataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.patterns.push_back(pattern_from_json(j));
      if (out.patterns.size() == 1 && j.contains("config")) out.config = j.at("config");
      const auto& first = out.patterns.front();
      const auto& last = out.patterns.back();
      if (last.features.size() != first.features.size())
        throw ParseError("feature length " + std::to_string(last.features.size()) + " differs from first line (" +
                         std::to_string(first.features.size()) + ")");
      if (last.task != first.task) throw ParseError("task differs from first line");
    } catch (const json::exception& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.patterns.empty()) throw ParseError(name + ": no patterns");
  return out;
}

inline json to_json(const ReadoutModel& m, const ProbeConfig& probe, const json& config = nullptr) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json out{{"task", std::string(to_string(m.target))},
           {"weights", vec(m.weights)},
           {"bias", m.bias},
           {"lambda", m.lambda},
           {"feature_mean", vec(m.feature_mean)},
           {"feature_std", vec(m.feature_std)},
           {"probe", to_json(probe)}};
  if (!config.is_null()) out["config"] = config;
  return out;
}

struct LoadedModel {
  ReadoutModel model;
  ProbeConfig probe;
  json config;
};

inline LoadedModel model_from_json(const json& j) {
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    LoadedModel out;
    out.model.target = parse_observable(j.at("task").get<std::string>());
    out.model.weights = vec(j.at("weights"));
    out.model.bias = j.at("bias").get<double>();
    out.model.lambda = j.at("lambda").get<double>();
    out.model.feature_mean = vec(j.at("feature_mean"));
    out.model.feature_std = vec(j.at("feature_std"));
    out.probe = probe_from_json(j.at("probe"));
    if (j.contains("config")) out.config = j.at("config");
    const auto d = out.model.weights.size();
    if (out.model.feature_mean.size() != d || out.model.feature_std.size() != d)
      throw ParseError("model: weights, feature_mean and feature_std lengths differ");
    if (d != out.probe.feature_dim())
      throw ParseError("model: " + std::to_string(d) + " weights but probe yields " +
                       std::to_string(out.probe.feature_dim()) + " features");
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

inline json to_json(const Metrics& m) {
  return {{"mape", m.mape},
          {"pearson_r", std::isnan(m.pearson_r) ? json(nullptr) : json(m.pearson_r)},
          {"n_samples", m.n_samples}};
}

}  // namespace qprobe
