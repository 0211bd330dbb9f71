#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "composition.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "probe.hpp"
#include "readout.hpp"

// Command-line front end. Exit codes: 0 success, 1 runtime or data error,
// 2 usage error.

namespace qprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Thrown for bad flag values discovered after CLI11 parsing.
class UsageError : public Error {
public:
  using Error::Error;
};

/// Reads a flat "key = value" file (blank lines and '#' comments ignored) into
/// "--key value" tokens.
inline std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto sv = detail::trim(line);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    auto key = std::string(detail::trim(sv.substr(0, eq)));
    auto value = std::string(detail::trim(sv.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key == "o") {
      args.push_back("-o");
    } else {
      args.push_back("--" + key);
    }
    args.push_back(value);
  }
  return args;
}

/// Inverse of an artifact's embedded "config" object: the command followed by
/// its flags.
inline std::vector<std::string> args_from_config(const json& config) {
  std::vector<std::string> args{config.at("command").get<std::string>()};
  for (const char* positional : {"model", "data"})
    if (config.contains(positional)) args.push_back(config.at(positional).get<std::string>());
  for (const auto& [key, value] : config.items()) {
    if (key == "command" || key == "model" || key == "data" || key == "dataset_config" || value.is_null()) continue;
    args.push_back(key == "o" ? "-o" : "--" + key);
    args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  return args;
}

struct ProbeFlags {
  int m = 5;
  int t = 10;
  double dt = 0.05;
  std::int64_t shots = 0;  // 0: exact

  void add_to(CLI::App& app) {
    app.add_option("--probe-m", m, "number of monitored nodes (first labels)")->check(CLI::PositiveNumber);
    app.add_option("--probe-t", t, "number of sampling times")->check(CLI::PositiveNumber);
    app.add_option("--probe-dt", dt, "time step in units of hbar/gamma")->check(CLI::PositiveNumber);
    app.add_option("--shots", shots, "measurement shots per feature (0 = exact probabilities)")
        ->check(CLI::NonNegativeNumber);
  }

  ProbeConfig config() const {
    auto p = ProbeConfig::first_nodes(m, t, dt);
    if (shots > 0) p.shots = shots;
    return p;
  }

  void embed(json& c) const {
    c["probe-m"] = m;
    c["probe-t"] = t;
    c["probe-dt"] = dt;
    c["shots"] = shots;
  }
};

inline std::optional<double> parse_lambda(const std::string& s) {
  if (s == "cv") return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !(v >= 0.0)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("--lambda must be a non-negative number or 'cv', got '" + s + "'");
  }
}

inline void warn_if_long_time(const ProbeConfig& p, std::ostream& err) {
  if (!p.grid.is_short_time())
    err << "warning: total probing time tau = " << p.grid.tau() << " >= 1 leaves the short-time regime\n";
}

inline void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream out(fp, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json metrics_json(const Metrics& m) { return to_json(m); }

/// Entry point shared by the executable and the tests.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local quantum probing of graph topology", "qprobe"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all");

  std::uint64_t seed = 0;
  int threads = 1;
  std::string output;
  std::string lambda_text = "1e-06";
  std::string config_path;  // consumed before parsing

  // gen
  auto* gen = app.add_subcommand("gen", "generate a JSON-lines dataset");
  std::string gen_task, gen_train, gen_test;
  ProbeFlags gen_probe;
  gen->add_option("--task", gen_task, "trA2|trA3|trA4|hub|size|ratio")->required();
  auto* gen_train_opt = gen->add_option("--train", gen_train, "composition drawn on the training stream");
  auto* gen_test_opt = gen->add_option("--test", gen_test, "composition drawn on the test stream");
  gen_train_opt->excludes(gen_test_opt);
  gen_probe.add_to(*gen);
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--threads", threads)->check(CLI::PositiveNumber);
  gen->add_option("-o,--output", output, "dataset file")->required();

  // train
  auto* train = app.add_subcommand("train", "fit a ridge readout on a dataset");
  std::string train_data;
  train->add_option("data", train_data, "dataset file")->required();
  train->add_option("--lambda", lambda_text, "ridge parameter or 'cv'");
  train->add_option("-o,--output", output, "model file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a model on a dataset");
  std::string eval_model, eval_data;
  eval->add_option("model", eval_model, "model file")->required();
  eval->add_option("data", eval_data, "dataset file")->required();
  eval->add_option("-o,--output", output, "metrics file");

  // table1
  auto* table1 = app.add_subcommand("table1", "run every benchmark row and compare with the reference values");
  ProbeFlags t1_probe;
  t1_probe.add_to(*table1);
  table1->add_option("--seed", seed, "master seed");
  table1->add_option("--lambda", lambda_text, "ridge parameter or 'cv'");
  table1->add_option("--threads", threads)->check(CLI::PositiveNumber);
  table1->add_option("-o,--output", output, "output directory")->required();

  // intrude
  auto* intrude = app.add_subcommand("intrude", "infer the leak strength of a non-Hermitian intrusion");
  ProbeFlags in_probe;
  IntrusionSpec in_spec;
  in_probe.add_to(*intrude);
  intrude->add_option("--n", in_spec.n, "base graph size")->check(CLI::Range(2, 100000));
  intrude->add_option("--p", in_spec.p, "base graph edge probability")->check(CLI::Range(0.0, 1.0));
  intrude->add_option("--alpha", in_spec.alpha, "leak node (not monitored)")->check(CLI::NonNegativeNumber);
  intrude->add_option("--max-leak", in_spec.max_leak, "Gamma drawn uniformly in [0, max-leak * gamma]")
      ->check(CLI::NonNegativeNumber);
  intrude->add_option("--n-train", in_spec.n_train)->check(CLI::PositiveNumber);
  intrude->add_option("--n-test", in_spec.n_test)->check(CLI::PositiveNumber);
  intrude->add_option("--seed", seed, "master seed");
  intrude->add_option("--lambda", lambda_text, "ridge parameter or 'cv'");
  intrude->add_option("--threads", threads)->check(CLI::PositiveNumber);
  intrude->add_option("-o,--output", output, "output directory")->required();

  for (auto* sub : {gen, train, eval, table1, intrude})
    sub->add_option("--config", config_path, "flat key = value file; command-line flags take precedence");

  try {
    // Config-file values go right after the subcommand so explicit flags, which
    // follow, win under TakeLast.
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") {
        auto extra = config_file_args(args[i + 1]);
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        if (!args.empty()) args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    // Flag values that need domain parsing.
    std::optional<double> lambda;
    ObservableKind task{};
    EnsembleSpec composition;
    try {
      lambda = parse_lambda(lambda_text);
      if (gen->parsed()) {
        task = parse_observable(gen_task);
        if (task == ObservableKind::Gamma) throw UsageError("gen: the gamma task is produced by 'intrude'");
        if (gen_train.empty() == gen_test.empty()) throw UsageError("gen: give exactly one of --train or --test");
        composition = parse_composition(gen_train.empty() ? gen_test : gen_train);
        gen_probe.config().validate();
      }
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }

    if (gen->parsed()) {
      const auto probe = gen_probe.config();
      warn_if_long_time(probe, err);
      json config{{"command", "gen"}, {"task", gen_task}, {"seed", seed}};
      if (!gen_train.empty()) config["train"] = gen_train;
      if (!gen_test.empty()) config["test"] = gen_test;
      gen_probe.embed(config);
      const auto side = gen_train.empty() ? Side::Test : Side::Train;
      DatasetStats stats;
      const auto data = build_dataset(composition, task, probe, side_seed(seed, side), threads, &stats);
      std::ostringstream os;
      write_dataset(os, data, config);
      write_file(output, os.str());
      const json summary{{"patterns", data.size()},
                         {"feature_dim", probe.feature_dim()},
                         {"graphs_drawn", stats.attempts},
                         {"rejection_rate", stats.rejection_rate()},
                         {"output", output}};
      out << summary.dump() << "\n";
      return kExitOk;
    }

    if (train->parsed()) {
      std::ifstream in(train_data);
      if (!in) throw Error("cannot open '" + train_data + "'");
      const auto ds = read_dataset(in, train_data);
      const auto kind = ds.patterns.front().task;
      const auto model = fit_readout(ds.patterns, kind, lambda);
      ProbeConfig probe;
      if (!ds.config.is_null() && ds.config.contains("probe-m")) {
        probe = ProbeConfig::first_nodes(ds.config.at("probe-m").get<int>(), ds.config.at("probe-t").get<int>(),
                                         ds.config.at("probe-dt").get<double>());
        const auto shots = ds.config.value("shots", std::int64_t{0});
        if (shots > 0) probe.shots = shots;
      } else {
        throw ParseError(train_data + ": dataset carries no probe configuration");
      }
      if (probe.feature_dim() != model.dim())
        throw ParameterError("train: dataset features have length " + std::to_string(model.dim()) +
                             " but the embedded probe yields " + std::to_string(probe.feature_dim()));
      json config{{"command", "train"}, {"data", train_data}, {"lambda", lambda_text}, {"o", output},
                  {"dataset_config", ds.config}};
      write_file(output, to_json(model, probe, config).dump(2) + "\n");
      const auto truth = targets_of(ds.patterns);
      const auto pred = predict_all(model, ds.patterns);
      json report{{"task", std::string(to_string(kind))},
                  {"lambda", model.lambda},
                  {"train", metrics_json(task_metrics(kind, truth, pred))},
                  {"config", config}};
      out << report.dump() << "\n";
      return kExitOk;
    }

    if (eval->parsed()) {
      const auto loaded = model_from_json(json::parse(read_file(eval_model), nullptr, true));
      std::ifstream in(eval_data);
      if (!in) throw Error("cannot open '" + eval_data + "'");
      const auto ds = read_dataset(in, eval_data);
      if (ds.patterns.front().task != loaded.model.target)
        throw ParameterError("eval: model predicts '" + std::string(to_string(loaded.model.target)) +
                             "' but dataset holds '" + std::string(to_string(ds.patterns.front().task)) + "'");
      const auto truth = targets_of(ds.patterns);
      const auto pred = predict_all(loaded.model, ds.patterns);
      json config{{"command", "eval"}, {"model", eval_model}, {"data", eval_data}};
      if (!output.empty()) config["o"] = output;
      json report{{"task", std::string(to_string(loaded.model.target))},
                  {"metrics", metrics_json(task_metrics(loaded.model.target, truth, pred))},
                  {"config", config}};
      if (!output.empty()) write_file(output, report.dump(2) + "\n");
      out << report.dump() << "\n";
      return kExitOk;
    }

    if (table1->parsed()) {
      Table1Options opt;
      opt.probe = t1_probe.config();
      opt.lambda = lambda;
      opt.threads = threads;
      warn_if_long_time(opt.probe, err);
      json config{{"command", "table1"}, {"seed", seed}, {"lambda", lambda_text}, {"o", output}};
      t1_probe.embed(config);
      const auto rows = reproduce_table1(seed, opt);
      const auto dir = std::filesystem::path(output);
      write_file((dir / "table1.csv").string(), render_table1_csv(rows, {"config: " + config.dump()}));
      const auto text = render_table1_text(rows);
      write_file((dir / "table1.txt").string(), "# config: " + config.dump() + "\n" + text);
      out << text;
      return kExitOk;
    }

    if (intrude->parsed()) {
      in_spec.probe = in_probe.config();
      in_spec.lambda = lambda;
      in_spec.master_seed = seed;
      in_spec.threads = threads;
      warn_if_long_time(in_spec.probe, err);
      json config{{"command", "intrude"}, {"seed", seed},          {"lambda", lambda_text},
                  {"n", in_spec.n},        {"p", in_spec.p},        {"alpha", in_spec.alpha},
                  {"max-leak", in_spec.max_leak}, {"n-train", in_spec.n_train}, {"n-test", in_spec.n_test},
                  {"o", output}};
      in_probe.embed(config);
      const auto ds = build_intrusion_dataset(in_spec);
      const auto rep = evaluate_split(ObservableKind::Gamma, ds.train, ds.test, lambda);
      const auto dir = std::filesystem::path(output);
      for (auto [name, data] : {std::pair{"intrusion_train.jsonl", &ds.train}, std::pair{"intrusion_test.jsonl", &ds.test}}) {
        std::ostringstream os;
        write_dataset(os, *data, config);
        write_file((dir / name).string(), os.str());
      }
      write_file((dir / "model.json").string(), to_json(rep.model, in_spec.probe, config).dump(2) + "\n");
      json report{{"task", "gamma"},
                  {"base_graph", ds.base.hash_hex()},
                  {"train", metrics_json(rep.train)},
                  {"test", metrics_json(rep.test)},
                  {"test_spearman", spearman(rep.test_truth, rep.test_pred)},
                  {"config", config}};
      write_file((dir / "report.json").string(), report.dump(2) + "\n");
      out << report.dump() << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args), out, err);
}

}  // namespace qprobe::cli
