// Command-line front end: topology generation, classic solvers, training,
// execution, experiment configs, CSV-to-SVG plotting and checkpoint
// inspection.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "numroute/experiment.hpp"
#include "numroute/gnn.hpp"
#include "numroute/num_core.hpp"
#include "numroute/rng.hpp"
#include "numroute/solvers.hpp"
#include "numroute/state_augmented.hpp"
#include "numroute/svg_plot.hpp"
#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

namespace {

namespace fs = std::filesystem;
using numroute::mix_seed;

struct GlobalOptions {
  std::uint64_t seed = 1;
  fs::path out = "out";
  fs::path config;
  bool json = false;
};

nlohmann::json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path.string());
  }
  return nlohmann::json::parse(in);
}

numroute::Topology make_topology(const nlohmann::json& doc,
                                 std::uint64_t seed) {
  const std::string type = doc.value("type", "knn");
  if (type == "knn") {
    return numroute::Topology::random_geometric(
        doc.value("n", 10), doc.value("k", 4), doc.value("seed", seed));
  }
  if (type == "graphml") {
    return numroute::Topology::from_graphml(doc.at("file").get<std::string>());
  }
  if (type == "json") {
    return numroute::Topology::from_json(
        load_json_file(doc.at("file").get<std::string>()));
  }
  throw std::runtime_error("unknown topology type: " + type);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("csv has no column named '" + name + "'");
  }
};

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv file: " + path.string());
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      csv.header = std::move(fields);
      first = false;
    } else {
      csv.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::runtime_error("csv file is empty: " + path.string());
  return csv;
}

int cmd_gen(const GlobalOptions& g, int nodes, int k, const fs::path& file) {
  const numroute::Topology topo =
      numroute::Topology::random_geometric(nodes, k, g.seed);
  const fs::path target = file.empty() ? g.out / "topology.json" : file;
  fs::create_directories(target.parent_path().empty() ? "."
                                                      : target.parent_path());
  std::ofstream out(target);
  out << topo.to_json().dump(2) << '\n';
  if (g.json) {
    nlohmann::json info = {{"file", target.string()},
                           {"nodes", topo.node_count()},
                           {"directed_edges", topo.directed_edge_count()},
                           {"connected", topo.connected()}};
    std::cout << info.dump() << '\n';
  } else {
    std::cout << "wrote " << target.string() << " (" << topo.node_count()
              << " nodes, " << topo.directed_edge_count()
              << " directed edges)\n";
  }
  return 0;
}

int cmd_solve(const GlobalOptions& g, const std::string& solver, int nodes,
              int flows, double mean, int iters) {
  const numroute::Topology topo =
      numroute::Topology::random_geometric(nodes, 4, mix_seed(g.seed, 1));
  const numroute::FlowSet flow_set = numroute::FlowSet::sample(
      topo, {flows, mean}, mix_seed(g.seed, 2));
  const numroute::SolveProblem problem =
      numroute::SolveProblem::sample(topo, flow_set, mix_seed(g.seed, 3));

  fs::create_directories(g.out);
  double final_utility = 0.0;
  if (solver == "dd") {
    numroute::DualDescentOptions options;
    options.iterations = iters;
    const auto result = dual_descent_solve(problem, options);
    result.trajectory.write_csv(g.out / "dd_trajectory.csv");
    final_utility = result.trajectory.records.back().utility;
  } else if (solver == "mom") {
    numroute::MomOptions options;
    options.iterations = iters;
    const auto result = mom_solve(problem, options);
    result.trajectory.write_csv(g.out / "mom_trajectory.csv");
    final_utility = result.trajectory.records.back().utility;
  } else if (solver == "admm") {
    numroute::AdmmOptions options;
    options.iterations = iters;
    const auto result = admm_solve(problem, options);
    result.trajectory.write_csv(g.out / "admm_trajectory.csv");
    final_utility = result.trajectory.records.back().utility;
  } else if (solver == "oracle") {
    const auto result = oracle_solve(problem);
    final_utility = result.utility;
  } else {
    std::cerr << "unknown solver '" << solver
              << "' (expected dd, mom, admm or oracle)\n";
    return 1;
  }
  if (g.json) {
    std::cout << nlohmann::json({{"solver", solver},
                                 {"utility", final_utility}})
                     .dump()
              << '\n';
  } else {
    std::cout << solver << " final utility: " << final_utility << '\n';
  }
  return 0;
}

int cmd_train(const GlobalOptions& g) {
  if (g.config.empty()) {
    std::cerr << "train requires --config <json>\n";
    return 1;
  }
  const nlohmann::json doc = load_json_file(g.config);
  numroute::TrainConfig config =
      doc.contains("train") ? numroute::TrainConfig::from_json(doc.at("train"))
                            : numroute::TrainConfig::from_json(doc);
  numroute::FlowSpec spec;
  if (doc.contains("flows")) {
    spec.flow_count = doc.at("flows").value("count", spec.flow_count);
    spec.mean_rate = doc.at("flows").value("mean_rate", spec.mean_rate);
  }
  numroute::TopologySource source = numroute::TopologySource::knn(
      doc.value("nodes", 10), doc.value("knn", 4));
  if (doc.contains("topology")) {
    const auto& t = doc.at("topology");
    if (t.value("type", "knn") == "knn") {
      source = numroute::TopologySource::knn(t.value("n", 10),
                                             t.value("k", 4));
    } else {
      source = numroute::TopologySource::fixed_graph(
          make_topology(t, config.seed));
    }
  }
  numroute::TrainLog log;
  const numroute::GnnParams model =
      numroute::train(config, source, spec, &log);
  fs::create_directories(g.out);
  model.save_checkpoint(g.out / "checkpoint.json");
  log.write_csv(g.out / "training_curve.csv");
  if (g.json) {
    std::cout << nlohmann::json(
                     {{"checkpoint", (g.out / "checkpoint.json").string()},
                      {"iterations", log.records.size()},
                      {"final_lagrangian",
                       log.records.empty()
                           ? 0.0
                           : log.records.back().batch_lagrangian}})
                     .dump()
              << '\n';
  } else {
    std::cout << "wrote " << (g.out / "checkpoint.json").string() << " after "
              << log.records.size() << " iterations\n";
  }
  return 0;
}

int cmd_execute(const GlobalOptions& g, const fs::path& checkpoint, int nodes,
                int flows, double mean, int horizon, int window,
                double eta_mu) {
  auto [model, adam] = numroute::GnnParams::load_checkpoint(checkpoint);
  const numroute::Topology topo =
      numroute::Topology::random_geometric(nodes, 4, mix_seed(g.seed, 1));
  const numroute::FlowSet flow_set =
      numroute::FlowSet::sample(topo, {flows, mean}, mix_seed(g.seed, 2));
  const numroute::ExecutionTrace trace = numroute::execute(
      model, topo, flow_set, horizon, window, eta_mu, mix_seed(g.seed, 3));
  fs::create_directories(g.out);
  trace.write_step_csv(g.out / "execution_steps.csv");
  trace.write_window_csv(g.out / "execution_windows.csv");
  if (g.json) {
    std::cout << nlohmann::json({{"mean_utility", trace.mean_utility},
                                 {"mean_total_queue", trace.mean_total_queue},
                                 {"final_dual_norm", trace.final_dual_norm}})
                     .dump()
              << '\n';
  } else {
    std::cout << "mean utility " << trace.mean_utility
              << ", mean total queue " << trace.mean_total_queue << '\n';
  }
  return 0;
}

int cmd_experiment(const GlobalOptions& g, const fs::path& config_file) {
  const fs::path file = config_file.empty() ? g.config : config_file;
  if (file.empty()) {
    std::cerr << "experiment requires a config file\n";
    return 1;
  }
  numroute::ExperimentConfig config =
      numroute::ExperimentConfig::from_file(file);
  const numroute::MetricsTable table = numroute::run_experiment(config);
  int failures = 0;
  for (const auto& row : table.rows) {
    if (row.status != "ok") ++failures;
  }
  if (g.json) {
    std::cout << nlohmann::json({{"rows", table.rows.size()},
                                 {"failures", failures},
                                 {"out_dir", config.out_dir.string()}})
                     .dump()
              << '\n';
  } else {
    std::cout << "experiment '" << to_string(config.kind) << "' wrote "
              << table.rows.size() << " rows to "
              << config.out_dir.string() << '\n';
  }
  return failures == 0 ? 0 : 2;
}

int cmd_plot(const GlobalOptions& g, const fs::path& csv_file,
             const std::string& x_col, std::vector<std::string> y_cols,
             const std::string& group_col, fs::path out_file) {
  if (!fs::exists(csv_file)) {
    std::cerr << "plot: no such file: " << csv_file.string() << '\n';
    return 1;
  }
  const Csv csv = read_csv(csv_file);
  const int xi = csv.column(x_col);
  if (y_cols.empty()) {
    // Default: every numeric column except x.
    for (const std::string& name : csv.header) {
      if (name != x_col) y_cols.push_back(name);
    }
  }
  std::vector<numroute::PlotSeries> series;
  for (const std::string& y_name : y_cols) {
    const int yi = csv.column(y_name);
    if (group_col.empty()) {
      numroute::PlotSeries s{y_name, {}, {}};
      for (const auto& row : csv.rows) {
        try {
          const double x = std::stod(row.at(xi));
          const double y = std::stod(row.at(yi));
          s.x.push_back(x);
          s.y.push_back(y);
        } catch (const std::exception&) {
          // skip non-numeric rows
        }
      }
      series.push_back(std::move(s));
    } else {
      const int gi = csv.column(group_col);
      std::map<std::string, numroute::PlotSeries> groups;
      for (const auto& row : csv.rows) {
        try {
          const double x = std::stod(row.at(xi));
          const double y = std::stod(row.at(yi));
          auto& s = groups[row.at(gi)];
          s.x.push_back(x);
          s.y.push_back(y);
        } catch (const std::exception&) {
        }
      }
      for (auto& [key, s] : groups) {
        s.label = y_name + " [" + group_col + "=" + key + "]";
        series.push_back(std::move(s));
      }
    }
  }
  if (out_file.empty()) {
    out_file = csv_file;
    out_file.replace_extension(".svg");
  }
  numroute::write_line_plot_svg(out_file, csv_file.filename().string(), x_col,
                                y_cols.size() == 1 ? y_cols.front() : "value",
                                series);
  std::cout << "wrote " << out_file.string() << '\n';
  return 0;
}

int cmd_inspect(const GlobalOptions& g, const fs::path& checkpoint) {
  auto [model, adam] = numroute::GnnParams::load_checkpoint(checkpoint);
  nlohmann::json info = {
      {"features", model.dims.features},
      {"taps", model.dims.taps},
      {"parameter_count", model.dims.param_count()},
      {"has_adam_state", adam.has_value()},
  };
  if (adam) info["adam_step"] = adam->step;
  if (g.json) {
    std::cout << info.dump() << '\n';
  } else {
    std::cout << "checkpoint " << checkpoint.string() << "\n  features:";
    for (int f : model.dims.features) std::cout << ' ' << f;
    std::cout << "\n  taps:";
    for (int t : model.dims.taps) std::cout << ' ' << t;
    std::cout << "\n  parameters: " << model.dims.param_count()
              << "\n  adam state: " << (adam ? "yes" : "no") << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"network-utility-maximization routing toolkit"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--config", g.config, "JSON config file");
  app.add_flag("--json", g.json, "machine-readable JSON output");

  // Subcommands let global flags fall through to the parent parser.
  auto* gen = app.add_subcommand("gen", "generate a random topology JSON");
  gen->fallthrough();
  int gen_nodes = 10, gen_k = 4;
  fs::path gen_file;
  gen->add_option("--nodes", gen_nodes, "node count");
  gen->add_option("--knn", gen_k, "neighbor count");
  gen->add_option("--file", gen_file, "output file");

  auto* solve = app.add_subcommand("solve", "run a classic solver");
  solve->fallthrough();
  std::string solver = "mom";
  int solve_nodes = 10, solve_flows = 5, solve_iters = 100;
  double solve_mean = 2.0;
  solve->add_option("--solver", solver, "dd | mom | admm | oracle");
  solve->add_option("--nodes", solve_nodes, "node count");
  solve->add_option("--flows", solve_flows, "flow count");
  solve->add_option("--mean", solve_mean, "mean arrival rate");
  solve->add_option("--iters", solve_iters, "outer iterations");

  auto* train_cmd = app.add_subcommand("train", "train a policy from --config");
  train_cmd->fallthrough();

  auto* execute_cmd =
      app.add_subcommand("execute", "run a trained policy online");
  execute_cmd->fallthrough();
  fs::path exec_checkpoint;
  int exec_nodes = 10, exec_flows = 5, exec_horizon = 100, exec_window = 5;
  double exec_mean = 2.0, exec_eta_mu = 0.01;
  execute_cmd->add_option("--checkpoint", exec_checkpoint, "checkpoint file")
      ->required();
  execute_cmd->add_option("--nodes", exec_nodes, "node count");
  execute_cmd->add_option("--flows", exec_flows, "flow count");
  execute_cmd->add_option("--mean", exec_mean, "mean arrival rate");
  execute_cmd->add_option("--horizon", exec_horizon, "time steps T");
  execute_cmd->add_option("--window", exec_window, "dual update period T0");
  execute_cmd->add_option("--eta-mu", exec_eta_mu, "dual step size");

  auto* experiment_cmd =
      app.add_subcommand("experiment", "run an experiment config");
  experiment_cmd->fallthrough();
  fs::path experiment_config;
  experiment_cmd->add_option("config", experiment_config,
                             "experiment JSON file");

  auto* plot_cmd = app.add_subcommand("plot", "render a CSV as an SVG plot");
  plot_cmd->fallthrough();
  fs::path plot_csv;
  std::string plot_x = "iteration";
  std::vector<std::string> plot_y;
  std::string plot_group;
  fs::path plot_out;
  plot_cmd->add_option("csv", plot_csv, "input CSV file")->required();
  plot_cmd->add_option("--x", plot_x, "x column");
  plot_cmd->add_option("--y", plot_y, "y column(s)");
  plot_cmd->add_option("--group", plot_group, "series grouping column");
  plot_cmd->add_option("--svg", plot_out, "output SVG file");

  auto* inspect_cmd =
      app.add_subcommand("inspect", "summarize a model checkpoint");
  inspect_cmd->fallthrough();
  fs::path inspect_file;
  inspect_cmd->add_option("checkpoint", inspect_file, "checkpoint file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(g, gen_nodes, gen_k, gen_file);
    if (solve->parsed()) {
      return cmd_solve(g, solver, solve_nodes, solve_flows, solve_mean,
                       solve_iters);
    }
    if (train_cmd->parsed()) return cmd_train(g);
    if (execute_cmd->parsed()) {
      return cmd_execute(g, exec_checkpoint, exec_nodes, exec_flows, exec_mean,
                         exec_horizon, exec_window, exec_eta_mu);
    }
    if (experiment_cmd->parsed()) return cmd_experiment(g, experiment_config);
    if (plot_cmd->parsed()) {
      return cmd_plot(g, plot_csv, plot_x, plot_y, plot_group, plot_out);
    }
    if (inspect_cmd->parsed()) return cmd_inspect(g, inspect_file);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
