#include "numroute/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "numroute/rng.hpp"
#include "numroute/svg_plot.hpp"

namespace numroute {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

// Runs fn(0..count-1) on a small worker pool; each job owns its output slot,
// so the result is scheduling-independent.
void parallel_for(int count, const std::function<void(int)>& fn) {
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(std::max(count, 1)));
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

std::string format_double(double v) {
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), "%.10g", v);
  return buffer;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double quantile_of(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSolverCompare: return "solver-compare";
    case ExperimentKind::kSaVsAdmm: return "sa-vs-admm";
    case ExperimentKind::kNodeSweep: return "node-sweep";
    case ExperimentKind::kFlowSweep: return "flow-sweep";
    case ExperimentKind::kTrafficSweep: return "traffic-sweep";
    case ExperimentKind::kPerturbation: return "perturbation";
    case ExperimentKind::kTransferNodes: return "transfer-nodes";
    case ExperimentKind::kTransferFlows: return "transfer-flows";
    case ExperimentKind::kZoo: return "zoo";
    case ExperimentKind::kDualTrace: return "dual-trace";
  }
  return "unknown";
}

std::vector<ExperimentKind> all_experiment_kinds() {
  return {ExperimentKind::kSolverCompare, ExperimentKind::kSaVsAdmm,
          ExperimentKind::kNodeSweep,     ExperimentKind::kFlowSweep,
          ExperimentKind::kTrafficSweep,  ExperimentKind::kPerturbation,
          ExperimentKind::kTransferNodes, ExperimentKind::kTransferFlows,
          ExperimentKind::kZoo,           ExperimentKind::kDualTrace};
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (ExperimentKind kind : all_experiment_kinds()) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown experiment kind: " + name);
}

void ExperimentConfig::validate() const {
  if (nodes < 2) throw std::invalid_argument("experiment needs nodes >= 2");
  if (knn < 1 || knn >= nodes) {
    throw std::invalid_argument("experiment needs 1 <= knn < nodes");
  }
  if (flows.flow_count < 1) {
    throw std::invalid_argument("experiment needs at least one flow");
  }
  if (flows.mean_rate < 0.0) {
    throw std::invalid_argument("mean rate must be nonnegative");
  }
  if (exec_horizon < 1 || exec_window < 1 ||
      exec_horizon % exec_window != 0) {
    throw std::invalid_argument("execution window must divide the horizon");
  }
  if (test_count < 0) throw std::invalid_argument("test_count must be >= 0");
  if (kind == ExperimentKind::kZoo) {
    if (graphml_files.empty()) {
      throw std::invalid_argument("zoo experiment needs graphml_files");
    }
    for (const auto& file : graphml_files) {
      if (!std::filesystem::exists(file)) {
        throw std::invalid_argument("graphml file does not exist: " +
                                    file.string());
      }
    }
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json doc;
  doc["kind"] = to_string(kind);
  doc["out_dir"] = out_dir.string();
  doc["seeds"] = seeds;
  doc["nodes"] = nodes;
  doc["knn"] = knn;
  auto files = nlohmann::json::array();
  for (const auto& f : graphml_files) files.push_back(f.string());
  doc["graphml_files"] = std::move(files);
  doc["flows"] = {{"count", flows.flow_count},
                  {"mean_rate", flows.mean_rate}};
  doc["node_sweep"] = node_sweep;
  doc["flow_sweep"] = flow_sweep;
  doc["traffic_sweep"] = traffic_sweep;
  doc["train"] = train.to_json();
  doc["exec_horizon"] = exec_horizon;
  doc["exec_window"] = exec_window;
  doc["eta_mu"] = eta_mu;
  doc["test_count"] = test_count;
  doc["perturb_fraction"] = perturb_fraction;
  doc["perturb_shift"] = perturb_shift;
  doc["transfer_train_nodes"] = transfer_train_nodes;
  doc["transfer_train_flows"] = transfer_train_flows;
  doc["solver_iterations"] = solver_iterations;
  doc["mom"] = {{"rho", mom.rho},
                {"inner_iterations", mom.inner_iterations},
                {"eta_primal", mom.eta_primal}};
  doc["dd"] = {{"eta_primal", dd.eta_primal}, {"eta_dual", dd.eta_dual}};
  doc["admm"] = {{"rho", admm.rho},
                 {"inner_iterations", admm.inner_iterations},
                 {"eta_primal", admm.eta_primal}};
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base) {
  ExperimentConfig c;
  c.kind = experiment_kind_from_string(doc.at("kind").get<std::string>());
  if (doc.contains("out_dir")) {
    c.out_dir = doc.at("out_dir").get<std::string>();
  }
  if (doc.contains("seeds")) {
    c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  }
  c.nodes = doc.value("nodes", c.nodes);
  c.knn = doc.value("knn", c.knn);
  if (doc.contains("graphml_files")) {
    for (const auto& f : doc.at("graphml_files")) {
      std::filesystem::path file = f.get<std::string>();
      if (file.is_relative() && !base.empty()) file = base / file;
      c.graphml_files.push_back(std::move(file));
    }
  }
  if (doc.contains("flows")) {
    const auto& f = doc.at("flows");
    c.flows.flow_count = f.value("count", c.flows.flow_count);
    c.flows.mean_rate = f.value("mean_rate", c.flows.mean_rate);
  }
  if (doc.contains("node_sweep")) {
    c.node_sweep = doc.at("node_sweep").get<std::vector<int>>();
  }
  if (doc.contains("flow_sweep")) {
    c.flow_sweep = doc.at("flow_sweep").get<std::vector<int>>();
  }
  if (doc.contains("traffic_sweep")) {
    c.traffic_sweep = doc.at("traffic_sweep").get<std::vector<double>>();
  }
  if (doc.contains("train")) c.train = TrainConfig::from_json(doc.at("train"));
  c.exec_horizon = doc.value("exec_horizon", c.exec_horizon);
  c.exec_window = doc.value("exec_window", c.exec_window);
  c.eta_mu = doc.value("eta_mu", c.eta_mu);
  c.test_count = doc.value("test_count", c.test_count);
  c.perturb_fraction = doc.value("perturb_fraction", c.perturb_fraction);
  c.perturb_shift = doc.value("perturb_shift", c.perturb_shift);
  c.transfer_train_nodes =
      doc.value("transfer_train_nodes", c.transfer_train_nodes);
  c.transfer_train_flows =
      doc.value("transfer_train_flows", c.transfer_train_flows);
  c.solver_iterations = doc.value("solver_iterations", c.solver_iterations);
  if (doc.contains("mom")) {
    const auto& m = doc.at("mom");
    c.mom.rho = m.value("rho", c.mom.rho);
    c.mom.inner_iterations = m.value("inner_iterations", c.mom.inner_iterations);
    c.mom.eta_primal = m.value("eta_primal", c.mom.eta_primal);
  }
  if (doc.contains("dd")) {
    const auto& m = doc.at("dd");
    c.dd.eta_primal = m.value("eta_primal", c.dd.eta_primal);
    c.dd.eta_dual = m.value("eta_dual", c.dd.eta_dual);
  }
  if (doc.contains("admm")) {
    const auto& m = doc.at("admm");
    c.admm.rho = m.value("rho", c.admm.rho);
    c.admm.inner_iterations =
        m.value("inner_iterations", c.admm.inner_iterations);
    c.admm.eta_primal = m.value("eta_primal", c.admm.eta_primal);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open experiment config " + path.string());
  }
  // Relative data files resolve against the config's own directory, so a
  // config can be run from anywhere.
  return from_json(nlohmann::json::parse(in), path.parent_path());
}

void MetricsTable::sort_rows() {
  std::sort(rows.begin(), rows.end(),
            [](const MetricsRow& a, const MetricsRow& b) {
              return std::tie(a.experiment, a.setting, a.seed) <
                     std::tie(b.experiment, b.setting, b.seed);
            });
}

void MetricsTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "experiment,setting,seed,mean_utility,mean_total_queue,"
         "final_dual_norm,status\n";
  for (const MetricsRow& r : rows) {
    out << r.experiment << ',' << r.setting << ',' << r.seed << ','
        << format_double(r.mean_utility) << ','
        << format_double(r.mean_total_queue) << ','
        << format_double(r.final_dual_norm) << ',' << r.status << '\n';
  }
}

void MetricsTable::write_timing_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "experiment,setting,seed,wall_ms\n";
  for (const MetricsRow& r : rows) {
    out << r.experiment << ',' << r.setting << ',' << r.seed << ','
        << format_double(r.wall_ms) << '\n';
  }
}

std::vector<const MetricsRow*> MetricsTable::select(
    const std::string& setting) const {
  std::vector<const MetricsRow*> out;
  for (const MetricsRow& r : rows) {
    if (r.setting == setting) out.push_back(&r);
  }
  return out;
}

std::vector<RatioRow> relative_compare(const MetricsTable& sa,
                                       const MetricsTable& admm) {
  std::map<std::string, std::map<std::uint64_t, const MetricsRow*>> sa_index;
  for (const MetricsRow& r : sa.rows) sa_index[r.setting][r.seed] = &r;
  std::map<std::string, std::map<std::uint64_t, const MetricsRow*>> admm_index;
  for (const MetricsRow& r : admm.rows) admm_index[r.setting][r.seed] = &r;

  if (sa_index.size() != admm_index.size()) {
    throw std::invalid_argument("relative_compare: settings do not match");
  }
  std::vector<RatioRow> result;
  for (const auto& [setting, sa_rows] : sa_index) {
    const auto it = admm_index.find(setting);
    if (it == admm_index.end()) {
      throw std::invalid_argument("relative_compare: setting '" + setting +
                                  "' missing on the admm side");
    }
    std::vector<double> utility_ratios;
    std::vector<double> queue_ratios;
    for (const auto& [seed, row] : sa_rows) {
      const auto jt = it->second.find(seed);
      if (jt == it->second.end()) {
        throw std::invalid_argument(
            "relative_compare: seed " + std::to_string(seed) +
            " missing on the admm side for setting '" + setting + "'");
      }
      utility_ratios.push_back(row->mean_utility / jt->second->mean_utility);
      queue_ratios.push_back(row->mean_total_queue /
                             jt->second->mean_total_queue);
    }
    for (const auto& [seed, row] : it->second) {
      if (!sa_rows.contains(seed)) {
        throw std::invalid_argument(
            "relative_compare: seed " + std::to_string(seed) +
            " missing on the sa side for setting '" + setting + "'");
      }
    }
    RatioRow ratio;
    ratio.setting = setting;
    ratio.utility_ratio_median = median_of(utility_ratios);
    ratio.utility_ratio_q1 = quantile_of(utility_ratios, 0.25);
    ratio.utility_ratio_q3 = quantile_of(utility_ratios, 0.75);
    ratio.queue_ratio_median = median_of(queue_ratios);
    ratio.queue_ratio_q1 = quantile_of(queue_ratios, 0.25);
    ratio.queue_ratio_q3 = quantile_of(queue_ratios, 0.75);
    result.push_back(std::move(ratio));
  }
  return result;
}

void write_ratio_csv(const std::filesystem::path& path,
                     const std::vector<RatioRow>& rows) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "setting,utility_ratio_median,utility_ratio_q1,utility_ratio_q3,"
         "queue_ratio_median,queue_ratio_q1,queue_ratio_q3\n";
  for (const RatioRow& r : rows) {
    out << r.setting << ',' << format_double(r.utility_ratio_median) << ','
        << format_double(r.utility_ratio_q1) << ','
        << format_double(r.utility_ratio_q3) << ','
        << format_double(r.queue_ratio_median) << ','
        << format_double(r.queue_ratio_q1) << ','
        << format_double(r.queue_ratio_q3) << '\n';
  }
}

EvalMetrics evaluate_policy(const GnnParams& theta, const Topology& topology,
                            const FlowSet& flows, int horizon, int window,
                            double eta_mu, std::uint64_t seed) {
  const ExecutionTrace trace =
      execute(theta, topology, flows, horizon, window, eta_mu, seed);
  return {trace.mean_utility, trace.mean_total_queue, trace.final_dual_norm};
}

EvalMetrics evaluate_admm(const Topology& topology, const FlowSet& flows,
                          int horizon, const AdmmOptions& options,
                          std::uint64_t seed) {
  // Time-coupled protocol: the iterate produced at step t routes the traffic
  // of step t, so the solver's convergence transient passes through the
  // queue recursion exactly as the policy's dual transient does.
  SolveProblem problem{topology, flows, flows.mean_rates()};
  AdmmOptions opts = options;
  opts.iterations = horizon;
  const int n = flows.node_count();
  const int K = flows.flow_count();
  double queue_sum = 0.0;
  Eigen::MatrixXd queue = Eigen::MatrixXd::Zero(n, K);
  Eigen::MatrixXd admission_sum = Eigen::MatrixXd::Zero(n, K);
  int t = 0;
  opts.on_iteration = [&](int, const RoutingDecision& d, const DualState&) {
    const Eigen::MatrixXd arrivals = sample_arrivals(flows, seed, t);
    queue = queue_update(queue, arrivals, d, topology, flows);
    queue_sum += queue.sum();
    admission_sum += d.admission;
    ++t;
  };
  const SolveResult result = admm_solve(problem, opts);
  return {utility(admission_sum / static_cast<double>(horizon), flows),
          queue_sum / static_cast<double>(horizon),
          result.duals.inf_norm()};
}

namespace {

struct Harness {
  const ExperimentConfig& config;
  MetricsTable table;
  std::vector<PlotSeries> utility_plot;
  std::vector<PlotSeries> queue_plot;

  explicit Harness(const ExperimentConfig& c) : config(c) {}

  Topology test_topology(int n, int index) const {
    return Topology::random_geometric(
        n, config.knn,
        mix_seed(config.train.seed, 0x7357, static_cast<std::uint64_t>(index)));
  }

  FlowSet test_flows(const Topology& topo, const FlowSpec& spec,
                     int index) const {
    return FlowSet::sample(topo, spec,
                           mix_seed(config.train.seed, 0x7358,
                                    static_cast<std::uint64_t>(index)));
  }

  std::uint64_t arrival_seed(int index) const {
    return mix_seed(config.train.seed, 0x7359,
                    static_cast<std::uint64_t>(index));
  }

  void add_row(const std::string& setting, std::uint64_t seed,
               const EvalMetrics& metrics, double wall_ms,
               std::string status = "ok") {
    table.rows.push_back({to_string(config.kind), setting, seed,
                          metrics.mean_utility, metrics.mean_total_queue,
                          metrics.final_dual_norm, wall_ms,
                          std::move(status)});
  }

  GnnParams train_model(int n, int k_flows, double mean_rate,
                        const std::string& label, int train_nodes_knn = 0) {
    TrainConfig tc = config.train;
    tc.validate();
    const TopologySource source =
        TopologySource::knn(n, train_nodes_knn > 0 ? train_nodes_knn
                                                   : config.knn);
    const FlowSpec spec{k_flows, mean_rate};
    TrainLog log;
    GnnParams model = train(tc, source, spec, &log);
    std::filesystem::create_directories(config.out_dir);
    log.write_csv(config.out_dir / ("train_" + label + ".csv"));
    model.save_checkpoint(config.out_dir / ("model_" + label + ".json"));
    return model;
  }

  // SA-vs-ADMM evaluation over the held-out test networks; appends rows
  // under sa_setting / admm_setting and returns the two slices.
  std::pair<MetricsTable, MetricsTable> compare_on_tests(
      const GnnParams& model, int n, const FlowSpec& spec,
      const std::string& sa_setting, const std::string& admm_setting) {
    MetricsTable sa_table;
    MetricsTable admm_table;
    struct Slot {
      EvalMetrics sa, admm;
      double sa_ms = 0.0, admm_ms = 0.0;
      std::string status = "ok";
    };
    std::vector<Slot> slots(config.test_count);
    parallel_for(config.test_count, [&](int i) {
      try {
        const Topology topo = test_topology(n, i);
        const FlowSet flows = test_flows(topo, spec, i);
        const std::uint64_t seed = arrival_seed(i);
        auto t0 = Clock::now();
        slots[i].sa = evaluate_policy(model, topo, flows, config.exec_horizon,
                                      config.exec_window, config.eta_mu, seed);
        slots[i].sa_ms = elapsed_ms(t0);
        t0 = Clock::now();
        AdmmOptions admm = config.admm;
        admm.iterations = config.solver_iterations;
        slots[i].admm =
            evaluate_admm(topo, flows, config.exec_horizon, admm, seed);
        slots[i].admm_ms = elapsed_ms(t0);
      } catch (const std::exception& ex) {
        slots[i].status = ex.what();
      }
    });
    for (int i = 0; i < config.test_count; ++i) {
      const Slot& s = slots[i];
      add_row(sa_setting, i, s.sa, s.sa_ms, s.status);
      add_row(admm_setting, i, s.admm, s.admm_ms, s.status);
      sa_table.rows.push_back(table.rows[table.rows.size() - 2]);
      admm_table.rows.push_back(table.rows.back());
    }
    return {std::move(sa_table), std::move(admm_table)};
  }

  void finish() {
    if (table.rows.empty()) return;
    std::filesystem::create_directories(config.out_dir);
    table.sort_rows();
    table.write_csv(config.out_dir / "metrics.csv");
    table.write_timing_csv(config.out_dir / "timings.csv");
    if (!utility_plot.empty()) {
      write_line_plot_svg(config.out_dir / "utility.svg",
                          to_string(config.kind) + ": utility", "setting",
                          "utility", utility_plot);
    }
    if (!queue_plot.empty()) {
      write_line_plot_svg(config.out_dir / "queue.svg",
                          to_string(config.kind) + ": queue length", "setting",
                          "mean total queue", queue_plot);
    }
  }
};

void mean_curves(const std::vector<SolverTrajectory>& trajectories,
                 const std::string& label, std::vector<PlotSeries>& utility,
                 std::vector<PlotSeries>& violation) {
  if (trajectories.empty()) return;
  const size_t len = trajectories.front().records.size();
  PlotSeries u{label, {}, {}};
  PlotSeries v{label, {}, {}};
  for (size_t i = 0; i < len; ++i) {
    double u_sum = 0.0;
    double v_sum = 0.0;
    for (const auto& t : trajectories) {
      u_sum += t.records[i].utility;
      v_sum += t.records[i].max_violation;
    }
    u.x.push_back(static_cast<double>(i + 1));
    u.y.push_back(u_sum / trajectories.size());
    v.x.push_back(static_cast<double>(i + 1));
    v.y.push_back(v_sum / trajectories.size());
  }
  utility.push_back(std::move(u));
  violation.push_back(std::move(v));
}

void run_solver_compare(Harness& h) {
  const ExperimentConfig& c = h.config;
  std::vector<SolverTrajectory> dd_runs;
  std::vector<SolverTrajectory> mom_runs;
  std::vector<double> oracle_values;
  std::filesystem::create_directories(c.out_dir);
  for (std::uint64_t seed : c.seeds) {
    try {
      const Topology topo =
          Topology::random_geometric(c.nodes, c.knn, mix_seed(seed, 1));
      const FlowSet flows = FlowSet::sample(topo, c.flows, mix_seed(seed, 2));
      const SolveProblem problem =
          SolveProblem::sample(topo, flows, mix_seed(seed, 3));

      DualDescentOptions dd = c.dd;
      dd.iterations = c.solver_iterations;
      auto t0 = Clock::now();
      const SolveResult dd_result = dual_descent_solve(problem, dd);
      const double dd_ms = elapsed_ms(t0);

      MomOptions mom = c.mom;
      mom.iterations = c.solver_iterations;
      t0 = Clock::now();
      const SolveResult mom_result = mom_solve(problem, mom);
      const double mom_ms = elapsed_ms(t0);

      dd_result.trajectory.write_csv(
          c.out_dir / ("dd_seed" + std::to_string(seed) + ".csv"));
      mom_result.trajectory.write_csv(
          c.out_dir / ("mom_seed" + std::to_string(seed) + ".csv"));

      h.add_row("dd", seed,
                {dd_result.trajectory.records.back().utility, 0.0,
                 dd_result.duals.inf_norm()},
                dd_ms);
      h.add_row("mom", seed,
                {mom_result.trajectory.records.back().utility, 0.0,
                 mom_result.duals.inf_norm()},
                mom_ms);
      if (c.nodes <= 10 && flows.flow_count() <= 5) {
        t0 = Clock::now();
        const OracleResult oracle = oracle_solve(problem);
        h.add_row("oracle", seed, {oracle.utility, 0.0, 0.0}, elapsed_ms(t0));
        oracle_values.push_back(oracle.utility);
      }
      dd_runs.push_back(dd_result.trajectory);
      mom_runs.push_back(mom_result.trajectory);
    } catch (const std::exception& ex) {
      h.add_row("error", seed, {}, 0.0, ex.what());
    }
  }
  std::vector<PlotSeries> utility;
  std::vector<PlotSeries> violation;
  mean_curves(dd_runs, "dual descent", utility, violation);
  mean_curves(mom_runs, "mom", utility, violation);
  if (!oracle_values.empty() && !utility.empty()) {
    const double mean_oracle =
        std::accumulate(oracle_values.begin(), oracle_values.end(), 0.0) /
        oracle_values.size();
    PlotSeries line{"oracle", utility.front().x, {}};
    line.y.assign(line.x.size(), mean_oracle);
    utility.push_back(std::move(line));
  }
  if (!utility.empty()) {
    write_line_plot_svg(c.out_dir / "utility_vs_iteration.svg",
                        "dual descent vs method of multipliers", "iteration",
                        "utility", utility);
    write_line_plot_svg(c.out_dir / "violation_vs_iteration.svg",
                        "constraint violation", "iteration", "max violation",
                        violation);
  }
}

void plot_test_comparison(Harness& h, const MetricsTable& sa,
                          const MetricsTable& admm, const std::string& name) {
  PlotSeries su{"sa", {}, {}}, au{"admm", {}, {}};
  PlotSeries sq{"sa", {}, {}}, aq{"admm", {}, {}};
  for (size_t i = 0; i < sa.rows.size(); ++i) {
    su.x.push_back(static_cast<double>(i));
    su.y.push_back(sa.rows[i].mean_utility);
    sq.x.push_back(static_cast<double>(i));
    sq.y.push_back(sa.rows[i].mean_total_queue);
  }
  for (size_t i = 0; i < admm.rows.size(); ++i) {
    au.x.push_back(static_cast<double>(i));
    au.y.push_back(admm.rows[i].mean_utility);
    aq.x.push_back(static_cast<double>(i));
    aq.y.push_back(admm.rows[i].mean_total_queue);
  }
  write_line_plot_svg(h.config.out_dir / (name + "_utility.svg"),
                      name + ": utility on test networks", "test network",
                      "utility", {su, au});
  write_line_plot_svg(h.config.out_dir / (name + "_queue.svg"),
                      name + ": queue on test networks", "test network",
                      "mean total queue", {sq, aq});
}

void run_sa_vs_admm(Harness& h) {
  const ExperimentConfig& c = h.config;
  const GnnParams model =
      h.train_model(c.nodes, c.flows.flow_count, c.flows.mean_rate, "default");
  auto [sa, admm] =
      h.compare_on_tests(model, c.nodes, c.flows, "sa", "admm");
  plot_test_comparison(h, sa, admm, "sa_vs_admm");
  // Sample trace from the first test network.
  if (c.test_count > 0) {
    const Topology topo = h.test_topology(c.nodes, 0);
    const FlowSet flows = h.test_flows(topo, c.flows, 0);
    const ExecutionTrace trace =
        execute(model, topo, flows, c.exec_horizon, c.exec_window, c.eta_mu,
                h.arrival_seed(0));
    trace.write_step_csv(c.out_dir / "sample_trace_steps.csv");
    trace.write_window_csv(c.out_dir / "sample_trace_windows.csv");
  }
}

void run_size_sweep(Harness& h, bool sweep_nodes) {
  const ExperimentConfig& c = h.config;
  PlotSeries su{"sa", {}, {}}, au{"admm", {}, {}};
  PlotSeries sq{"sa", {}, {}}, aq{"admm", {}, {}};
  const std::vector<int>& sweep = sweep_nodes ? c.node_sweep : c.flow_sweep;
  for (int value : sweep) {
    const int n = sweep_nodes ? value : c.nodes;
    const int k_flows = sweep_nodes ? c.flows.flow_count : value;
    const std::string label =
        (sweep_nodes ? "n=" : "k=") + std::to_string(value);
    const GnnParams model =
        h.train_model(n, k_flows, c.flows.mean_rate, label);
    const FlowSpec spec{k_flows, c.flows.mean_rate};
    auto [sa, admm] = h.compare_on_tests(model, n, spec, label + "/sa",
                                         label + "/admm");
    auto mean_util = [](const MetricsTable& t) {
      double sum = 0.0;
      for (const auto& r : t.rows) sum += r.mean_utility;
      return t.rows.empty() ? 0.0 : sum / t.rows.size();
    };
    auto mean_queue = [](const MetricsTable& t) {
      double sum = 0.0;
      for (const auto& r : t.rows) sum += r.mean_total_queue;
      return t.rows.empty() ? 0.0 : sum / t.rows.size();
    };
    su.x.push_back(value);
    su.y.push_back(mean_util(sa));
    au.x.push_back(value);
    au.y.push_back(mean_util(admm));
    sq.x.push_back(value);
    sq.y.push_back(mean_queue(sa));
    aq.x.push_back(value);
    aq.y.push_back(mean_queue(admm));
  }
  const std::string axis = sweep_nodes ? "nodes" : "flows";
  write_line_plot_svg(c.out_dir / "sweep_utility.svg",
                      "mean utility vs " + axis, axis, "mean utility",
                      {su, au});
  write_line_plot_svg(c.out_dir / "sweep_queue.svg",
                      "mean queue vs " + axis, axis, "mean total queue",
                      {sq, aq});
}

void run_traffic_sweep(Harness& h) {
  const ExperimentConfig& c = h.config;
  MetricsTable sa_all;
  MetricsTable admm_all;
  for (double mean : c.traffic_sweep) {
    char label[32];
    std::snprintf(label, sizeof(label), "A=%g", mean);
    const GnnParams model =
        h.train_model(c.nodes, c.flows.flow_count, mean, label);
    const FlowSpec spec{c.flows.flow_count, mean};
    auto [sa, admm] = h.compare_on_tests(model, c.nodes, spec,
                                         std::string(label) + "/sa",
                                         std::string(label) + "/admm");
    for (auto& r : sa.rows) r.setting = label;
    for (auto& r : admm.rows) r.setting = label;
    sa_all.rows.insert(sa_all.rows.end(), sa.rows.begin(), sa.rows.end());
    admm_all.rows.insert(admm_all.rows.end(), admm.rows.begin(),
                         admm.rows.end());
  }
  const std::vector<RatioRow> ratios = relative_compare(sa_all, admm_all);
  write_ratio_csv(c.out_dir / "relative.csv", ratios);
  PlotSeries ur{"utility ratio (median)", {}, {}};
  PlotSeries qr{"queue ratio (median)", {}, {}};
  for (size_t i = 0; i < ratios.size(); ++i) {
    const double mean = c.traffic_sweep[std::min(i, c.traffic_sweep.size() - 1)];
    ur.x.push_back(mean);
    ur.y.push_back(ratios[i].utility_ratio_median);
    qr.x.push_back(mean);
    qr.y.push_back(ratios[i].queue_ratio_median);
  }
  write_line_plot_svg(c.out_dir / "relative.svg", "sa relative to admm",
                      "mean traffic", "ratio", {ur, qr});
}

void run_perturbation(Harness& h) {
  const ExperimentConfig& c = h.config;
  const GnnParams model =
      h.train_model(c.nodes, c.flows.flow_count, c.flows.mean_rate, "default");
  std::ofstream summary(c.out_dir / "perturbation_summary.csv");
  summary << "test,utility_original,utility_perturbed,degradation\n";
  std::vector<double> degradations;
  PlotSeries orig{"original", {}, {}}, pert{"perturbed", {}, {}};
  for (int i = 0; i < c.test_count; ++i) {
    try {
      const Topology topo = h.test_topology(c.nodes, i);
      const Topology shaken = topo.perturbed(
          c.perturb_fraction, c.perturb_shift,
          mix_seed(c.train.seed, 0x7065, static_cast<std::uint64_t>(i)));
      const FlowSet flows = h.test_flows(topo, c.flows, i);
      const std::uint64_t seed = h.arrival_seed(i);
      auto t0 = Clock::now();
      const EvalMetrics base =
          evaluate_policy(model, topo, flows, c.exec_horizon, c.exec_window,
                          c.eta_mu, seed);
      const EvalMetrics moved =
          evaluate_policy(model, shaken, flows, c.exec_horizon, c.exec_window,
                          c.eta_mu, seed);
      const double wall = elapsed_ms(t0);
      h.add_row("original", i, base, wall / 2);
      h.add_row("perturbed", i, moved, wall / 2);
      const double degradation =
          (base.mean_utility - moved.mean_utility) /
          std::max(std::abs(base.mean_utility), 1e-12);
      degradations.push_back(degradation);
      summary << i << ',' << format_double(base.mean_utility) << ','
              << format_double(moved.mean_utility) << ','
              << format_double(degradation) << '\n';
      orig.x.push_back(i);
      orig.y.push_back(base.mean_utility);
      pert.x.push_back(i);
      pert.y.push_back(moved.mean_utility);
    } catch (const std::exception& ex) {
      h.add_row("error", i, {}, 0.0, ex.what());
    }
  }
  summary << "median,,," << format_double(median_of(degradations)) << '\n';
  write_line_plot_svg(c.out_dir / "perturbation.svg",
                      "utility under perturbation", "test network", "utility",
                      {orig, pert});
}

void run_transfer_nodes(Harness& h) {
  const ExperimentConfig& c = h.config;
  const GnnParams transfer = h.train_model(
      c.transfer_train_nodes, c.flows.flow_count, c.flows.mean_rate,
      "transfer_n" + std::to_string(c.transfer_train_nodes));
  PlotSeries tu{"transferred", {}, {}};
  for (int n : c.node_sweep) {
    MetricsTable slice;
    for (int i = 0; i < c.test_count; ++i) {
      try {
        const Topology topo = h.test_topology(n, i);
        const FlowSet flows = h.test_flows(topo, c.flows, i);
        auto t0 = Clock::now();
        const EvalMetrics metrics =
            evaluate_policy(transfer, topo, flows, c.exec_horizon,
                            c.exec_window, c.eta_mu, h.arrival_seed(i));
        h.add_row("transfer_n=" + std::to_string(n), i, metrics,
                  elapsed_ms(t0));
        slice.rows.push_back(h.table.rows.back());
      } catch (const std::exception& ex) {
        h.add_row("error_n=" + std::to_string(n), i, {}, 0.0, ex.what());
      }
    }
    std::vector<double> utilities;
    for (const auto& r : slice.rows) utilities.push_back(r.mean_utility);
    tu.x.push_back(n);
    tu.y.push_back(median_of(utilities));
  }
  // Size-matched reference at config.nodes.
  const GnnParams matched =
      h.train_model(c.nodes, c.flows.flow_count, c.flows.mean_rate,
                    "matched_n" + std::to_string(c.nodes));
  std::vector<double> matched_utilities;
  for (int i = 0; i < c.test_count; ++i) {
    try {
      const Topology topo = h.test_topology(c.nodes, i);
      const FlowSet flows = h.test_flows(topo, c.flows, i);
      auto t0 = Clock::now();
      const EvalMetrics metrics =
          evaluate_policy(matched, topo, flows, c.exec_horizon, c.exec_window,
                          c.eta_mu, h.arrival_seed(i));
      h.add_row("matched_n=" + std::to_string(c.nodes), i, metrics,
                elapsed_ms(t0));
      matched_utilities.push_back(metrics.mean_utility);
    } catch (const std::exception& ex) {
      h.add_row("error_matched", i, {}, 0.0, ex.what());
    }
  }
  PlotSeries mu{"size-matched", {static_cast<double>(c.nodes)},
                {median_of(matched_utilities)}};
  write_line_plot_svg(c.out_dir / "transfer_nodes.svg",
                      "transfer across network sizes", "nodes",
                      "median utility", {tu, mu});
}

void run_transfer_flows(Harness& h) {
  const ExperimentConfig& c = h.config;
  const GnnParams transfer = h.train_model(
      c.nodes, c.transfer_train_flows, c.flows.mean_rate,
      "transfer_k" + std::to_string(c.transfer_train_flows));
  PlotSeries tu{"transferred", {}, {}};
  PlotSeries mu{"matched", {}, {}};
  for (int k_flows : c.flow_sweep) {
    const FlowSpec spec{k_flows, c.flows.mean_rate};
    const GnnParams matched = h.train_model(c.nodes, k_flows, c.flows.mean_rate,
                                            "matched_k" + std::to_string(k_flows));
    std::vector<double> transfer_utils;
    std::vector<double> matched_utils;
    for (int i = 0; i < c.test_count; ++i) {
      try {
        const Topology topo = h.test_topology(c.nodes, i);
        const FlowSet flows = h.test_flows(topo, spec, i);
        auto t0 = Clock::now();
        const EvalMetrics t_metrics =
            evaluate_policy(transfer, topo, flows, c.exec_horizon,
                            c.exec_window, c.eta_mu, h.arrival_seed(i));
        h.add_row("transfer_k=" + std::to_string(k_flows), i, t_metrics,
                  elapsed_ms(t0));
        transfer_utils.push_back(t_metrics.mean_utility);
        t0 = Clock::now();
        const EvalMetrics m_metrics =
            evaluate_policy(matched, topo, flows, c.exec_horizon,
                            c.exec_window, c.eta_mu, h.arrival_seed(i));
        h.add_row("matched_k=" + std::to_string(k_flows), i, m_metrics,
                  elapsed_ms(t0));
        matched_utils.push_back(m_metrics.mean_utility);
      } catch (const std::exception& ex) {
        h.add_row("error_k=" + std::to_string(k_flows), i, {}, 0.0, ex.what());
      }
    }
    tu.x.push_back(k_flows);
    tu.y.push_back(median_of(transfer_utils));
    mu.x.push_back(k_flows);
    mu.y.push_back(median_of(matched_utils));
  }
  write_line_plot_svg(c.out_dir / "transfer_flows.svg",
                      "transfer across flow counts", "flows", "median utility",
                      {tu, mu});
}

void run_zoo(Harness& h) {
  const ExperimentConfig& c = h.config;
  std::filesystem::create_directories(c.out_dir);
  // Reference model trained on random graphs, transferred to the real
  // topologies.
  const GnnParams reference = h.train_model(
      c.nodes, c.flows.flow_count, c.flows.mean_rate, "reference_random");
  PlotSeries trained_series{"trained on topology", {}, {}};
  PlotSeries transfer_series{"transferred", {}, {}};
  double position = 0.0;
  for (const auto& file : c.graphml_files) {
    const std::string name = file.stem().string();
    try {
      std::vector<std::string> warnings;
      const Topology topo = Topology::from_graphml(file, &warnings);
      for (const std::string& w : warnings) {
        std::ofstream(c.out_dir / (name + "_warnings.txt"), std::ios::app)
            << w << '\n';
      }
      const FlowSet flows =
          FlowSet::sample(topo, c.flows, mix_seed(c.train.seed, 0x7a6f, 1));

      TrainConfig tc = c.train;
      TrainLog log;
      const GnnParams model =
          train(tc, TopologySource::fixed_graph(topo), c.flows, &log);
      log.write_csv(c.out_dir / ("train_" + name + ".csv"));

      auto t0 = Clock::now();
      const ExecutionTrace trace =
          execute(model, topo, flows, c.exec_horizon, c.exec_window, c.eta_mu,
                  h.arrival_seed(0));
      h.add_row(name + "/trained", 0,
                {trace.mean_utility, trace.mean_total_queue,
                 trace.final_dual_norm},
                elapsed_ms(t0));
      trace.write_step_csv(c.out_dir / (name + "_steps.csv"));
      trace.write_window_csv(c.out_dir / (name + "_windows.csv"));

      t0 = Clock::now();
      const EvalMetrics transferred =
          evaluate_policy(reference, topo, flows, c.exec_horizon,
                          c.exec_window, c.eta_mu, h.arrival_seed(0));
      h.add_row(name + "/transferred", 0, transferred, elapsed_ms(t0));

      trained_series.x.push_back(position);
      trained_series.y.push_back(trace.mean_utility);
      transfer_series.x.push_back(position);
      transfer_series.y.push_back(transferred.mean_utility);
      position += 1.0;
    } catch (const std::exception& ex) {
      h.add_row(name + "/error", 0, {}, 0.0, ex.what());
    }
  }
  write_line_plot_svg(c.out_dir / "zoo.svg", "topology zoo networks",
                      "topology index", "utility",
                      {trained_series, transfer_series});
}

void run_dual_trace(Harness& h) {
  const ExperimentConfig& c = h.config;
  const GnnParams model =
      h.train_model(c.nodes, c.flows.flow_count, c.flows.mean_rate, "default");
  const Topology topo = h.test_topology(c.nodes, 0);
  const FlowSet flows = h.test_flows(topo, c.flows, 0);
  auto t0 = Clock::now();
  const ExecutionTrace trace =
      execute(model, topo, flows, c.exec_horizon, c.exec_window, c.eta_mu,
              h.arrival_seed(0));
  h.add_row("execution", 0,
            {trace.mean_utility, trace.mean_total_queue,
             trace.final_dual_norm},
            elapsed_ms(t0));
  std::filesystem::create_directories(c.out_dir);
  trace.write_step_csv(c.out_dir / "steps.csv");
  trace.write_window_csv(c.out_dir / "windows.csv");

  // Settling analysis: the first window whose dual step falls below 10% of
  // the peak step, and per-node queue growth afterwards.
  const int window_count = static_cast<int>(trace.windows.size());
  std::vector<double> deltas;
  for (int m = 0; m + 1 < window_count; ++m) {
    deltas.push_back((trace.windows[m + 1].mu - trace.windows[m].mu)
                         .cwiseAbs()
                         .maxCoeff());
  }
  const double peak =
      deltas.empty() ? 0.0 : *std::max_element(deltas.begin(), deltas.end());
  int settle = -1;
  for (size_t m = 0; m < deltas.size(); ++m) {
    if (deltas[m] < 0.1 * peak) {
      settle = static_cast<int>(m);
      break;
    }
  }
  std::ofstream analysis(c.out_dir / "dual_trace_analysis.csv");
  analysis << "settle_window,peak_dual_step\n";
  analysis << settle << ',' << format_double(peak) << "\n\n";
  analysis << "node,queue_growth_per_step\n";
  if (settle >= 0) {
    const int t_start = (settle + 1) * c.exec_window;
    const int t_end = c.exec_horizon;
    for (int i = 0; i < topo.node_count(); ++i) {
      const double growth =
          (trace.queues[t_end].row(i).sum() -
           trace.queues[t_start].row(i).sum()) /
          std::max(1, t_end - t_start);
      analysis << i << ',' << format_double(growth) << '\n';
    }
  }

  PlotSeries dual_norm{"max dual step", {}, {}};
  for (size_t m = 0; m < deltas.size(); ++m) {
    dual_norm.x.push_back(static_cast<double>(m));
    dual_norm.y.push_back(deltas[m]);
  }
  write_line_plot_svg(c.out_dir / "dual_steps.svg", "dual variable steps",
                      "window", "max |mu_{m+1} - mu_m|", {dual_norm});
  PlotSeries total_queue{"total queue", {}, {}};
  for (size_t t = 0; t < trace.queues.size(); ++t) {
    total_queue.x.push_back(static_cast<double>(t));
    total_queue.y.push_back(trace.queues[t].sum());
  }
  write_line_plot_svg(c.out_dir / "queue_trajectory.svg", "queue trajectory",
                      "t", "total queue", {total_queue});
}

}  // namespace

MetricsTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  Harness harness(config);
  switch (config.kind) {
    case ExperimentKind::kSolverCompare: run_solver_compare(harness); break;
    case ExperimentKind::kSaVsAdmm: run_sa_vs_admm(harness); break;
    case ExperimentKind::kNodeSweep: run_size_sweep(harness, true); break;
    case ExperimentKind::kFlowSweep: run_size_sweep(harness, false); break;
    case ExperimentKind::kTrafficSweep: run_traffic_sweep(harness); break;
    case ExperimentKind::kPerturbation: run_perturbation(harness); break;
    case ExperimentKind::kTransferNodes: run_transfer_nodes(harness); break;
    case ExperimentKind::kTransferFlows: run_transfer_flows(harness); break;
    case ExperimentKind::kZoo: run_zoo(harness); break;
    case ExperimentKind::kDualTrace: run_dual_trace(harness); break;
  }
  harness.finish();
  return std::move(harness.table);
}

}  // namespace numroute
