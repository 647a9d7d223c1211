#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "numroute/solvers.hpp"
#include "numroute/state_augmented.hpp"

namespace numroute {

enum class ExperimentKind {
  kSolverCompare,
  kSaVsAdmm,
  kNodeSweep,
  kFlowSweep,
  kTrafficSweep,
  kPerturbation,
  kTransferNodes,
  kTransferFlows,
  kZoo,
  kDualTrace,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
std::vector<ExperimentKind> all_experiment_kinds();

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSolverCompare;
  std::filesystem::path out_dir = "out";
  std::vector<std::uint64_t> seeds = {1};

  // Topology family for generated graphs.
  int nodes = 10;
  int knn = 4;
  std::vector<std::filesystem::path> graphml_files;  // zoo runs

  FlowSpec flows{5, 2.0};

  // Sweep values.
  std::vector<int> node_sweep = {10, 50, 100};
  std::vector<int> flow_sweep = {5, 10, 15};
  std::vector<double> traffic_sweep = {0.5, 1.0, 2.0, 3.0, 4.0};

  TrainConfig train;
  int exec_horizon = 100;
  int exec_window = 5;
  double eta_mu = 0.01;
  int test_count = 16;

  double perturb_fraction = 0.5;
  double perturb_shift = 0.2;

  int transfer_train_nodes = 20;
  int transfer_train_flows = 10;

  int solver_iterations = 100;
  MomOptions mom;
  DualDescentOptions dd;
  AdmmOptions admm;

  void validate() const;
  nlohmann::json to_json() const;
  // Relative graphml paths in `doc` resolve against `base` when given.
  static ExperimentConfig from_json(const nlohmann::json& doc,
                                    const std::filesystem::path& base = {});
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

struct MetricsRow {
  std::string experiment;
  std::string setting;
  std::uint64_t seed = 0;
  double mean_utility = 0.0;
  double mean_total_queue = 0.0;
  double final_dual_norm = 0.0;
  double wall_ms = 0.0;  // timing sidecar only; keeps metrics.csv bit-stable
  std::string status = "ok";
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  void sort_rows();
  // Columns: experiment, setting, seed, mean_utility, mean_total_queue,
  // final_dual_norm, status.
  void write_csv(const std::filesystem::path& path) const;
  // Columns: experiment, setting, seed, wall_ms.
  void write_timing_csv(const std::filesystem::path& path) const;

  std::vector<const MetricsRow*> select(const std::string& setting) const;
};

struct RatioRow {
  std::string setting;
  double utility_ratio_median = 0.0;
  double utility_ratio_q1 = 0.0;
  double utility_ratio_q3 = 0.0;
  double queue_ratio_median = 0.0;
  double queue_ratio_q1 = 0.0;
  double queue_ratio_q3 = 0.0;
};

// Per-setting ratios of paired rows (matched on setting and seed) with the
// across-seed median and interquartile band. Rejects mismatched pairings.
std::vector<RatioRow> relative_compare(const MetricsTable& sa,
                                       const MetricsTable& admm);

void write_ratio_csv(const std::filesystem::path& path,
                     const std::vector<RatioRow>& rows);

// Deterministic pipeline for one experiment kind: writes metrics.csv, a
// timing sidecar, per-run traces and SVG plots under config.out_dir.
MetricsTable run_experiment(const ExperimentConfig& config);

// Evaluation shared by the comparison experiments: runs the trained policy
// over the horizon, and solves the same instance with ADMM on the mean
// rates, simulating its fixed decision through the queue recursion.
struct EvalMetrics {
  double mean_utility = 0.0;
  double mean_total_queue = 0.0;
  double final_dual_norm = 0.0;
};
EvalMetrics evaluate_policy(const GnnParams& theta, const Topology& topology,
                            const FlowSet& flows, int horizon, int window,
                            double eta_mu, std::uint64_t seed);
EvalMetrics evaluate_admm(const Topology& topology, const FlowSet& flows,
                          int horizon, const AdmmOptions& options,
                          std::uint64_t seed);

}  // namespace numroute
