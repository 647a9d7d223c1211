#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "numroute/gnn.hpp"
#include "numroute/num_core.hpp"
#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

namespace numroute {

struct TrainConfig {
  int epochs = 40;
  int num_train_samples = 128;
  int batch_size = 16;
  int horizon = 100;  // T
  int window = 5;     // T0; must divide the horizon
  double eta_theta = 0.005;
  double rho0 = 0.005;
  double rho_decay = 0.99;  // multiplicative, applied per epoch
  double dual_high = 1.0;   // training duals ~ U[0, dual_high)
  std::uint64_t seed = 1;
  GnnDims dims{{2, 32, 8}, {3, 3}};
  // Debugging aid: reuse the first dual/arrival draw every iteration so a
  // single instance can be overfit deterministically.
  bool freeze_draws = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

// Network family used to draw training realizations: either fresh k-NN
// graphs or one fixed topology.
struct TopologySource {
  std::optional<Topology> fixed;
  int n = 0;
  int k = 0;

  static TopologySource knn(int n, int k) { return {std::nullopt, n, k}; }
  static TopologySource fixed_graph(Topology t) {
    return {std::move(t), 0, 0};
  }
  Topology make(std::uint64_t seed) const;
};

// i.i.d. Uniform[0, high) dual samples; deterministic per (seed, index).
std::vector<Eigen::MatrixXd> sample_duals(int count, int node_count,
                                          int flow_count, std::uint64_t seed,
                                          double high = 1.0);

// mu <- [mu - eta * avg_slack]+ elementwise.
Eigen::MatrixXd dual_update(const Eigen::MatrixXd& mu,
                            const Eigen::MatrixXd& avg_slack, double eta_mu);

struct WindowRecord {
  int index = 0;
  Eigen::MatrixXd mu;         // duals in effect during the window
  Eigen::MatrixXd avg_slack;  // window-averaged conservation slack
  Eigen::MatrixXd edge_flow;  // transport rates used during the window
  double utility = 0.0;       // of the window-averaged admissions
};

struct ExecutionTrace {
  std::vector<Eigen::MatrixXd> admissions;  // T matrices
  std::vector<Eigen::MatrixXd> queues;      // T + 1 matrices
  std::vector<WindowRecord> windows;        // floor(T / T0)
  double mean_utility = 0.0;      // of the horizon-averaged admissions
  double mean_total_queue = 0.0;  // time average of the summed queue
  double final_dual_norm = 0.0;   // infinity norm

  // Columns: t, node, flow, admission, queue_length.
  void write_step_csv(const std::filesystem::path& path) const;
  // Columns: m, node, flow, mu, slack.
  void write_window_csv(const std::filesystem::path& path) const;
};

struct RolloutResult {
  double lagrangian = 0.0;
  ExecutionTrace trace;
};

// Runs `horizon` steps under fixed duals (constant channel): samples
// arrivals, evaluates the policy on (mean rates, duals), updates queues,
// then evaluates the augmented Lagrangian of the time-averaged performance.
RolloutResult rollout_lagrangian(const GnnParams& theta,
                                 const Eigen::MatrixXd& mu,
                                 const Topology& topology,
                                 const FlowSet& flows, int horizon, double rho,
                                 std::uint64_t seed);

struct RolloutGradient {
  double lagrangian = 0.0;
  GnnParams grad;
};

// Exact reverse-mode gradient of the rollout Lagrangian with respect to the
// policy parameters; shares the forward path with rollout_lagrangian.
RolloutGradient rollout_lagrangian_gradient(const GnnParams& theta,
                                            const Eigen::MatrixXd& mu,
                                            const Topology& topology,
                                            const FlowSet& flows, int horizon,
                                            double rho, std::uint64_t seed);

struct TrainRecord {
  int iteration = 0;
  int epoch = 0;
  double batch_lagrangian = 0.0;
  double rho = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  // Columns: iteration, epoch, batch_lagrangian, rho.
  void write_csv(const std::filesystem::path& path) const;
};

// Offline training: every iteration samples a batch of dual vectors and
// network realizations, ascends the parameters by Adam on the batch-mean
// augmented Lagrangian gradient; the penalty decays per epoch.
GnnParams train(const TrainConfig& config, const TopologySource& source,
                const FlowSpec& spec, TrainLog* log = nullptr);

// Online execution: duals start at zero, the policy runs with the current
// window's duals, and every T0 steps the duals take a projected gradient
// step on the window-averaged slack.
ExecutionTrace execute(const GnnParams& theta, const Topology& topology,
                       const FlowSet& flows, int horizon, int window,
                       double eta_mu, std::uint64_t seed);

}  // namespace numroute
