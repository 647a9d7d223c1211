#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

namespace numroute {

// Floor inside the log utility; admissions can reach zero early in training.
inline constexpr double kUtilityLogFloor = 1e-6;
inline constexpr double kFeasibilityTol = 1e-9;

// Routing decision: per-directed-edge transport rates (edge-major, E x K)
// and per-node admissions (n x K). Off-edge transport is identically zero by
// construction of the storage.
struct RoutingDecision {
  Eigen::MatrixXd edge_flow;  // E x K
  Eigen::MatrixXd admission;  // n x K

  static RoutingDecision zeros(const Topology& topology, int flow_count);
  // Dense n x n transport matrix for flow k (tests, export).
  Eigen::MatrixXd dense_flow(const Topology& topology, int k) const;
};

// Nonnegative multipliers on the flow-conservation constraints.
struct DualState {
  Eigen::MatrixXd mu;  // n x K

  static DualState zeros(int node_count, int flow_count);
  double inf_norm() const {
    return mu.size() == 0 ? 0.0 : mu.cwiseAbs().maxCoeff();
  }
};

// Per-(node, flow) flow-conservation slack g = outflow - inflow - admission,
// zero at each flow's destination, plus violation summaries.
struct SlackReport {
  Eigen::MatrixXd g;  // n x K
  double max_violation = 0.0;
  double sum_violation = 0.0;

  nlohmann::json to_json() const;
};

struct FeasibilityReport {
  double flow_violation = 0.0;       // conservation shortfall, max over (i,k)
  double admission_violation = 0.0;  // max of arrivals - admission
  double capacity_violation = 0.0;   // max of total edge flow - capacity
  bool feasible = false;

  nlohmann::json to_json() const;
};

// Sum over flows and non-destination nodes of log(floor + admission).
double utility(const Eigen::MatrixXd& admission_avg, const FlowSet& flows);

// Conservation slack of the given averaged transport/admission pair.
Eigen::MatrixXd flow_slack_of(const Eigen::MatrixXd& edge_flow,
                              const Eigen::MatrixXd& admission,
                              const Topology& topology, const FlowSet& flows);
SlackReport flow_slack(const RoutingDecision& decision,
                       const Topology& topology, const FlowSet& flows);

// utility + sum of mu * slack.
double lagrangian(const RoutingDecision& decision, const DualState& duals,
                  const Topology& topology, const FlowSet& flows);

// Augmented Lagrangian with the slack variable maximized out in closed form:
// utility(a_avg) + sum mu * d - (rho / 2) * sum d^2 with
// d = min(g_avg, mu / rho). Continuously differentiable in g_avg.
double augmented_lagrangian(const Eigen::MatrixXd& admission_avg,
                            const Eigen::MatrixXd& slack_avg,
                            const DualState& duals, double rho,
                            const FlowSet& flows);
// Single-step form: averages are the decision itself.
double augmented_lagrangian(const RoutingDecision& decision,
                            const DualState& duals, double rho,
                            const Topology& topology, const FlowSet& flows);

FeasibilityReport feasibility_check(const RoutingDecision& decision,
                                    const Eigen::MatrixXd& arrivals,
                                    const Topology& topology,
                                    const FlowSet& flows,
                                    double tol = kFeasibilityTol);

}  // namespace numroute
