#include "numroute/num_core.hpp"

#include <cmath>
#include <stdexcept>

namespace numroute {

RoutingDecision RoutingDecision::zeros(const Topology& topology,
                                       int flow_count) {
  return {Eigen::MatrixXd::Zero(topology.directed_edge_count(), flow_count),
          Eigen::MatrixXd::Zero(topology.node_count(), flow_count)};
}

Eigen::MatrixXd RoutingDecision::dense_flow(const Topology& topology,
                                            int k) const {
  const int n = topology.node_count();
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n, n);
  for (int e = 0; e < topology.directed_edge_count(); ++e) {
    const Edge& edge = topology.edges()[e];
    dense(edge.src, edge.dst) = edge_flow(e, k);
  }
  return dense;
}

DualState DualState::zeros(int node_count, int flow_count) {
  return {Eigen::MatrixXd::Zero(node_count, flow_count)};
}

double utility(const Eigen::MatrixXd& admission_avg, const FlowSet& flows) {
  double total = 0.0;
  for (int k = 0; k < flows.flow_count(); ++k) {
    for (int i = 0; i < flows.node_count(); ++i) {
      if (flows.is_destination(i, k)) continue;
      total += std::log(kUtilityLogFloor + admission_avg(i, k));
    }
  }
  return total;
}

Eigen::MatrixXd flow_slack_of(const Eigen::MatrixXd& edge_flow,
                              const Eigen::MatrixXd& admission,
                              const Topology& topology, const FlowSet& flows) {
  Eigen::MatrixXd g = -admission;
  for (int e = 0; e < topology.directed_edge_count(); ++e) {
    const Edge& edge = topology.edges()[e];
    g.row(edge.src) += edge_flow.row(e);
    g.row(edge.dst) -= edge_flow.row(e);
  }
  flows.zero_destination_rows(g);
  return g;
}

SlackReport flow_slack(const RoutingDecision& decision,
                       const Topology& topology, const FlowSet& flows) {
  SlackReport report;
  report.g =
      flow_slack_of(decision.edge_flow, decision.admission, topology, flows);
  const Eigen::ArrayXXd violation = (-report.g).array().max(0.0);
  report.max_violation = violation.size() > 0 ? violation.maxCoeff() : 0.0;
  report.sum_violation = violation.sum();
  return report;
}

double lagrangian(const RoutingDecision& decision, const DualState& duals,
                  const Topology& topology, const FlowSet& flows) {
  const Eigen::MatrixXd g =
      flow_slack_of(decision.edge_flow, decision.admission, topology, flows);
  return utility(decision.admission, flows) +
         (duals.mu.array() * g.array()).sum();
}

double augmented_lagrangian(const Eigen::MatrixXd& admission_avg,
                            const Eigen::MatrixXd& slack_avg,
                            const DualState& duals, double rho,
                            const FlowSet& flows) {
  if (!(rho > 0.0)) throw std::invalid_argument("penalty rho must be > 0");
  const Eigen::ArrayXXd d =
      slack_avg.array().min(duals.mu.array() / rho);
  return utility(admission_avg, flows) + (duals.mu.array() * d).sum() -
         0.5 * rho * (d * d).sum();
}

double augmented_lagrangian(const RoutingDecision& decision,
                            const DualState& duals, double rho,
                            const Topology& topology, const FlowSet& flows) {
  const Eigen::MatrixXd g =
      flow_slack_of(decision.edge_flow, decision.admission, topology, flows);
  return augmented_lagrangian(decision.admission, g, duals, rho, flows);
}

FeasibilityReport feasibility_check(const RoutingDecision& decision,
                                    const Eigen::MatrixXd& arrivals,
                                    const Topology& topology,
                                    const FlowSet& flows, double tol) {
  FeasibilityReport report;
  const Eigen::MatrixXd g =
      flow_slack_of(decision.edge_flow, decision.admission, topology, flows);
  report.flow_violation = g.size() > 0 ? (-g).maxCoeff() : 0.0;
  report.flow_violation = std::max(report.flow_violation, 0.0);

  Eigen::MatrixXd admission_gap = arrivals - decision.admission;
  report.admission_violation =
      admission_gap.size() > 0 ? std::max(admission_gap.maxCoeff(), 0.0) : 0.0;

  double capacity_violation = 0.0;
  for (int e = 0; e < topology.directed_edge_count(); ++e) {
    const double total = decision.edge_flow.row(e).sum();
    capacity_violation = std::max(
        capacity_violation, total - topology.edges()[e].capacity);
  }
  report.capacity_violation = std::max(capacity_violation, 0.0);

  report.feasible = report.flow_violation <= tol &&
                    report.admission_violation <= tol &&
                    report.capacity_violation <= tol;
  return report;
}

nlohmann::json SlackReport::to_json() const {
  nlohmann::json doc;
  doc["max_violation"] = max_violation;
  doc["sum_violation"] = sum_violation;
  auto rows = nlohmann::json::array();
  for (int i = 0; i < g.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (int k = 0; k < g.cols(); ++k) row.push_back(g(i, k));
    rows.push_back(std::move(row));
  }
  doc["g"] = std::move(rows);
  return doc;
}

nlohmann::json FeasibilityReport::to_json() const {
  return {{"flow_violation", flow_violation},
          {"admission_violation", admission_violation},
          {"capacity_violation", capacity_violation},
          {"feasible", feasible}};
}

}  // namespace numroute
