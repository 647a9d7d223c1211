#include "numroute/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "numroute/rng.hpp"

namespace numroute {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

// d utility / d admission, zero at destinations.
Eigen::MatrixXd utility_gradient(const Eigen::MatrixXd& admission,
                                 const FlowSet& flows) {
  Eigen::MatrixXd grad =
      (admission.array() + kUtilityLogFloor).inverse().matrix();
  flows.zero_destination_rows(grad);
  return grad;
}

// Ascent step on (a, r) for an objective whose slack sensitivity is
// `weight` (= dL/dg per (node, flow), destination rows zero), followed by
// projection onto a >= A, r >= 0, per-edge capacity simplex.
void primal_step(const SolveProblem& problem, double eta,
                 const Eigen::MatrixXd& weight, RoutingDecision& d) {
  const Topology& topo = problem.topology;
  const FlowSet& flows = problem.flows;
  const int K = flows.flow_count();

  d.admission += eta * (utility_gradient(d.admission, flows) - weight);
  d.admission = d.admission.cwiseMax(problem.arrivals);
  flows.zero_destination_rows(d.admission);

  for (int e = 0; e < topo.directed_edge_count(); ++e) {
    const Edge& edge = topo.edges()[e];
    for (int k = 0; k < K; ++k) {
      d.edge_flow(e, k) +=
          eta * (weight(edge.src, k) - weight(edge.dst, k));
    }
    d.edge_flow.row(e) = project_capacity_simplex(
        d.edge_flow.row(e).transpose(), edge.capacity).transpose();
  }
}

RoutingDecision initial_decision(const SolveProblem& problem) {
  RoutingDecision d = RoutingDecision::zeros(problem.topology,
                                             problem.flows.flow_count());
  d.admission = problem.arrivals;
  problem.flows.zero_destination_rows(d.admission);
  return d;
}

// The gradient steps below are tuned for unit-scale capacities; larger
// instances are solved in rescaled units and mapped back, which is exactly
// a diagonal preconditioning of the same recursions.
struct ScaledProblem {
  SolveProblem problem;
  double s = 1.0;

  static ScaledProblem make(const SolveProblem& original) {
    double max_cap = 0.0;
    for (const Edge& e : original.topology.edges()) {
      max_cap = std::max(max_cap, e.capacity);
    }
    const double s = std::max(1.0, max_cap / 2.0);
    if (s == 1.0) return {original, 1.0};
    std::vector<Edge> edges = original.topology.edges();
    for (Edge& e : edges) e.capacity /= s;
    Topology scaled_topo(original.topology.node_count(),
                         original.topology.positions(), std::move(edges),
                         original.topology.knn_k());
    FlowSet scaled_flows(original.flows.node_count(),
                         original.flows.destinations(),
                         original.flows.mean_rates() / s);
    return {SolveProblem{std::move(scaled_topo), std::move(scaled_flows),
                         original.arrivals / s},
            s};
  }

  RoutingDecision to_original(const RoutingDecision& d) const {
    if (s == 1.0) return d;
    return {d.edge_flow * s, d.admission * s};
  }
  DualState to_original(const DualState& duals) const {
    if (s == 1.0) return duals;
    return {duals.mu / s};
  }
  RoutingDecision to_scaled(const RoutingDecision& d) const {
    if (s == 1.0) return d;
    return {d.edge_flow / s, d.admission / s};
  }
  Eigen::MatrixXd mu_to_scaled(const Eigen::MatrixXd& mu) const {
    return s == 1.0 ? mu : Eigen::MatrixXd(mu * s);
  }
};

void record_iteration(SolverTrajectory& trajectory, int iteration,
                      const SolveProblem& problem, const RoutingDecision& d,
                      double dual_norm, Clock::time_point start,
                      const char* solver) {
  const double value = utility(d.admission, problem.flows);
  if (!std::isfinite(value)) {
    throw DivergenceError(std::string(solver) +
                          " diverged (non-finite utility) at iteration " +
                          std::to_string(iteration));
  }
  const SlackReport slack = flow_slack(d, problem.topology, problem.flows);
  trajectory.records.push_back(
      {iteration, value, slack.max_violation, dual_norm, elapsed_ms(start)});
}

}  // namespace

SolveProblem SolveProblem::sample(Topology topology, FlowSet flows,
                                  std::uint64_t seed) {
  Eigen::MatrixXd arrivals = sample_arrivals(flows, seed, 0);
  return {std::move(topology), std::move(flows), std::move(arrivals)};
}

void SolverTrajectory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "iteration,utility,violation,dual_norm,wall_ms\n";
  char buffer[160];
  for (const IterationRecord& r : records) {
    std::snprintf(buffer, sizeof(buffer), "%d,%.10g,%.10g,%.10g,%.3f\n",
                  r.iteration, r.utility, r.max_violation, r.dual_norm,
                  r.wall_ms);
    out << buffer;
  }
}

int SolverTrajectory::first_reaching(double threshold) const {
  for (const IterationRecord& r : records) {
    if (r.utility >= threshold) return r.iteration;
  }
  return -1;
}

Eigen::VectorXd project_capacity_simplex(const Eigen::VectorXd& x,
                                         double capacity) {
  Eigen::VectorXd clamped = x.cwiseMax(0.0);
  if (clamped.sum() <= capacity) return clamped;
  // Euclidean projection onto {x >= 0, sum(x) = capacity}.
  std::vector<double> u(x.data(), x.data() + x.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double candidate = (cumulative - capacity) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) {
      tau = candidate;
    } else {
      break;
    }
  }
  return (x.array() - tau).max(0.0).matrix();
}

SolveResult dual_descent_solve(const SolveProblem& problem,
                               const DualDescentOptions& options) {
  if (!(options.eta_primal > 0.0) || !(options.eta_dual >= 0.0)) {
    throw std::invalid_argument("dual descent step sizes must be positive");
  }
  const auto start = Clock::now();
  const ScaledProblem scaled = ScaledProblem::make(problem);
  const FlowSet& flows = scaled.problem.flows;
  RoutingDecision d = options.warm_start != nullptr
                          ? scaled.to_scaled(*options.warm_start)
                          : initial_decision(scaled.problem);
  DualState duals = DualState::zeros(flows.node_count(), flows.flow_count());
  if (options.warm_start_mu != nullptr) {
    duals.mu = scaled.mu_to_scaled(*options.warm_start_mu);
  }
  SolverTrajectory trajectory;
  for (int m = 1; m <= options.iterations; ++m) {
    for (int step = 0; step < options.primal_steps; ++step) {
      primal_step(scaled.problem, options.eta_primal, duals.mu, d);
    }
    Eigen::MatrixXd g = flow_slack_of(d.edge_flow, d.admission,
                                      scaled.problem.topology, flows);
    duals.mu = (duals.mu - options.eta_dual * g).cwiseMax(0.0);
    const RoutingDecision d_out = scaled.to_original(d);
    const DualState duals_out = scaled.to_original(duals);
    record_iteration(trajectory, m, problem, d_out, duals_out.inf_norm(),
                     start, "dual_descent");
    if (options.on_iteration) options.on_iteration(m, d_out, duals_out);
  }
  return {scaled.to_original(d), scaled.to_original(duals),
          std::move(trajectory)};
}

SolveResult mom_solve(const SolveProblem& problem, const MomOptions& options) {
  if (!(options.rho > 0.0)) {
    throw std::invalid_argument("mom requires rho > 0");
  }
  if (options.inner_iterations < 1) {
    throw std::invalid_argument("mom requires inner_iterations >= 1");
  }
  const auto start = Clock::now();
  const ScaledProblem scaled = ScaledProblem::make(problem);
  const FlowSet& flows = scaled.problem.flows;
  RoutingDecision d = options.warm_start != nullptr
                          ? scaled.to_scaled(*options.warm_start)
                          : initial_decision(scaled.problem);
  DualState duals = DualState::zeros(flows.node_count(), flows.flow_count());
  if (options.warm_start_mu != nullptr) {
    duals.mu = scaled.mu_to_scaled(*options.warm_start_mu);
  }
  SolverTrajectory trajectory;
  double rho = options.rho;
  for (int m = 1; m <= options.iterations; ++m) {
    for (int step = 0; step < options.inner_iterations; ++step) {
      Eigen::MatrixXd g = flow_slack_of(d.edge_flow, d.admission,
                                        scaled.problem.topology, flows);
      // dL/dg of the slack-eliminated augmented Lagrangian.
      Eigen::MatrixXd weight = (duals.mu - rho * g).cwiseMax(0.0);
      flows.zero_destination_rows(weight);
      primal_step(scaled.problem, options.eta_primal, weight, d);
    }
    Eigen::MatrixXd g = flow_slack_of(d.edge_flow, d.admission,
                                      scaled.problem.topology, flows);
    const double step = options.eta_dual > 0.0 ? options.eta_dual : rho;
    duals.mu = (duals.mu - step * g).cwiseMax(0.0);
    rho *= options.rho_decay;
    const RoutingDecision d_out = scaled.to_original(d);
    const DualState duals_out = scaled.to_original(duals);
    record_iteration(trajectory, m, problem, d_out, duals_out.inf_norm(),
                     start, "mom");
    if (options.on_iteration) options.on_iteration(m, d_out, duals_out);
  }
  return {scaled.to_original(d), scaled.to_original(duals),
          std::move(trajectory)};
}

SolveResult admm_solve(const SolveProblem& problem,
                       const AdmmOptions& options) {
  if (!(options.rho > 0.0)) {
    throw std::invalid_argument("admm requires rho > 0");
  }
  const auto start = Clock::now();
  const ScaledProblem scaled = ScaledProblem::make(problem);
  const FlowSet& flows = scaled.problem.flows;
  const int n = flows.node_count();
  const int K = flows.flow_count();
  AdmmState state{options.warm_start != nullptr
                      ? scaled.to_scaled(*options.warm_start)
                      : initial_decision(scaled.problem),
                  options.warm_start_z != nullptr
                      ? Eigen::MatrixXd(*options.warm_start_z / scaled.s)
                      : Eigen::MatrixXd::Zero(n, K),
                  options.warm_start_mu != nullptr
                      ? Eigen::MatrixXd(*options.warm_start_mu / scaled.s)
                      : Eigen::MatrixXd::Zero(n, K)};
  SolverTrajectory trajectory;
  for (int m = 1; m <= options.iterations; ++m) {
    // (a, r) block: maximize utility - (rho/2) ||g - z - mu||^2.
    for (int step = 0; step < options.inner_iterations; ++step) {
      Eigen::MatrixXd g = flow_slack_of(state.decision.edge_flow,
                                        state.decision.admission,
                                        scaled.problem.topology, flows);
      Eigen::MatrixXd weight = options.rho * (state.z + state.mu - g);
      flows.zero_destination_rows(weight);
      primal_step(scaled.problem, options.eta_primal, weight, state.decision);
    }
    Eigen::MatrixXd g = flow_slack_of(state.decision.edge_flow,
                                      state.decision.admission,
                                      scaled.problem.topology, flows);
    flows.zero_destination_rows(g);
    state.z = (g - state.mu).cwiseMax(0.0);
    state.mu = (state.mu - (g - state.z)).cwiseMax(0.0);
    flows.zero_destination_rows(state.mu);
    const RoutingDecision d_out = scaled.to_original(state.decision);
    const Eigen::MatrixXd mu_out = state.mu * scaled.s;
    const double dual_norm =
        mu_out.size() == 0 ? 0.0 : mu_out.cwiseAbs().maxCoeff();
    record_iteration(trajectory, m, problem, d_out, dual_norm, start, "admm");
    if (options.on_iteration) {
      options.on_iteration(m, d_out, DualState{mu_out});
    }
  }
  return {scaled.to_original(state.decision),
          DualState{Eigen::MatrixXd(state.mu * scaled.s)},
          std::move(trajectory)};
}

}  // namespace numroute
