#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "numroute/solvers.hpp"

namespace numroute {

namespace {

Eigen::VectorXd node_out_capacity(const Topology& topo) {
  Eigen::VectorXd cap = Eigen::VectorXd::Zero(topo.node_count());
  for (const Edge& e : topo.edges()) cap(e.src) += e.capacity;
  return cap;
}

}  // namespace

OracleResult oracle_solve(const SolveProblem& problem,
                          const OracleOptions& options) {
  {
    // The subgradient schedule is tuned for unit-scale capacities; larger
    // instances are solved in rescaled units and mapped back.
    double max_cap = 0.0;
    for (const Edge& e : problem.topology.edges()) {
      max_cap = std::max(max_cap, e.capacity);
    }
    const double s = std::max(1.0, max_cap / 2.0);
    if (s > 1.0) {
      std::vector<Edge> edges = problem.topology.edges();
      for (Edge& e : edges) e.capacity /= s;
      Topology scaled_topo(problem.topology.node_count(),
                           problem.topology.positions(), std::move(edges),
                           problem.topology.knn_k());
      FlowSet scaled_flows(problem.flows.node_count(),
                           problem.flows.destinations(),
                           problem.flows.mean_rates() / s);
      const OracleResult scaled = oracle_solve(
          SolveProblem{std::move(scaled_topo), std::move(scaled_flows),
                       problem.arrivals / s},
          options);
      RoutingDecision decision{scaled.decision.edge_flow * s,
                               scaled.decision.admission * s};
      const double value = utility(decision.admission, problem.flows);
      return {std::move(decision), value};
    }
  }
  const Topology& topo = problem.topology;
  const FlowSet& flows = problem.flows;
  const int n = flows.node_count();
  const int K = flows.flow_count();
  if (n > 10 || K > 5) {
    throw std::invalid_argument(
        "oracle_solve only supports desk-scale instances (n <= 10, K <= 5)");
  }

  const Eigen::VectorXd out_cap = node_out_capacity(topo);
  Eigen::MatrixXd admission_hi(n, K);
  for (int k = 0; k < K; ++k) admission_hi.col(k) = out_cap;
  flows.zero_destination_rows(admission_hi);

  Eigen::MatrixXd a = problem.arrivals.cwiseMin(admission_hi);
  flows.zero_destination_rows(a);
  Eigen::MatrixXd r =
      Eigen::MatrixXd::Zero(topo.directed_edge_count(), K);

  Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(n, K);
  Eigen::MatrixXd r_sum = Eigen::MatrixXd::Zero(r.rows(), K);
  const long tail_start = options.iterations / 2;
  long tail_count = 0;

  for (long m = 0; m < options.iterations; ++m) {
    const double step = options.step_scale / static_cast<double>(1 + m);
    Eigen::MatrixXd g = flow_slack_of(r, a, topo, flows);
    // Subgradient of the l1 exact penalty: the penalty weight wherever the
    // conservation constraint is violated.
    Eigen::MatrixXd weight =
        (g.array() < 0.0).cast<double>().matrix() * options.penalty;

    Eigen::MatrixXd a_grad =
        (a.array() + kUtilityLogFloor).inverse().matrix() - weight;
    flows.zero_destination_rows(a_grad);
    a = (a + step * a_grad).cwiseMax(problem.arrivals).cwiseMin(admission_hi);
    flows.zero_destination_rows(a);

    for (int e = 0; e < topo.directed_edge_count(); ++e) {
      const Edge& edge = topo.edges()[e];
      for (int k = 0; k < K; ++k) {
        r(e, k) += step * (weight(edge.src, k) - weight(edge.dst, k));
      }
      r.row(e) = project_capacity_simplex(r.row(e).transpose(),
                                          edge.capacity).transpose();
    }

    if (m >= tail_start) {
      a_sum += a;
      r_sum += r;
      ++tail_count;
    }
  }

  RoutingDecision decision{r_sum / static_cast<double>(tail_count),
                           a_sum / static_cast<double>(tail_count)};
  return {decision, utility(decision.admission, flows)};
}

double grid_search_utility(const SolveProblem& problem, double resolution) {
  const Topology& topo = problem.topology;
  const FlowSet& flows = problem.flows;
  const int n = flows.node_count();
  const int num_edges = topo.directed_edge_count();
  if (flows.flow_count() != 1) {
    throw std::invalid_argument("grid search supports a single flow only");
  }
  if (num_edges > 4) {
    throw std::invalid_argument(
        "grid search supports at most four directed edges");
  }
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("grid resolution must be positive");
  }

  std::vector<int> steps(num_edges);
  int max_steps = 0;
  for (int e = 0; e < num_edges; ++e) {
    steps[e] = static_cast<int>(topo.edges()[e].capacity / resolution + 1e-9);
    max_steps = std::max(max_steps, steps[e]);
  }
  // Net outflow is an integer multiple of the resolution; precompute logs.
  const int table_size = 4 * max_steps + 1;
  std::vector<double> log_table(table_size);
  for (int j = 0; j < table_size; ++j) {
    log_table[j] = std::log(kUtilityLogFloor + j * resolution);
  }

  const int dest = flows.destination(0);
  std::vector<double> min_admission(n);
  for (int i = 0; i < n; ++i) min_admission[i] = problem.arrivals(i, 0);

  std::vector<int> net(n, 0);  // outflow - inflow, in resolution units
  double best = -std::numeric_limits<double>::infinity();

  auto evaluate = [&]() {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == dest) continue;
      if (net[i] < 0) return;
      // Admissions are eliminated: the best feasible choice is the full
      // net outflow, provided it covers the arrivals.
      if (net[i] * resolution < min_admission[i] - 1e-9) return;
      total += log_table[net[i]];
    }
    best = std::max(best, total);
  };

  auto recurse = [&](auto&& self, int e) -> void {
    if (e == num_edges) {
      evaluate();
      return;
    }
    const Edge& edge = topo.edges()[e];
    for (int j = 0; j <= steps[e]; ++j) {
      net[edge.src] += j;
      net[edge.dst] -= j;
      self(self, e + 1);
      net[edge.src] -= j;
      net[edge.dst] += j;
    }
  };
  recurse(recurse, 0);
  return best;
}

}  // namespace numroute
