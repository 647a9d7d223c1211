#include "numroute/traffic.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "numroute/num_core.hpp"
#include "numroute/rng.hpp"

namespace numroute {

FlowSet::FlowSet(int node_count, std::vector<int> destinations,
                 Eigen::MatrixXd mean_rates)
    : node_count_(node_count), destinations_(std::move(destinations)),
      mean_rates_(std::move(mean_rates)) {
  const int K = flow_count();
  if (K < 1) throw std::invalid_argument("flow count must be >= 1");
  if (mean_rates_.rows() != node_count_ || mean_rates_.cols() != K) {
    throw std::invalid_argument("mean_rates must be node_count x flow_count");
  }
  if ((mean_rates_.array() < 0.0).any()) {
    throw std::invalid_argument("mean rates must be nonnegative");
  }
  for (int k = 0; k < K; ++k) {
    const int dest = destinations_[k];
    if (dest < 0 || dest >= node_count_) {
      throw std::invalid_argument("flow destination out of range");
    }
    if (mean_rates_(dest, k) != 0.0) {
      throw std::invalid_argument(
          "a destination generates no packets for its own flow");
    }
  }
}

FlowSet FlowSet::sample(const Topology& topology, const FlowSpec& spec,
                        std::uint64_t seed) {
  const int n = topology.node_count();
  Rng rng(mix_seed(seed, 0x666c6f77ULL));  // "flow"
  std::vector<int> destinations;
  if (spec.flow_count <= n) {
    std::vector<int> perm = rng.permutation(n);
    destinations.assign(perm.begin(), perm.begin() + spec.flow_count);
  } else {
    for (int k = 0; k < spec.flow_count; ++k) {
      destinations.push_back(rng.index(n));
    }
  }
  Eigen::MatrixXd rates =
      Eigen::MatrixXd::Constant(n, spec.flow_count, spec.mean_rate);
  for (int k = 0; k < spec.flow_count; ++k) rates(destinations[k], k) = 0.0;
  return FlowSet(n, std::move(destinations), std::move(rates));
}

void FlowSet::zero_destination_rows(Eigen::MatrixXd& m) const {
  for (int k = 0; k < flow_count(); ++k) m(destinations_[k], k) = 0.0;
}

Eigen::MatrixXd sample_arrivals(const FlowSet& flows, std::uint64_t seed,
                                std::int64_t t) {
  Rng rng(mix_seed(seed, 0x61727276ULL, static_cast<std::uint64_t>(t)));
  const int n = flows.node_count();
  const int K = flows.flow_count();
  Eigen::MatrixXd arrivals(n, K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      arrivals(i, k) = 2.0 * flows.mean_rates()(i, k) * rng.uniform();
    }
  }
  return arrivals;
}

Eigen::MatrixXd queue_update(const Eigen::MatrixXd& queues,
                             const Eigen::MatrixXd& arrivals,
                             const RoutingDecision& decision,
                             const Topology& topology, const FlowSet& flows) {
  const int n = flows.node_count();
  const int K = flows.flow_count();
  if (queues.rows() != n || queues.cols() != K || arrivals.rows() != n ||
      arrivals.cols() != K ||
      decision.edge_flow.rows() != topology.directed_edge_count() ||
      decision.edge_flow.cols() != K) {
    throw std::invalid_argument("queue_update: shape mismatch");
  }
  Eigen::MatrixXd next = queues + arrivals;
  for (int e = 0; e < topology.directed_edge_count(); ++e) {
    const Edge& edge = topology.edges()[e];
    next.row(edge.dst) += decision.edge_flow.row(e);
    next.row(edge.src) -= decision.edge_flow.row(e);
  }
  next = next.cwiseMax(0.0);
  flows.zero_destination_rows(next);
  return next;
}

std::vector<Eigen::MatrixXd> rollout_queues(
    const Eigen::MatrixXd& q0, std::span<const Eigen::MatrixXd> arrivals,
    std::span<const RoutingDecision> decisions, const Topology& topology,
    const FlowSet& flows) {
  if (arrivals.size() != decisions.size()) {
    throw std::invalid_argument(
        "rollout_queues: arrivals and decisions must have equal length");
  }
  std::vector<Eigen::MatrixXd> queues;
  queues.reserve(arrivals.size() + 1);
  queues.push_back(q0);
  for (size_t t = 0; t < arrivals.size(); ++t) {
    queues.push_back(
        queue_update(queues.back(), arrivals[t], decisions[t], topology,
                     flows));
  }
  return queues;
}

void write_queue_trajectory_csv(const std::filesystem::path& path,
                                std::span<const Eigen::MatrixXd> queues) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "t,node,flow,queue_length\n";
  char buffer[64];
  for (size_t t = 0; t < queues.size(); ++t) {
    const Eigen::MatrixXd& q = queues[t];
    for (int i = 0; i < q.rows(); ++i) {
      for (int k = 0; k < q.cols(); ++k) {
        std::snprintf(buffer, sizeof(buffer), "%.10g", q(i, k));
        out << t << ',' << i << ',' << k << ',' << buffer << '\n';
      }
    }
  }
}

}  // namespace numroute
