#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "numroute/topology.hpp"

namespace numroute {

struct RoutingDecision;  // num_core.hpp

// Requested traffic pattern: flow count and the common mean arrival rate
// used at every non-destination (node, flow) pair.
struct FlowSpec {
  int flow_count = 5;
  double mean_rate = 2.0;
};

// Per-flow destination nodes and per-(node, flow) mean arrival rates.
// A destination generates no packets for its own flow.
class FlowSet {
 public:
  FlowSet(int node_count, std::vector<int> destinations,
          Eigen::MatrixXd mean_rates);

  // Destinations sampled without replacement (with replacement when
  // flow_count > n); mean rates constant off-destination.
  static FlowSet sample(const Topology& topology, const FlowSpec& spec,
                        std::uint64_t seed);

  int node_count() const { return node_count_; }
  int flow_count() const { return static_cast<int>(destinations_.size()); }
  const std::vector<int>& destinations() const { return destinations_; }
  int destination(int k) const { return destinations_[k]; }
  const Eigen::MatrixXd& mean_rates() const { return mean_rates_; }
  bool is_destination(int i, int k) const { return destinations_[k] == i; }

  // Zeroes destination rows of an n x K matrix in place.
  void zero_destination_rows(Eigen::MatrixXd& m) const;

 private:
  int node_count_ = 0;
  std::vector<int> destinations_;
  Eigen::MatrixXd mean_rates_;  // n x K
};

// Packet arrivals A_i^k(t) ~ Uniform[0, 2 * mean], i.i.d. across
// (node, flow, step); deterministic given (seed, t).
Eigen::MatrixXd sample_arrivals(const FlowSet& flows, std::uint64_t seed,
                                std::int64_t t);

// One step of the queue recursion: the positive part of
// q + arrivals + inflow - outflow, with destination rows held at zero
// (delivered packets leave the network).
Eigen::MatrixXd queue_update(const Eigen::MatrixXd& queues,
                             const Eigen::MatrixXd& arrivals,
                             const RoutingDecision& decision,
                             const Topology& topology, const FlowSet& flows);

// Iterated queue_update; returns all T + 1 states starting from q0.
std::vector<Eigen::MatrixXd> rollout_queues(
    const Eigen::MatrixXd& q0, std::span<const Eigen::MatrixXd> arrivals,
    std::span<const RoutingDecision> decisions, const Topology& topology,
    const FlowSet& flows);

// Columns: t, node, flow, queue_length.
void write_queue_trajectory_csv(const std::filesystem::path& path,
                                std::span<const Eigen::MatrixXd> queues);

}  // namespace numroute
