#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "numroute/num_core.hpp"
#include "numroute/rng.hpp"
#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

using namespace numroute;

namespace {

Topology path3() {
  return Topology(3, {{{-0.5, 0.0}, {0.0, 0.0}, {0.5, 0.0}}},
                  {{0, 1, 1.0}, {1, 0, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}});
}

FlowSet one_flow_to_node2(double mean) {
  Eigen::MatrixXd rates = Eigen::MatrixXd::Constant(3, 1, mean);
  rates(2, 0) = 0.0;
  return FlowSet(3, {2}, rates);
}

}  // namespace

TEST_CASE("flow set validates destinations and rates") {
  Eigen::MatrixXd rates = Eigen::MatrixXd::Constant(3, 1, 0.5);
  CHECK_THROWS_AS(FlowSet(3, {3}, rates), std::invalid_argument);
  CHECK_THROWS_AS(FlowSet(3, {2}, rates), std::invalid_argument);  // dest rate
  rates(2, 0) = 0.0;
  CHECK_NOTHROW(FlowSet(3, {2}, rates));
  rates(0, 0) = -1.0;
  CHECK_THROWS_AS(FlowSet(3, {2}, rates), std::invalid_argument);
}

TEST_CASE("sampled flow sets have distinct destinations when possible") {
  const Topology t = Topology::random_geometric(10, 4, 3);
  const FlowSet flows = FlowSet::sample(t, {5, 0.2}, 9);
  std::set<int> dests(flows.destinations().begin(),
                      flows.destinations().end());
  CHECK(dests.size() == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(flows.mean_rates()(flows.destination(k), k) == 0.0);
  }
}

TEST_CASE("arrivals: zero mean is identically zero") {
  const FlowSet flows = one_flow_to_node2(0.0);
  const Eigen::MatrixXd a = sample_arrivals(flows, 4, 17);
  CHECK(a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("arrivals are deterministic per (seed, t) and differ across t") {
  const FlowSet flows = one_flow_to_node2(1.0);
  const Eigen::MatrixXd a = sample_arrivals(flows, 4, 17);
  const Eigen::MatrixXd b = sample_arrivals(flows, 4, 17);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd c = sample_arrivals(flows, 4, 18);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("arrival sample mean approaches the configured mean") {
  // Monte-Carlo check: 1e5 draws of a unit-mean entry.
  const FlowSet flows = one_flow_to_node2(1.0);
  double sum = 0.0;
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) {
    sum += sample_arrivals(flows, 11, t)(0, 0);
  }
  CHECK(std::abs(sum / draws - 1.0) < 0.02);
}

TEST_CASE("queue update follows the projected recursion") {
  const Topology topo = path3();
  const FlowSet flows = one_flow_to_node2(0.0);
  RoutingDecision d = RoutingDecision::zeros(topo, 1);

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(3, 1);
  Eigen::MatrixXd arrivals = Eigen::MatrixXd::Zero(3, 1);

  SUBCASE("direct arithmetic") {
    // q = 2, arrivals = 3, inflow = 1, outflow = 4 at node 1.
    q(1, 0) = 2.0;
    arrivals(1, 0) = 3.0;
    d.edge_flow(topo.edge_index(0, 1), 0) = 1.0;  // inflow to node 1
    d.edge_flow(topo.edge_index(1, 0), 0) = 3.0;
    d.edge_flow(topo.edge_index(1, 2), 0) = 1.0;  // outflow 3 + 1 = 4
    const Eigen::MatrixXd next = queue_update(q, arrivals, d, topo, flows);
    CHECK(next(1, 0) == doctest::Approx(2.0));
  }

  SUBCASE("nonnegativity projection") {
    d.edge_flow(topo.edge_index(0, 1), 0) = 5.0;  // outflow 5 from empty queue
    const Eigen::MatrixXd next = queue_update(q, arrivals, d, topo, flows);
    CHECK(next(0, 0) == 0.0);
  }

  SUBCASE("no transport accumulates arrivals off destination") {
    arrivals.setConstant(0.7);
    arrivals(2, 0) = 0.0;
    const Eigen::MatrixXd next =
        queue_update(q, arrivals, RoutingDecision::zeros(topo, 1), topo,
                     flows);
    CHECK(next(0, 0) == doctest::Approx(0.7));
    CHECK(next(1, 0) == doctest::Approx(0.7));
    CHECK(next(2, 0) == 0.0);  // destination discards
  }

  SUBCASE("shape mismatch is rejected") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 1);
    CHECK_THROWS_AS(queue_update(bad, arrivals, d, topo, flows),
                    std::invalid_argument);
  }
}

TEST_CASE("rollout composes queue updates") {
  const Topology topo = path3();
  const FlowSet flows = one_flow_to_node2(0.5);
  const Eigen::MatrixXd q0 = Eigen::MatrixXd::Zero(3, 1);

  SUBCASE("empty rollout returns the initial state") {
    const auto states = rollout_queues(q0, {}, {}, topo, flows);
    REQUIRE(states.size() == 1);
    CHECK(states[0] == q0);
  }

  SUBCASE("single step reduces to queue_update") {
    const Eigen::MatrixXd arrivals = sample_arrivals(flows, 2, 0);
    const RoutingDecision d = RoutingDecision::zeros(topo, 1);
    const std::vector<Eigen::MatrixXd> a = {arrivals};
    const std::vector<RoutingDecision> ds = {d};
    const auto states = rollout_queues(q0, a, ds, topo, flows);
    REQUIRE(states.size() == 2);
    CHECK(states[1] == queue_update(q0, arrivals, d, topo, flows));
  }

  SUBCASE("balanced system is a fixed point") {
    // Outflow exactly matches arrivals plus inflow at every node.
    RoutingDecision d = RoutingDecision::zeros(topo, 1);
    Eigen::MatrixXd arrivals = Eigen::MatrixXd::Zero(3, 1);
    arrivals(0, 0) = 0.3;
    arrivals(1, 0) = 0.2;
    d.edge_flow(topo.edge_index(0, 1), 0) = 0.3;
    d.edge_flow(topo.edge_index(1, 2), 0) = 0.5;
    Eigen::MatrixXd q_start = Eigen::MatrixXd::Constant(3, 1, 1.0);
    q_start(2, 0) = 0.0;
    const std::vector<Eigen::MatrixXd> a(4, arrivals);
    const std::vector<RoutingDecision> ds(4, d);
    const auto states = rollout_queues(q_start, a, ds, topo, flows);
    for (const auto& q : states) {
      CHECK((q - q_start).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    }
  }

  SUBCASE("length mismatch is rejected") {
    const std::vector<Eigen::MatrixXd> a = {q0};
    CHECK_THROWS_AS(rollout_queues(q0, a, {}, topo, flows),
                    std::invalid_argument);
  }
}

TEST_CASE("queues stay nonnegative and destination rows stay zero") {
  const Topology topo = Topology::random_geometric(8, 3, 21);
  const FlowSet flows = FlowSet::sample(topo, {3, 0.4}, 22);
  Rng rng(77);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(8, 3);
  for (int t = 0; t < 40; ++t) {
    RoutingDecision d = RoutingDecision::zeros(topo, 3);
    for (int e = 0; e < topo.directed_edge_count(); ++e) {
      for (int k = 0; k < 3; ++k) {
        d.edge_flow(e, k) = rng.uniform(0.0, 0.5);
      }
    }
    q = queue_update(q, sample_arrivals(flows, 5, t), d, topo, flows);
    CHECK(q.minCoeff() >= 0.0);
    for (int k = 0; k < 3; ++k) CHECK(q(flows.destination(k), k) == 0.0);
  }
}

TEST_CASE("monotonicity: larger arrivals never shrink the updated queue") {
  const Topology topo = Topology::random_geometric(6, 2, 31);
  const FlowSet flows = FlowSet::sample(topo, {2, 0.4}, 32);
  Rng rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    RoutingDecision d = RoutingDecision::zeros(topo, 2);
    for (int e = 0; e < topo.directed_edge_count(); ++e) {
      for (int k = 0; k < 2; ++k) d.edge_flow(e, k) = rng.uniform(0.0, 1.0);
    }
    Eigen::MatrixXd q(6, 2);
    Eigen::MatrixXd arrivals(6, 2);
    for (int i = 0; i < 6; ++i) {
      for (int k = 0; k < 2; ++k) {
        q(i, k) = rng.uniform(0.0, 2.0);
        arrivals(i, k) = rng.uniform(0.0, 1.0);
      }
    }
    flows.zero_destination_rows(q);
    flows.zero_destination_rows(arrivals);
    const Eigen::MatrixXd base = queue_update(q, arrivals, d, topo, flows);
    const int i = rng.index(6);
    const int k = rng.index(2);
    if (flows.is_destination(i, k)) continue;
    Eigen::MatrixXd bumped = arrivals;
    bumped(i, k) += rng.uniform(0.0, 1.0);
    const Eigen::MatrixXd larger = queue_update(q, bumped, d, topo, flows);
    CHECK(larger(i, k) >= base(i, k) - 1e-12);
  }
}

TEST_CASE("queue trajectory csv export") {
  const Topology topo = path3();
  const FlowSet flows = one_flow_to_node2(0.5);
  const Eigen::MatrixXd q0 = Eigen::MatrixXd::Zero(3, 1);
  const std::vector<Eigen::MatrixXd> arrivals = {sample_arrivals(flows, 3, 0)};
  const std::vector<RoutingDecision> ds = {RoutingDecision::zeros(topo, 1)};
  const auto states = rollout_queues(q0, arrivals, ds, topo, flows);
  const auto file =
      std::filesystem::temp_directory_path() / "numroute_queues.csv";
  write_queue_trajectory_csv(file, states);
  std::ifstream in(file);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,node,flow,queue_length");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2 * 3);  // (T + 1) states x n x K
}
