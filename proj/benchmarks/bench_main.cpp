#include <benchmark/benchmark.h>

#include "numroute/gnn.hpp"
#include "numroute/solvers.hpp"
#include "numroute/state_augmented.hpp"
#include "numroute/topology.hpp"

namespace {

using namespace numroute;

void BM_TopologyGenerate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(Topology::random_geometric(n, 4, seed++));
  }
}
BENCHMARK(BM_TopologyGenerate)->Arg(10)->Arg(50)->Arg(100);

void BM_PolicyForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Topology topo = Topology::random_geometric(n, 4, 7);
  const FlowSet flows = FlowSet::sample(topo, {5, 0.3}, 7);
  const GnnParams params = GnnParams::init({{2, 32, 8}, {3, 3}}, 7);
  const Eigen::MatrixXd mu = sample_duals(1, n, 5, 7)[0];
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        policy_forward(topo, flows, mu, params, /*keep_tape=*/false));
  }
}
BENCHMARK(BM_PolicyForward)->Arg(10)->Arg(50)->Arg(100);

void BM_RolloutGradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Topology topo = Topology::random_geometric(n, 4, 7);
  const FlowSet flows = FlowSet::sample(topo, {5, 0.3}, 7);
  const GnnParams params = GnnParams::init({{2, 32, 8}, {3, 3}}, 7);
  const Eigen::MatrixXd mu = sample_duals(1, n, 5, 7)[0];
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rollout_lagrangian_gradient(params, mu, topo, flows, 100, 0.005, 7));
  }
}
BENCHMARK(BM_RolloutGradient)->Arg(10)->Arg(50);

void BM_MomIteration(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Topology topo = Topology::random_geometric(n, 4, 7);
  const FlowSet flows = FlowSet::sample(topo, {5, 0.3}, 7);
  const SolveProblem problem = SolveProblem::sample(topo, flows, 7);
  MomOptions options;
  options.iterations = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mom_solve(problem, options));
  }
}
BENCHMARK(BM_MomIteration)->Arg(10)->Arg(50);

void BM_QueueRollout(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Topology topo = Topology::random_geometric(n, 4, 7);
  const FlowSet flows = FlowSet::sample(topo, {5, 0.3}, 7);
  RoutingDecision d = RoutingDecision::zeros(topo, 5);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, 5);
  const Eigen::MatrixXd arrivals = sample_arrivals(flows, 7, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(queue_update(q, arrivals, d, topo, flows));
  }
}
BENCHMARK(BM_QueueRollout)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
