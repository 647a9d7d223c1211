#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "numroute/num_core.hpp"
#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

namespace numroute {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single-step (T = 1) instance: topology, flows and one arrival draw.
struct SolveProblem {
  Topology topology;
  FlowSet flows;
  Eigen::MatrixXd arrivals;  // n x K

  static SolveProblem sample(Topology topology, FlowSet flows,
                             std::uint64_t seed);
};

struct IterationRecord {
  int iteration = 0;
  double utility = 0.0;
  double max_violation = 0.0;  // flow-conservation shortfall
  double dual_norm = 0.0;      // infinity norm
  double wall_ms = 0.0;        // cumulative
};

struct SolverTrajectory {
  std::vector<IterationRecord> records;

  // Columns: iteration, utility, violation, dual_norm, wall_ms.
  void write_csv(const std::filesystem::path& path) const;
  // First iteration whose utility reaches `threshold`, or -1.
  int first_reaching(double threshold) const;
};

using IterationObserver = std::function<void(
    int iteration, const RoutingDecision&, const DualState&)>;

struct DualDescentOptions {
  int iterations = 4000;
  double eta_primal = 0.003;
  double eta_dual = 0.05;
  int primal_steps = 1;  // gradient-ascent steps per dual update
  const RoutingDecision* warm_start = nullptr;
  const Eigen::MatrixXd* warm_start_mu = nullptr;
  IterationObserver on_iteration;
};

struct MomOptions {
  int iterations = 300;
  double rho = 0.1;
  double rho_decay = 1.0;  // multiplicative, per outer iteration
  int inner_iterations = 50;
  double eta_primal = 0.02;
  double eta_dual = 0.0;  // 0 means the standard choice: step = rho
  const RoutingDecision* warm_start = nullptr;
  const Eigen::MatrixXd* warm_start_mu = nullptr;
  IterationObserver on_iteration;
};

struct AdmmOptions {
  int iterations = 300;
  double rho = 0.5;
  int inner_iterations = 50;
  double eta_primal = 0.05;
  const RoutingDecision* warm_start = nullptr;
  const Eigen::MatrixXd* warm_start_mu = nullptr;
  const Eigen::MatrixXd* warm_start_z = nullptr;
  IterationObserver on_iteration;
};

struct SolveResult {
  RoutingDecision decision;
  DualState duals;  // scaled duals in the ADMM case
  SolverTrajectory trajectory;
};

// Projected dual ascent on the single-step Lagrangian: gradient steps on
// (a, r) projected onto a >= A, r >= 0 and the per-edge capacity simplex,
// then mu <- [mu - eta * g]+.
SolveResult dual_descent_solve(const SolveProblem& problem,
                               const DualDescentOptions& options = {});

// Method of Multipliers: each outer iteration approximately maximizes the
// augmented Lagrangian (slack eliminated in closed form) by projected
// gradient ascent, then updates mu <- [mu - rho * g]+.
SolveResult mom_solve(const SolveProblem& problem,
                      const MomOptions& options = {});

// Scaled ADMM: (a, r) block maximization by projected gradient ascent,
// closed-form slack update z = [g - mu]+, scaled dual update
// mu <- [mu - (g - z)]+.
SolveResult admm_solve(const SolveProblem& problem,
                       const AdmmOptions& options = {});

struct AdmmState {
  RoutingDecision decision;
  Eigen::MatrixXd z;   // n x K, nonnegative slack block
  Eigen::MatrixXd mu;  // n x K, scaled dual
};

struct OracleOptions {
  long iterations = 100000;
  double penalty = 5.0;     // exact-penalty weight; must exceed the
                            // largest optimal multiplier
  double step_scale = 4.0;  // step = step_scale / (1 + m)
};

struct OracleResult {
  RoutingDecision decision;
  double utility = 0.0;
};

// Reference solution by long-horizon projected subgradient ascent on the
// exact (l1) penalized problem with diminishing steps and tail averaging.
// Only intended for desk-scale instances; rejects n > 10 or K > 5.
OracleResult oracle_solve(const SolveProblem& problem,
                          const OracleOptions& options = {});

// Exhaustive lattice search over the transport polytope at the given
// resolution, admissions eliminated in closed form. Supports K = 1 and at
// most four directed edges; used to cross-check oracle_solve.
double grid_search_utility(const SolveProblem& problem,
                           double resolution = 0.01);

// Euclidean projection onto {x >= 0, sum(x) <= capacity}.
Eigen::VectorXd project_capacity_simplex(const Eigen::VectorXd& x,
                                         double capacity);

}  // namespace numroute
