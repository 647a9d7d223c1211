// Integration acceptance suite: runs the end-to-end checks the project must
// satisfy and prints one pass/fail line per criterion. Trained models are
// cached on disk so repeated invocations (and later criteria) reuse them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "numroute/experiment.hpp"
#include "numroute/rng.hpp"

using namespace numroute;

namespace {

namespace fs = std::filesystem;

struct Context {
  fs::path cache = "acceptance_cache";

  GnnParams cached_model(const std::string& key,
                         const std::function<GnnParams()>& make) {
    const fs::path file = cache / ("model_" + key + ".json");
    if (fs::exists(file)) {
      return GnnParams::load_checkpoint(file).first;
    }
    GnnParams model = make();
    fs::create_directories(cache);
    const fs::path tmp = cache / ("model_" + key + ".tmp");
    model.save_checkpoint(tmp);
    fs::rename(tmp, file);
    return model;
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

Topology test_topology(int n, int index, int knn = 4) {
  return Topology::random_geometric(
      n, knn, mix_seed(1, 0x7357, static_cast<std::uint64_t>(index)));
}

FlowSet test_flows(const Topology& topo, const FlowSpec& spec, int index) {
  return FlowSet::sample(
      topo, spec, mix_seed(1, 0x7358, static_cast<std::uint64_t>(index)));
}

std::uint64_t arrival_seed(int index) {
  return mix_seed(1, 0x7359, static_cast<std::uint64_t>(index));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fmt(const char* pattern, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof(buffer), pattern, args...);
  return buffer;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: analytic rollout gradient vs central differences.
Outcome criterion_gradient(Context&) {
  const GnnDims dims{{2, 4, 3}, {2, 2}};
  const int horizon = 3;
  const double rho = 0.1;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Topology topo = Topology::random_geometric(5, 2, mix_seed(seed, 11));
    const FlowSet flows = FlowSet::sample(topo, {2, 0.5}, mix_seed(seed, 12));
    const GnnParams params = GnnParams::init(dims, mix_seed(seed, 13));
    const Eigen::MatrixXd mu = sample_duals(1, 5, 2, mix_seed(seed, 14))[0];
    const std::uint64_t roll_seed = mix_seed(seed, 15);

    const RolloutGradient result = rollout_lagrangian_gradient(
        params, mu, topo, flows, horizon, rho, roll_seed);
    const Eigen::VectorXd analytic = result.grad.flatten();
    const Eigen::VectorXd flat = params.flatten();
    for (int i = 0; i < flat.size(); ++i) {
      Eigen::VectorXd up = flat, dn = flat;
      up(i) += h;
      dn(i) -= h;
      const double fd =
          (rollout_lagrangian(GnnParams::unflatten(dims, up), mu, topo, flows,
                              horizon, rho, roll_seed).lagrangian -
           rollout_lagrangian(GnnParams::unflatten(dims, dn), mu, topo, flows,
                              horizon, rho, roll_seed).lagrangian) /
          (2.0 * h);
      const double rel = std::abs(fd - analytic(i)) /
                         std::max({std::abs(fd), std::abs(analytic(i)), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 20 seeds", worst)};
}

// ---------------------------------------------------------------------------
// 2. Permutation equivariance of the end-to-end policy.
Outcome criterion_equivariance(Context&) {
  double worst = 0.0;
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + rng.index(8);
    const int K = 1 + rng.index(4);
    const Topology topo = Topology::random_geometric(n, 3, 3000 + trial);
    const FlowSet flows = FlowSet::sample(topo, {K, 1.0}, 3100 + trial);
    const GnnParams params =
        GnnParams::init({{2, 8, 4}, {3, 3}}, 3200 + trial);
    Eigen::MatrixXd mu(n, K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) mu(i, k) = rng.uniform();
    }
    const PolicyEval eval = policy_forward(topo, flows, mu, params, false);

    const std::vector<int> perm = rng.permutation(n);
    const Topology ptopo = topo.permuted(perm);
    std::vector<int> pdest(K);
    for (int k = 0; k < K; ++k) pdest[k] = perm[flows.destination(k)];
    Eigen::MatrixXd prates(n, K), pmu(n, K);
    for (int i = 0; i < n; ++i) {
      prates.row(perm[i]) = flows.mean_rates().row(i);
      pmu.row(perm[i]) = mu.row(i);
    }
    const FlowSet pflows(n, pdest, prates);
    const PolicyEval peval = policy_forward(ptopo, pflows, pmu, params, false);

    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd dense =
          RoutingDecision{eval.edge_flow, eval.admission_increment}
              .dense_flow(topo, k);
      const Eigen::MatrixXd pdense =
          RoutingDecision{peval.edge_flow, peval.admission_increment}
              .dense_flow(ptopo, k);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          worst = std::max(worst,
                           std::abs(pdense(perm[i], perm[j]) - dense(i, j)));
        }
        worst = std::max(worst, std::abs(peval.admission_increment(perm[i], k) -
                                         eval.admission_increment(i, k)));
      }
    }
  }
  return {worst < 1e-6, fmt("max relabeling mismatch %.3g over 50 pairs", worst)};
}

// ---------------------------------------------------------------------------
// 3. Capacity and minimum constraints hold by construction.
Outcome criterion_feasibility(Context&) {
  double worst_capacity = 0.0;
  double worst_admission = 0.0;
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 4 + rng.index(7);
    const int K = 1 + rng.index(5);
    const Topology topo = Topology::random_geometric(n, 2, 5000 + trial);
    const FlowSet flows = FlowSet::sample(topo, {K, 2.0}, 6000 + trial);
    const GnnParams params =
        GnnParams::init({{2, 5, 3}, {2, 2}}, 7000 + trial);
    Eigen::MatrixXd mu(n, K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) mu(i, k) = 3.0 * rng.uniform();
    }
    const PolicyEval eval = policy_forward(topo, flows, mu, params, false);
    const Eigen::MatrixXd arrivals = sample_arrivals(flows, 8000 + trial, 0);
    const RoutingDecision d{eval.edge_flow,
                            arrivals + eval.admission_increment};
    const FeasibilityReport report =
        feasibility_check(d, arrivals, topo, flows);
    worst_capacity = std::max(worst_capacity, report.capacity_violation);
    worst_admission = std::max(worst_admission, report.admission_violation);
  }
  return {worst_capacity <= 1e-9 && worst_admission <= 1e-9,
          fmt("max capacity violation %.3g, max admission violation %.3g "
              "over 1000 draws",
              worst_capacity, worst_admission)};
}

// ---------------------------------------------------------------------------
// 4. Classic solvers reach the (grid-cross-checked) oracle on 3-node paths.
Outcome criterion_oracle(Context&) {
  struct Instance {
    double c01, c12, arrival;
  };
  const std::vector<Instance> instances = {
      {1.0, 1.0, 0.1}, {1.3, 0.8, 0.15}, {0.9, 1.4, 0.05}};
  std::string detail;
  bool pass = true;
  for (const Instance& inst : instances) {
    Topology topo(3, {{{-0.5, 0.0}, {0.0, 0.0}, {0.5, 0.0}}},
                  {{0, 1, inst.c01}, {1, 0, inst.c01},
                   {1, 2, inst.c12}, {2, 1, inst.c12}});
    Eigen::MatrixXd rates = Eigen::MatrixXd::Constant(3, 1, inst.arrival);
    rates(2, 0) = 0.0;
    FlowSet flows(3, {2}, rates);
    SolveProblem problem{topo, flows, rates};

    const OracleResult oracle = oracle_solve(problem);
    const double grid = grid_search_utility(problem, 0.01);
    if (std::abs(oracle.utility - grid) > 0.01) {
      pass = false;
      detail += fmt("[grid gap %.3g] ", std::abs(oracle.utility - grid));
    }
    const double tol = 0.01 * std::abs(oracle.utility);
    const double dd =
        dual_descent_solve(problem).trajectory.records.back().utility;
    const double mom = mom_solve(problem).trajectory.records.back().utility;
    const double admm = admm_solve(problem).trajectory.records.back().utility;
    for (auto [name, value] : {std::pair{"dd", dd}, {"mom", mom},
                               {"admm", admm}}) {
      if (std::abs(value - oracle.utility) > tol) {
        pass = false;
        detail += fmt("[%s off by %.3g vs tol %.3g] ", name,
                      std::abs(value - oracle.utility), tol);
      }
    }
  }
  if (detail.empty()) detail = "dd, mom, admm all within 1% on 3 instances";
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 5. Convergence ordering: MoM dominates dual descent past burn-in and
//    reaches near-optimal utility in at most half the iterations.
Outcome criterion_ordering(Context&) {
  const int iterations = 100;
  int good_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Topology topo = Topology::random_geometric(10, 4, mix_seed(seed, 1));
    const FlowSet flows = FlowSet::sample(topo, {5, 2.0}, mix_seed(seed, 2));
    const SolveProblem problem =
        SolveProblem::sample(topo, flows, mix_seed(seed, 3));
    DualDescentOptions dd_opts;
    dd_opts.iterations = iterations;
    MomOptions mom_opts;
    mom_opts.iterations = iterations;
    const SolveResult dd = dual_descent_solve(problem, dd_opts);
    const SolveResult mom = mom_solve(problem, mom_opts);
    const OracleResult oracle = oracle_solve(problem);

    bool dominates = true;
    for (int i = 20; i < iterations; ++i) {
      if (mom.trajectory.records[i].utility <
          dd.trajectory.records[i].utility - 1e-9) {
        dominates = false;
        break;
      }
    }
    const double level = oracle.utility - 0.02 * std::abs(oracle.utility);
    int dd_first = dd.trajectory.first_reaching(level);
    const int mom_first = mom.trajectory.first_reaching(level);
    if (dd_first < 0) dd_first = 2 * iterations;
    const bool fast = mom_first > 0 && 2 * mom_first <= dd_first;
    if (dominates && fast) ++good_seeds;
  }
  return {good_seeds >= 8, fmt("%d/10 seeds satisfy both clauses", good_seeds)};
}

// ---------------------------------------------------------------------------
// Shared: the default-configuration model at N = 10, K = 5.
GnnParams default_model(Context& ctx, double mean_rate,
                        const std::string& key, int nodes = 10,
                        std::uint64_t train_seed = 1) {
  return ctx.cached_model(key, [&]() {
    TrainConfig config;  // defaults mirror the shipped training config
    config.seed = train_seed;
    return train(config, TopologySource::knn(nodes, 4),
                 FlowSpec{5, mean_rate});
  });
}

// 6. Policy vs time-coupled ADMM on held-out test networks.
Outcome criterion_policy_vs_admm(Context& ctx) {
  const GnnParams model = default_model(ctx, 2.0, "n10_m2");
  double sa_u = 0.0, sa_q = 0.0, admm_u = 0.0, admm_q = 0.0;
  AdmmOptions admm_opts;
  admm_opts.inner_iterations = 1;
  const int tests = 16;
  for (int i = 0; i < tests; ++i) {
    const Topology topo = test_topology(10, i);
    const FlowSet flows = test_flows(topo, {5, 2.0}, i);
    const std::uint64_t seed = arrival_seed(i);
    const EvalMetrics sa =
        evaluate_policy(model, topo, flows, 100, 5, 0.01, seed);
    const EvalMetrics admm =
        evaluate_admm(topo, flows, 100, admm_opts, seed);
    sa_u += sa.mean_utility / tests;
    sa_q += sa.mean_total_queue / tests;
    admm_u += admm.mean_utility / tests;
    admm_q += admm.mean_total_queue / tests;
  }
  const bool utility_ok = sa_u >= 0.9 * admm_u;
  const bool queue_ok = sa_q <= admm_q;
  return {utility_ok && queue_ok,
          fmt("policy utility %.1f vs admm %.1f (need >= %.1f: %s); "
              "policy queue %.1f vs admm %.1f (need <=: %s)",
              sa_u, admm_u, 0.9 * admm_u, utility_ok ? "ok" : "MISS", sa_q,
              admm_q, queue_ok ? "ok" : "MISS")};
}

// ---------------------------------------------------------------------------
// 7. Transfer across network and flow sizes.
Outcome criterion_transfer(Context& ctx) {
  const GnnParams transfer = default_model(ctx, 2.0, "n20_m2", 20);
  const GnnParams matched = default_model(ctx, 2.0, "n50_m2", 50);

  // Executes without error across sizes and flow counts.
  for (int n : {10, 50, 100}) {
    for (int i = 0; i < 3; ++i) {
      const Topology topo = test_topology(n, 40 + i);
      const FlowSet flows = test_flows(topo, {5, 2.0}, 40 + i);
      const EvalMetrics m = evaluate_policy(transfer, topo, flows, 100, 5,
                                            0.01, arrival_seed(40 + i));
      if (!std::isfinite(m.mean_utility)) {
        return {false, fmt("non-finite utility at n=%d", n)};
      }
    }
  }
  for (int k : {10, 15}) {
    const Topology topo = test_topology(50, 60 + k);
    const FlowSet flows = test_flows(topo, {k, 2.0}, 60 + k);
    const EvalMetrics m = evaluate_policy(transfer, topo, flows, 100, 5, 0.01,
                                          arrival_seed(60 + k));
    if (!std::isfinite(m.mean_utility)) {
      return {false, fmt("non-finite utility at k=%d", k)};
    }
  }

  // Median utility at N = 50 within 15% of the size-matched model.
  std::vector<double> transfer_utils, matched_utils;
  for (int i = 0; i < 16; ++i) {
    const Topology topo = test_topology(50, i);
    const FlowSet flows = test_flows(topo, {5, 2.0}, i);
    const std::uint64_t seed = arrival_seed(i);
    transfer_utils.push_back(
        evaluate_policy(transfer, topo, flows, 100, 5, 0.01, seed)
            .mean_utility);
    matched_utils.push_back(
        evaluate_policy(matched, topo, flows, 100, 5, 0.01, seed)
            .mean_utility);
  }
  const double med_t = median(transfer_utils);
  const double med_m = median(matched_utils);
  const double gap = std::abs(med_t - med_m) / std::max(std::abs(med_m), 1e-12);
  return {gap <= 0.15,
          fmt("median utility transferred %.1f vs matched %.1f (gap %.1f%%)",
              med_t, med_m, 100.0 * gap)};
}

// ---------------------------------------------------------------------------
// 8. Stability under node-position perturbation.
Outcome criterion_perturbation(Context& ctx) {
  const GnnParams model = default_model(ctx, 2.0, "n10_m2");
  std::vector<double> degradations;
  for (int i = 0; i < 16; ++i) {
    const Topology topo = test_topology(10, i);
    const Topology shaken = topo.perturbed(
        0.5, 0.2, mix_seed(1, 0x7065, static_cast<std::uint64_t>(i)));
    const FlowSet flows = test_flows(topo, {5, 2.0}, i);
    const std::uint64_t seed = arrival_seed(i);
    const double base =
        evaluate_policy(model, topo, flows, 100, 5, 0.01, seed).mean_utility;
    const double moved =
        evaluate_policy(model, shaken, flows, 100, 5, 0.01, seed).mean_utility;
    degradations.push_back((base - moved) / std::max(std::abs(base), 1e-12));
  }
  const double med = median(degradations);
  return {med <= 0.15, fmt("median utility degradation %.1f%% over 16 graphs",
                           100.0 * med)};
}

// ---------------------------------------------------------------------------
// 9. Dual settling is followed by bounded queue growth.
Outcome criterion_dual_queue(Context& ctx) {
  // Mirrors the shipped dual-trace configuration.
  const GnnParams model = default_model(ctx, 1.0, "n10_m1_s5", 10, 5);
  const Topology topo = test_topology(10, 0);
  const FlowSet flows = test_flows(topo, {5, 1.0}, 0);
  const ExecutionTrace trace =
      execute(model, topo, flows, 100, 5, 0.005, arrival_seed(0));

  std::vector<double> deltas;
  for (size_t m = 0; m + 1 < trace.windows.size(); ++m) {
    deltas.push_back((trace.windows[m + 1].mu - trace.windows[m].mu)
                         .cwiseAbs()
                         .maxCoeff());
  }
  const double peak =
      deltas.empty() ? 0.0 : *std::max_element(deltas.begin(), deltas.end());
  int settle = -1;
  for (size_t m = 0; m < deltas.size(); ++m) {
    if (deltas[m] < 0.1 * peak) {
      settle = static_cast<int>(m);
      break;
    }
  }
  if (settle < 0) {
    return {false, "dual steps never fell below 10% of their peak"};
  }
  const int t0 = (settle + 1) * 5;
  double worst = 0.0;
  for (int i = 0; i < topo.node_count(); ++i) {
    const double growth =
        (trace.queues[100].row(i).sum() - trace.queues[t0].row(i).sum()) /
        static_cast<double>(100 - t0);
    worst = std::max(worst, growth);
  }
  return {worst <= 0.05,
          fmt("settled at window %d; max per-node queue growth %.4f "
              "packets/step afterwards",
              settle, worst)};
}

// ---------------------------------------------------------------------------
// 10. Topology ingestion and the full pipeline on the bundled networks.
Outcome criterion_zoo(Context&) {
  const fs::path dir = fs::path(NUMROUTE_DATA_DIR) / "zoo";
  std::string detail;
  for (const char* name : {"Nsfnet", "Missouri", "Sinet", "Interoute"}) {
    const fs::path file = dir / (std::string(name) + ".graphml");
    // Independent element count straight off the text.
    std::ifstream in(file);
    if (!in) return {false, fmt("missing file %s", file.string().c_str())};
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    auto count = [&](const std::string& needle) {
      size_t pos = 0;
      int total = 0;
      while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++total;
        pos += needle.size();
      }
      return total;
    };
    const int file_nodes = count("<node ");
    const int file_edges = count("<edge ");

    const Topology topo = Topology::from_graphml(file);
    if (topo.node_count() != file_nodes ||
        topo.directed_edge_count() != 2 * file_edges) {
      return {false,
              fmt("%s: loader saw %d nodes / %d directed edges, file has %d "
                  "nodes / %d edges",
                  name, topo.node_count(), topo.directed_edge_count(),
                  file_nodes, file_edges)};
    }

    // Full pipeline at K = 5 on the fixed topology.
    TrainConfig config;
    config.epochs = 4;
    config.num_train_samples = 16;
    config.batch_size = 8;
    const FlowSpec spec{5, 1.0};
    const GnnParams model =
        train(config, TopologySource::fixed_graph(topo), spec);
    const FlowSet flows = FlowSet::sample(topo, spec, 77);
    const ExecutionTrace trace =
        execute(model, topo, flows, 100, 5, 0.01, 78);
    if (!std::isfinite(trace.mean_utility)) {
      return {false, fmt("%s: non-finite execution utility", name)};
    }
    detail += fmt("%s %d/%d ", name, file_nodes, file_edges);
  }
  return {true, "loaded, trained and executed: " + detail};
}

struct Criterion {
  int index;
  const char* name;
  std::function<Outcome(Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    if (arg == "--cache" && i + 1 < argc) ctx.cache = argv[++i];
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", criterion_gradient},
      {2, "permutation equivariance", criterion_equivariance},
      {3, "feasibility by construction", criterion_feasibility},
      {4, "oracle equivalence", criterion_oracle},
      {5, "solver convergence ordering", criterion_ordering},
      {6, "policy vs admm", criterion_policy_vs_admm},
      {7, "transferability", criterion_transfer},
      {8, "perturbation stability", criterion_perturbation},
      {9, "dual and queue coupling", criterion_dual_queue},
      {10, "topology zoo pipeline", criterion_zoo},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    if (only != 0 && criterion.index != only) continue;
    Outcome outcome;
    try {
      outcome = criterion.run(ctx);
    } catch (const std::exception& ex) {
      outcome = {false, std::string("exception: ") + ex.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n",
                outcome.pass ? "PASS" : "FAIL", criterion.index,
                criterion.name, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures;
}
