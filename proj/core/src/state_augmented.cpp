#include "numroute/state_augmented.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "numroute/rng.hpp"

namespace numroute {

void TrainConfig::validate() const {
  dims.validate();
  if (dims.input_features() != 2) {
    throw std::invalid_argument("training expects F_0 = 2 input features");
  }
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (num_train_samples < 1) {
    throw std::invalid_argument("need at least one training sample");
  }
  if (horizon < 1 || window < 1 || horizon % window != 0) {
    throw std::invalid_argument("window must divide the horizon");
  }
  if (!(eta_theta > 0.0) || !(rho0 > 0.0) || !(rho_decay > 0.0) ||
      !(dual_high > 0.0)) {
    throw std::invalid_argument("rates must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"num_train_samples", num_train_samples},
          {"batch_size", batch_size},
          {"horizon", horizon},
          {"window", window},
          {"eta_theta", eta_theta},
          {"rho0", rho0},
          {"rho_decay", rho_decay},
          {"dual_high", dual_high},
          {"seed", seed},
          {"freeze_draws", freeze_draws},
          {"features", dims.features},
          {"taps", dims.taps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.epochs = doc.value("epochs", c.epochs);
  c.num_train_samples = doc.value("num_train_samples", c.num_train_samples);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.horizon = doc.value("horizon", c.horizon);
  c.window = doc.value("window", c.window);
  c.eta_theta = doc.value("eta_theta", c.eta_theta);
  c.rho0 = doc.value("rho0", c.rho0);
  c.rho_decay = doc.value("rho_decay", c.rho_decay);
  c.dual_high = doc.value("dual_high", c.dual_high);
  c.seed = doc.value("seed", c.seed);
  c.freeze_draws = doc.value("freeze_draws", c.freeze_draws);
  if (doc.contains("features")) {
    c.dims.features = doc.at("features").get<std::vector<int>>();
  }
  if (doc.contains("taps")) {
    c.dims.taps = doc.at("taps").get<std::vector<int>>();
  }
  c.validate();
  return c;
}

Topology TopologySource::make(std::uint64_t seed) const {
  if (fixed) return *fixed;
  return Topology::random_geometric(n, k, seed);
}

std::vector<Eigen::MatrixXd> sample_duals(int count, int node_count,
                                          int flow_count, std::uint64_t seed,
                                          double high) {
  std::vector<Eigen::MatrixXd> duals;
  duals.reserve(count);
  for (int b = 0; b < count; ++b) {
    Rng rng(mix_seed(seed, 0x6475616cULL, static_cast<std::uint64_t>(b)));
    Eigen::MatrixXd mu(node_count, flow_count);
    for (int i = 0; i < node_count; ++i) {
      for (int k = 0; k < flow_count; ++k) mu(i, k) = high * rng.uniform();
    }
    duals.push_back(std::move(mu));
  }
  return duals;
}

Eigen::MatrixXd dual_update(const Eigen::MatrixXd& mu,
                            const Eigen::MatrixXd& avg_slack, double eta_mu) {
  return (mu - eta_mu * avg_slack).cwiseMax(0.0);
}

namespace {

struct RolloutCore {
  PolicyEval eval;
  Eigen::MatrixXd avg_admission;  // n x K over the horizon
  Eigen::MatrixXd avg_slack;
  double lagrangian = 0.0;
};

RolloutCore run_rollout(const GnnParams& theta, const Eigen::MatrixXd& mu,
                        const Topology& topology, const FlowSet& flows,
                        int horizon, double rho, std::uint64_t seed,
                        bool keep_tape, ExecutionTrace* trace) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const int n = flows.node_count();
  const int K = flows.flow_count();

  RolloutCore core;
  core.eval = policy_forward(topology, flows, mu, theta, keep_tape);

  Eigen::MatrixXd arrival_sum = Eigen::MatrixXd::Zero(n, K);
  Eigen::MatrixXd queue = Eigen::MatrixXd::Zero(n, K);
  double queue_sum = 0.0;
  if (trace != nullptr) {
    trace->queues.push_back(queue);
  }
  RoutingDecision step_decision{core.eval.edge_flow,
                                Eigen::MatrixXd::Zero(n, K)};
  for (int t = 0; t < horizon; ++t) {
    const Eigen::MatrixXd arrivals = sample_arrivals(flows, seed, t);
    arrival_sum += arrivals;
    step_decision.admission = arrivals + core.eval.admission_increment;
    queue = queue_update(queue, arrivals, step_decision, topology, flows);
    queue_sum += queue.sum();
    if (trace != nullptr) {
      trace->admissions.push_back(step_decision.admission);
      trace->queues.push_back(queue);
    }
  }

  core.avg_admission =
      arrival_sum / static_cast<double>(horizon) + core.eval.admission_increment;
  core.avg_slack =
      flow_slack_of(core.eval.edge_flow, core.avg_admission, topology, flows);
  core.lagrangian = augmented_lagrangian(core.avg_admission, core.avg_slack,
                                         DualState{mu}, rho, flows);
  if (trace != nullptr) {
    trace->mean_utility = utility(core.avg_admission, flows);
    trace->mean_total_queue = queue_sum / static_cast<double>(horizon);
    trace->final_dual_norm =
        mu.size() == 0 ? 0.0 : mu.cwiseAbs().maxCoeff();
    trace->windows.push_back({0, mu, core.avg_slack, core.eval.edge_flow,
                              trace->mean_utility});
  }
  return core;
}

// d / d avg_slack of the slack-eliminated augmented Lagrangian, with
// destination rows removed from the constraint set.
Eigen::MatrixXd slack_weight(const Eigen::MatrixXd& mu,
                             const Eigen::MatrixXd& avg_slack, double rho,
                             const FlowSet& flows) {
  Eigen::MatrixXd w = (mu - rho * avg_slack).cwiseMax(0.0);
  flows.zero_destination_rows(w);
  return w;
}

}  // namespace

RolloutResult rollout_lagrangian(const GnnParams& theta,
                                 const Eigen::MatrixXd& mu,
                                 const Topology& topology,
                                 const FlowSet& flows, int horizon, double rho,
                                 std::uint64_t seed) {
  RolloutResult result;
  RolloutCore core = run_rollout(theta, mu, topology, flows, horizon, rho,
                                 seed, /*keep_tape=*/false, &result.trace);
  result.lagrangian = core.lagrangian;
  return result;
}

RolloutGradient rollout_lagrangian_gradient(const GnnParams& theta,
                                            const Eigen::MatrixXd& mu,
                                            const Topology& topology,
                                            const FlowSet& flows, int horizon,
                                            double rho, std::uint64_t seed) {
  RolloutCore core = run_rollout(theta, mu, topology, flows, horizon, rho,
                                 seed, /*keep_tape=*/true, nullptr);
  const Eigen::MatrixXd w = slack_weight(mu, core.avg_slack, rho, flows);

  Eigen::MatrixXd d_admission =
      (core.avg_admission.array() + kUtilityLogFloor).inverse().matrix();
  flows.zero_destination_rows(d_admission);
  d_admission -= w;

  const int E = topology.directed_edge_count();
  Eigen::MatrixXd d_edge_flow(E, flows.flow_count());
  for (int e = 0; e < E; ++e) {
    const Edge& edge = topology.edges()[e];
    d_edge_flow.row(e) = w.row(edge.src) - w.row(edge.dst);
  }

  RolloutGradient result;
  result.lagrangian = core.lagrangian;
  result.grad = policy_backward(topology, flows, theta, core.eval, d_edge_flow,
                                d_admission);
  return result;
}

GnnParams train(const TrainConfig& config, const TopologySource& source,
                const FlowSpec& spec, TrainLog* log) {
  config.validate();
  std::vector<Topology> topologies;
  std::vector<FlowSet> flow_sets;
  topologies.reserve(config.num_train_samples);
  flow_sets.reserve(config.num_train_samples);
  for (int i = 0; i < config.num_train_samples; ++i) {
    topologies.push_back(
        source.make(mix_seed(config.seed, 0xA0, static_cast<std::uint64_t>(i))));
    flow_sets.push_back(FlowSet::sample(
        topologies.back(), spec,
        mix_seed(config.seed, 0xB0, static_cast<std::uint64_t>(i))));
  }

  GnnParams params = GnnParams::init(config.dims, mix_seed(config.seed, 0xC0));
  AdamState adam = AdamState::zeros(config.dims.param_count());
  const int iters_per_epoch =
      (config.num_train_samples + config.batch_size - 1) / config.batch_size;
  double rho = config.rho0;
  int global_iter = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int it = 0; it < iters_per_epoch; ++it) {
      Eigen::VectorXd grad_sum =
          Eigen::VectorXd::Zero(config.dims.param_count());
      double batch_lagrangian = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        const int sample =
            (it * config.batch_size + b) % config.num_train_samples;
        const Topology& topo = topologies[sample];
        const FlowSet& flows = flow_sets[sample];
        const std::uint64_t draw =
            config.freeze_draws
                ? static_cast<std::uint64_t>(b)
                : static_cast<std::uint64_t>(global_iter) * config.batch_size +
                      b;
        Eigen::MatrixXd mu =
            sample_duals(1, topo.node_count(), flows.flow_count(),
                         mix_seed(config.seed, 0xD0, draw),
                         config.dual_high)[0];
        // Destination constraints are vacuous and execution holds their
        // duals at zero; training inputs match that.
        flows.zero_destination_rows(mu);
        RolloutGradient rollout = rollout_lagrangian_gradient(
            params, mu, topo, flows, config.horizon, rho,
            mix_seed(config.seed, 0xE0, draw));
        if (!std::isfinite(rollout.lagrangian)) {
          throw GradientError("non-finite training loss at epoch " +
                              std::to_string(epoch) + ", batch element " +
                              std::to_string(b));
        }
        batch_lagrangian += rollout.lagrangian;
        grad_sum += rollout.grad.flatten();
      }
      batch_lagrangian /= config.batch_size;
      const GnnParams grad = GnnParams::unflatten(
          config.dims, grad_sum / static_cast<double>(config.batch_size));
      adam_ascend(params, grad, adam, config.eta_theta);
      if (!params.all_finite()) {
        throw GradientError("parameters diverged at epoch " +
                            std::to_string(epoch) + ", iteration " +
                            std::to_string(global_iter));
      }
      if (log != nullptr) {
        log->records.push_back({global_iter, epoch, batch_lagrangian, rho});
      }
      ++global_iter;
    }
    rho *= config.rho_decay;
  }
  return params;
}

ExecutionTrace execute(const GnnParams& theta, const Topology& topology,
                       const FlowSet& flows, int horizon, int window,
                       double eta_mu, std::uint64_t seed) {
  if (horizon < 1 || window < 1 || horizon % window != 0) {
    throw std::invalid_argument("window must divide the horizon");
  }
  if (!(eta_mu > 0.0)) throw std::invalid_argument("eta_mu must be positive");
  const int n = flows.node_count();
  const int K = flows.flow_count();

  ExecutionTrace trace;
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(n, K);
  Eigen::MatrixXd queue = Eigen::MatrixXd::Zero(n, K);
  trace.queues.push_back(queue);
  Eigen::MatrixXd admission_sum = Eigen::MatrixXd::Zero(n, K);
  double queue_sum = 0.0;

  PolicyEval eval;
  RoutingDecision step_decision = RoutingDecision::zeros(topology, K);
  Eigen::MatrixXd window_slack = Eigen::MatrixXd::Zero(n, K);
  Eigen::MatrixXd window_admission = Eigen::MatrixXd::Zero(n, K);
  int m = 0;

  for (int t = 0; t < horizon; ++t) {
    if (t % window == 0) {
      eval = policy_forward(topology, flows, mu, theta, /*keep_tape=*/false);
      step_decision.edge_flow = eval.edge_flow;
      window_slack.setZero();
      window_admission.setZero();
    }
    const Eigen::MatrixXd arrivals = sample_arrivals(flows, seed, t);
    step_decision.admission = arrivals + eval.admission_increment;
    admission_sum += step_decision.admission;
    window_admission += step_decision.admission;
    window_slack += flow_slack_of(step_decision.edge_flow,
                                  step_decision.admission, topology, flows);
    queue = queue_update(queue, arrivals, step_decision, topology, flows);
    queue_sum += queue.sum();
    trace.admissions.push_back(step_decision.admission);
    trace.queues.push_back(queue);

    if ((t + 1) % window == 0) {
      const Eigen::MatrixXd avg_slack = window_slack / window;
      const Eigen::MatrixXd avg_admission = window_admission / window;
      trace.windows.push_back({m, mu, avg_slack, step_decision.edge_flow,
                               utility(avg_admission, flows)});
      mu = dual_update(mu, avg_slack, eta_mu);
      ++m;
    }
  }

  trace.mean_utility =
      utility(admission_sum / static_cast<double>(horizon), flows);
  trace.mean_total_queue = queue_sum / static_cast<double>(horizon);
  trace.final_dual_norm = mu.size() == 0 ? 0.0 : mu.cwiseAbs().maxCoeff();
  return trace;
}

void ExecutionTrace::write_step_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "t,node,flow,admission,queue_length\n";
  char buffer[96];
  for (size_t t = 0; t < admissions.size(); ++t) {
    const Eigen::MatrixXd& a = admissions[t];
    const Eigen::MatrixXd& q = queues[t + 1];
    for (int i = 0; i < a.rows(); ++i) {
      for (int k = 0; k < a.cols(); ++k) {
        std::snprintf(buffer, sizeof(buffer), "%zu,%d,%d,%.10g,%.10g\n", t, i,
                      k, a(i, k), q(i, k));
        out << buffer;
      }
    }
  }
}

void ExecutionTrace::write_window_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "m,node,flow,mu,slack\n";
  char buffer[96];
  for (const WindowRecord& w : windows) {
    for (int i = 0; i < w.mu.rows(); ++i) {
      for (int k = 0; k < w.mu.cols(); ++k) {
        std::snprintf(buffer, sizeof(buffer), "%d,%d,%d,%.10g,%.10g\n",
                      w.index, i, k, w.mu(i, k), w.avg_slack(i, k));
        out << buffer;
      }
    }
  }
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "iteration,epoch,batch_lagrangian,rho\n";
  char buffer[96];
  for (const TrainRecord& r : records) {
    std::snprintf(buffer, sizeof(buffer), "%d,%d,%.10g,%.10g\n", r.iteration,
                  r.epoch, r.batch_lagrangian, r.rho);
    out << buffer;
  }
}

}  // namespace numroute
