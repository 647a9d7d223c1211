#include "numroute/gnn.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "numroute/rng.hpp"

namespace numroute {

long GnnDims::param_count() const {
  validate();
  long count = 0;
  for (size_t l = 0; l < taps.size(); ++l) {
    count += static_cast<long>(taps[l]) * features[l] * features[l + 1];
  }
  const long out = features.back();
  return count + out * out + out;
}

void GnnDims::validate() const {
  if (features.size() < 2 || taps.size() + 1 != features.size()) {
    throw std::invalid_argument(
        "gnn dims: need L >= 1 layers with F_0..F_L features");
  }
  for (int f : features) {
    if (f < 1) throw std::invalid_argument("gnn dims: features must be >= 1");
  }
  for (int t : taps) {
    if (t < 1) throw std::invalid_argument("gnn dims: taps must be >= 1");
  }
}

AdamState AdamState::zeros(long param_count) {
  AdamState state;
  state.m = Eigen::VectorXd::Zero(param_count);
  state.v = Eigen::VectorXd::Zero(param_count);
  return state;
}

GnnParams GnnParams::zeros(const GnnDims& dims) {
  dims.validate();
  GnnParams p;
  p.dims = dims;
  for (int l = 0; l < dims.layer_count(); ++l) {
    p.filters.emplace_back(
        dims.taps[l],
        Eigen::MatrixXd::Zero(dims.features[l], dims.features[l + 1]));
  }
  const int out = dims.output_features();
  p.w_r = Eigen::MatrixXd::Zero(out, out);
  p.w_a = Eigen::VectorXd::Zero(out);
  return p;
}

GnnParams GnnParams::init(const GnnDims& dims, std::uint64_t seed) {
  GnnParams p = zeros(dims);
  Rng rng(mix_seed(seed, 0x676e6e69ULL));  // "gnni"
  for (int l = 0; l < dims.layer_count(); ++l) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(dims.taps[l]) * dims.features[l]);
    for (auto& h : p.filters[l]) {
      for (int f = 0; f < h.rows(); ++f) {
        for (int g = 0; g < h.cols(); ++g) {
          h(f, g) = rng.uniform(-bound, bound);
        }
      }
    }
  }
  const double head_bound = 1.0 / std::sqrt(dims.output_features());
  for (int i = 0; i < p.w_r.rows(); ++i) {
    for (int j = 0; j < p.w_r.cols(); ++j) {
      p.w_r(i, j) = rng.uniform(-head_bound, head_bound);
    }
  }
  for (int i = 0; i < p.w_a.size(); ++i) {
    p.w_a(i) = rng.uniform(-head_bound, head_bound);
  }
  return p;
}

Eigen::VectorXd GnnParams::flatten() const {
  Eigen::VectorXd flat(dims.param_count());
  long pos = 0;
  for (const auto& layer : filters) {
    for (const auto& h : layer) {
      for (int f = 0; f < h.rows(); ++f) {
        for (int g = 0; g < h.cols(); ++g) flat(pos++) = h(f, g);
      }
    }
  }
  for (int i = 0; i < w_r.rows(); ++i) {
    for (int j = 0; j < w_r.cols(); ++j) flat(pos++) = w_r(i, j);
  }
  for (int i = 0; i < w_a.size(); ++i) flat(pos++) = w_a(i);
  return flat;
}

GnnParams GnnParams::unflatten(const GnnDims& dims,
                               const Eigen::VectorXd& flat) {
  if (flat.size() != dims.param_count()) {
    throw std::invalid_argument("flat parameter vector has the wrong length");
  }
  GnnParams p = zeros(dims);
  long pos = 0;
  for (auto& layer : p.filters) {
    for (auto& h : layer) {
      for (int f = 0; f < h.rows(); ++f) {
        for (int g = 0; g < h.cols(); ++g) h(f, g) = flat(pos++);
      }
    }
  }
  for (int i = 0; i < p.w_r.rows(); ++i) {
    for (int j = 0; j < p.w_r.cols(); ++j) p.w_r(i, j) = flat(pos++);
  }
  for (int i = 0; i < p.w_a.size(); ++i) p.w_a(i) = flat(pos++);
  return p;
}

bool GnnParams::all_finite() const {
  for (const auto& layer : filters) {
    for (const auto& h : layer) {
      if (!h.allFinite()) return false;
    }
  }
  return w_r.allFinite() && w_a.allFinite();
}

void adam_ascend(GnnParams& params, const GnnParams& grad, AdamState& state,
                 double eta) {
  const Eigen::VectorXd g = grad.flatten();
  Eigen::VectorXd x = params.flatten();
  if (state.m.size() != g.size()) {
    throw std::invalid_argument("adam state does not match parameter count");
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseProduct(g);
  const double m_corr = 1.0 - std::pow(state.beta1, state.step);
  const double v_corr = 1.0 - std::pow(state.beta2, state.step);
  x.array() += eta * (state.m.array() / m_corr) /
               ((state.v.array() / v_corr).sqrt() + state.epsilon);
  params = GnnParams::unflatten(params.dims, x);
}

Eigen::MatrixXd graph_filter_apply(const Eigen::MatrixXd& S,
                                   const Eigen::MatrixXd& z,
                                   const std::vector<Eigen::MatrixXd>& taps) {
  if (taps.empty()) throw std::invalid_argument("filter needs taps >= 1");
  if (S.rows() != S.cols() || S.rows() != z.rows()) {
    throw std::invalid_argument("graph_filter_apply: shape mismatch");
  }
  for (const auto& h : taps) {
    if (h.rows() != z.cols() || h.cols() != taps.front().cols()) {
      throw std::invalid_argument("graph_filter_apply: tap shape mismatch");
    }
  }
  Eigen::MatrixXd shifted = z;
  Eigen::MatrixXd y = shifted * taps[0];
  for (size_t p = 1; p < taps.size(); ++p) {
    shifted = S * shifted;
    y += shifted * taps[p];
  }
  return y;
}

Eigen::MatrixXd gnn_forward(const Eigen::MatrixXd& S, const Eigen::MatrixXd& x,
                            const GnnParams& params, ForwardTape* tape) {
  const int L = params.dims.layer_count();
  if (x.cols() != params.dims.input_features()) {
    throw std::invalid_argument("gnn_forward: input feature width mismatch");
  }
  if (tape != nullptr) tape->layers.assign(L, {});
  Eigen::MatrixXd z = x;
  for (int l = 0; l < L; ++l) {
    const auto& taps = params.filters[l];
    std::vector<Eigen::MatrixXd> shifted;
    shifted.reserve(taps.size());
    shifted.push_back(z);
    Eigen::MatrixXd y = z * taps[0];
    for (size_t p = 1; p < taps.size(); ++p) {
      shifted.push_back(S * shifted.back());
      y += shifted.back() * taps[p];
    }
    if (!y.allFinite()) {
      throw GradientError("non-finite activations at gnn layer " +
                          std::to_string(l));
    }
    if (tape != nullptr) {
      tape->layers[l].shifted_inputs = std::move(shifted);
      tape->layers[l].preactivation = y;
    }
    z = (l + 1 < L) ? y.cwiseMax(0.0) : y;
  }
  return z;
}

void gnn_backward(const Eigen::MatrixXd& S, const GnnParams& params,
                  const ForwardTape& tape, Eigen::MatrixXd d_embedding,
                  GnnParams& grad) {
  const int L = params.dims.layer_count();
  if (static_cast<int>(tape.layers.size()) != L) {
    throw std::invalid_argument(
        "gnn_backward needs a tape recorded by gnn_forward");
  }
  Eigen::MatrixXd dz = std::move(d_embedding);
  for (int l = L - 1; l >= 0; --l) {
    const LayerTape& layer = tape.layers[l];
    Eigen::MatrixXd dy = dz;
    if (l + 1 < L) {
      dy = (layer.preactivation.array() > 0.0)
               .select(dz, Eigen::MatrixXd::Zero(dz.rows(), dz.cols()));
    }
    const auto& taps = params.filters[l];
    Eigen::MatrixXd dz_prev =
        Eigen::MatrixXd::Zero(layer.shifted_inputs[0].rows(),
                              layer.shifted_inputs[0].cols());
    Eigen::MatrixXd v = dy;
    for (size_t p = 0; p < taps.size(); ++p) {
      grad.filters[l][p] += layer.shifted_inputs[p].transpose() * dy;
      if (p > 0) v = S.transpose() * v;
      dz_prev += (p == 0 ? dy : v) * taps[p].transpose();
    }
    dz = std::move(dz_prev);
  }
}

Eigen::MatrixXd node_features(const FlowSet& flows, const Eigen::MatrixXd& mu,
                              int k) {
  Eigen::MatrixXd x(flows.node_count(), 2);
  x.col(0) = flows.mean_rates().col(k);
  x.col(1) = mu.col(k);
  return x;
}

namespace {

// Logits, softmax shares and flows for all edges; the idle slot holds the
// fixed logit 0, so shares over flows sum strictly below one.
void routing_head_full(const std::vector<Eigen::MatrixXd>& embeddings,
                       const std::vector<Eigen::MatrixXd>& bilinear,
                       const Topology& topology, Eigen::MatrixXd& logits,
                       Eigen::MatrixXd& share, Eigen::MatrixXd& flow) {
  const int E = topology.directed_edge_count();
  const int K = static_cast<int>(embeddings.size());
  logits.resize(E, K);
  share.resize(E, K);
  flow.resize(E, K);
  for (int e = 0; e < E; ++e) {
    const Edge& edge = topology.edges()[e];
    for (int k = 0; k < K; ++k) {
      logits(e, k) = bilinear[k].row(edge.src).dot(embeddings[k].row(edge.dst));
    }
    const double peak = std::max(0.0, logits.row(e).maxCoeff());
    double denom = std::exp(-peak);
    for (int k = 0; k < K; ++k) {
      share(e, k) = std::exp(logits(e, k) - peak);
      denom += share(e, k);
    }
    share.row(e) /= denom;
    flow.row(e) = share.row(e) * edge.capacity;
  }
}

}  // namespace

Eigen::MatrixXd routing_head(const std::vector<Eigen::MatrixXd>& embeddings,
                             const Eigen::MatrixXd& w_r,
                             const Topology& topology) {
  std::vector<Eigen::MatrixXd> bilinear;
  bilinear.reserve(embeddings.size());
  for (const auto& y : embeddings) bilinear.push_back(y * w_r);
  Eigen::MatrixXd logits, share, flow;
  routing_head_full(embeddings, bilinear, topology, logits, share, flow);
  return flow;
}

Eigen::MatrixXd packet_head(const std::vector<Eigen::MatrixXd>& embeddings,
                            const Eigen::VectorXd& w_a,
                            const Eigen::MatrixXd& arrivals) {
  Eigen::MatrixXd a = arrivals;
  for (size_t k = 0; k < embeddings.size(); ++k) {
    a.col(k) += (embeddings[k] * w_a).cwiseMax(0.0);
  }
  return a;
}

PolicyEval policy_forward(const Topology& topology, const FlowSet& flows,
                          const Eigen::MatrixXd& mu, const GnnParams& params,
                          bool keep_tape) {
  if (params.dims.input_features() != 2) {
    throw std::invalid_argument(
        "policy_forward expects F_0 = 2 (mean rates and duals)");
  }
  const Eigen::MatrixXd& S = topology.capacity().gso();
  const int n = flows.node_count();
  const int K = flows.flow_count();
  PolicyEval eval;
  eval.tapes.resize(K);
  eval.embeddings.resize(K);
  eval.bilinear.resize(K);
  eval.head_pre.resize(n, K);
  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd x = node_features(flows, mu, k);
    eval.embeddings[k] =
        gnn_forward(S, x, params, keep_tape ? &eval.tapes[k] : nullptr);
    eval.bilinear[k] = eval.embeddings[k] * params.w_r;
    eval.head_pre.col(k) = eval.embeddings[k] * params.w_a;
  }
  routing_head_full(eval.embeddings, eval.bilinear, topology, eval.edge_logits,
                    eval.edge_share, eval.edge_flow);
  eval.admission_increment = eval.head_pre.cwiseMax(0.0);
  return eval;
}

GnnParams policy_backward(const Topology& topology, const FlowSet& flows,
                          const GnnParams& params, const PolicyEval& eval,
                          const Eigen::MatrixXd& d_edge_flow,
                          const Eigen::MatrixXd& d_increment) {
  const Eigen::MatrixXd& S = topology.capacity().gso();
  const int E = topology.directed_edge_count();
  const int K = flows.flow_count();
  GnnParams grad = GnnParams::zeros(params.dims);

  // Softmax backward: flows on one edge couple across all its logits.
  Eigen::MatrixXd d_logits(E, K);
  for (int e = 0; e < E; ++e) {
    const double capacity = topology.edges()[e].capacity;
    const double mixed = d_edge_flow.row(e).dot(eval.edge_share.row(e));
    for (int k = 0; k < K; ++k) {
      d_logits(e, k) =
          capacity * eval.edge_share(e, k) * (d_edge_flow(e, k) - mixed);
    }
  }

  for (int k = 0; k < K; ++k) {
    const Eigen::MatrixXd& y = eval.embeddings[k];
    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(y.rows(), y.cols());
    Eigen::MatrixXd db = Eigen::MatrixXd::Zero(y.rows(), y.cols());
    for (int e = 0; e < E; ++e) {
      const Edge& edge = topology.edges()[e];
      const double d = d_logits(e, k);
      if (d == 0.0) continue;
      db.row(edge.src) += d * y.row(edge.dst);
      dy.row(edge.dst) += d * eval.bilinear[k].row(edge.src);
    }
    grad.w_r += y.transpose() * db;
    dy += db * params.w_r.transpose();

    const Eigen::VectorXd dv =
        (eval.head_pre.col(k).array() > 0.0)
            .select(d_increment.col(k), Eigen::VectorXd::Zero(y.rows()));
    grad.w_a += y.transpose() * dv;
    dy += dv * params.w_a.transpose();

    gnn_backward(S, params, eval.tapes[k], std::move(dy), grad);
  }

  for (int l = 0; l < params.dims.layer_count(); ++l) {
    for (const auto& h : grad.filters[l]) {
      if (!h.allFinite()) {
        throw GradientError("non-finite gradient in filter layer " +
                            std::to_string(l));
      }
    }
  }
  if (!grad.w_r.allFinite()) throw GradientError("non-finite gradient in w_r");
  if (!grad.w_a.allFinite()) throw GradientError("non-finite gradient in w_a");
  return grad;
}

void GnnParams::save_checkpoint(const std::filesystem::path& path,
                                const AdamState* adam) const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["features"] = dims.features;
  doc["taps"] = dims.taps;
  const Eigen::VectorXd flat = flatten();
  doc["params"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  if (adam != nullptr) {
    doc["adam"] = {
        {"step", adam->step},
        {"beta1", adam->beta1},
        {"beta2", adam->beta2},
        {"epsilon", adam->epsilon},
        {"m", std::vector<double>(adam->m.data(), adam->m.data() + adam->m.size())},
        {"v", std::vector<double>(adam->v.data(), adam->v.data() + adam->v.size())},
    };
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << doc.dump();
}

std::pair<GnnParams, std::optional<AdamState>> GnnParams::load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("version", 0) != 1) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  GnnDims dims;
  dims.features = doc.at("features").get<std::vector<int>>();
  dims.taps = doc.at("taps").get<std::vector<int>>();
  dims.validate();
  const auto values = doc.at("params").get<std::vector<double>>();
  if (static_cast<long>(values.size()) != dims.param_count()) {
    throw std::runtime_error(
        "checkpoint parameter count does not match its dimension chain");
  }
  Eigen::VectorXd flat =
      Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  GnnParams params = unflatten(dims, flat);
  std::optional<AdamState> adam;
  if (doc.contains("adam")) {
    const auto& a = doc.at("adam");
    AdamState state;
    state.step = a.at("step").get<long>();
    state.beta1 = a.at("beta1").get<double>();
    state.beta2 = a.at("beta2").get<double>();
    state.epsilon = a.at("epsilon").get<double>();
    const auto m = a.at("m").get<std::vector<double>>();
    const auto v = a.at("v").get<std::vector<double>>();
    if (static_cast<long>(m.size()) != dims.param_count() ||
        static_cast<long>(v.size()) != dims.param_count()) {
      throw std::runtime_error("checkpoint adam state has the wrong size");
    }
    state.m = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    state.v = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    adam = std::move(state);
  }
  return {std::move(params), std::move(adam)};
}

}  // namespace numroute
