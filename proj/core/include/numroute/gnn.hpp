#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "numroute/topology.hpp"
#include "numroute/traffic.hpp"

namespace numroute {

struct GradientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Architecture: feature widths F_0..F_L and filter taps K_l per layer.
struct GnnDims {
  std::vector<int> features;
  std::vector<int> taps;

  int layer_count() const { return static_cast<int>(taps.size()); }
  int input_features() const { return features.front(); }
  int output_features() const { return features.back(); }
  long param_count() const;
  void validate() const;

  friend bool operator==(const GnnDims&, const GnnDims&) = default;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(long param_count);
};

// Graph-filter coefficient tensors plus the routing and admission heads.
struct GnnParams {
  GnnDims dims;
  // filters[l][p] has shape F_{l-1} x F_l; layer l applies
  // sum_p S^p Z filters[l][p].
  std::vector<std::vector<Eigen::MatrixXd>> filters;
  Eigen::MatrixXd w_r;  // F_L x F_L
  Eigen::VectorXd w_a;  // F_L

  // Uniform init on [-1, 1] / sqrt(K_l * F_{l-1}) per layer; heads scaled
  // by 1 / sqrt(F_L).
  static GnnParams init(const GnnDims& dims, std::uint64_t seed);
  static GnnParams zeros(const GnnDims& dims);

  // Row-major flattening: filters in (layer, tap) order, then w_r, then w_a.
  Eigen::VectorXd flatten() const;
  static GnnParams unflatten(const GnnDims& dims, const Eigen::VectorXd& flat);
  bool all_finite() const;

  void save_checkpoint(const std::filesystem::path& path,
                       const AdamState* adam = nullptr) const;
  static std::pair<GnnParams, std::optional<AdamState>> load_checkpoint(
      const std::filesystem::path& path);
};

// Bias-corrected Adam step in the ascent direction.
void adam_ascend(GnnParams& params, const GnnParams& grad, AdamState& state,
                 double eta);

// y[:, g] = sum_f sum_p taps[p](f, g) * (S^p z)[:, f], computed by iterated
// multiplication without forming matrix powers.
Eigen::MatrixXd graph_filter_apply(const Eigen::MatrixXd& S,
                                   const Eigen::MatrixXd& z,
                                   const std::vector<Eigen::MatrixXd>& taps);

struct LayerTape {
  std::vector<Eigen::MatrixXd> shifted_inputs;  // S^p Z_{l-1}
  Eigen::MatrixXd preactivation;                // Y_l
};

struct ForwardTape {
  std::vector<LayerTape> layers;
};

// L-layer composition of graph filters with ReLU on hidden layers and a
// linear final layer. Pass a tape to keep intermediates for gnn_backward.
Eigen::MatrixXd gnn_forward(const Eigen::MatrixXd& S, const Eigen::MatrixXd& x,
                            const GnnParams& params,
                            ForwardTape* tape = nullptr);

// Accumulates into grad the exact reverse-mode derivatives given
// d loss / d embedding. ReLU uses subgradient 0 at 0.
void gnn_backward(const Eigen::MatrixXd& S, const GnnParams& params,
                  const ForwardTape& tape, Eigen::MatrixXd d_embedding,
                  GnnParams& grad);

// Input features for flow k: column 0 the mean arrival rates, column 1 the
// dual variables.
Eigen::MatrixXd node_features(const FlowSet& flows, const Eigen::MatrixXd& mu,
                              int k);

// Bilinear edge logits passed through a per-edge softmax across flows plus a
// fixed idle logit of zero, scaled by the edge capacity. Guarantees
// sum_k r(e, k) < capacity(e) and zero off-edge flow.
Eigen::MatrixXd routing_head(const std::vector<Eigen::MatrixXd>& embeddings,
                             const Eigen::MatrixXd& w_r,
                             const Topology& topology);

// a = arrivals + relu(Y w_a); the increment form keeps a >= arrivals exact.
Eigen::MatrixXd packet_head(const std::vector<Eigen::MatrixXd>& embeddings,
                            const Eigen::VectorXd& w_a,
                            const Eigen::MatrixXd& arrivals);

// One full policy evaluation (all flows, shared parameters) with the caches
// needed for the backward pass.
struct PolicyEval {
  std::vector<ForwardTape> tapes;           // per flow
  std::vector<Eigen::MatrixXd> embeddings;  // per flow, n x F_L
  std::vector<Eigen::MatrixXd> bilinear;    // per flow, Y w_r
  Eigen::MatrixXd edge_logits;              // E x K
  Eigen::MatrixXd edge_share;               // E x K, softmax shares
  Eigen::MatrixXd edge_flow;                // E x K
  Eigen::MatrixXd head_pre;                 // n x K, Y w_a before ReLU
  Eigen::MatrixXd admission_increment;      // n x K
};

PolicyEval policy_forward(const Topology& topology, const FlowSet& flows,
                          const Eigen::MatrixXd& mu, const GnnParams& params,
                          bool keep_tape = true);

// Reverse-mode gradient of a scalar loss through the policy given
// d loss / d edge_flow and d loss / d admission_increment.
GnnParams policy_backward(const Topology& topology, const FlowSet& flows,
                          const GnnParams& params, const PolicyEval& eval,
                          const Eigen::MatrixXd& d_edge_flow,
                          const Eigen::MatrixXd& d_increment);

}  // namespace numroute
