#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace numroute {

struct GraphmlError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Directed link carrying a strictly positive capacity (packets per step).
struct Edge {
  int src = 0;
  int dst = 0;
  double capacity = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Dense capacity matrix plus its normalized copy, which doubles as the graph
// shift operator for the polynomial graph filters.
class CapacityMatrix {
 public:
  CapacityMatrix() = default;
  explicit CapacityMatrix(Eigen::MatrixXd dense);

  // Scales by 1 / (max row sum) so the result's max row sum is <= 1; a zero
  // matrix maps to itself. Requires nonnegative entries and a zero diagonal.
  static Eigen::MatrixXd normalize(const Eigen::MatrixXd& c);

  const Eigen::MatrixXd& dense() const { return dense_; }
  const Eigen::MatrixXd& gso() const { return gso_; }

 private:
  Eigen::MatrixXd dense_;
  Eigen::MatrixXd gso_;
};

// Immutable communication graph: node positions in the unit disk, a
// symmetric directed edge set, and per-edge capacities. Edges are kept
// sorted by (src, dst); the neighborhood relation is validated to be
// symmetric (j in N_i iff i in N_j).
class Topology {
 public:
  Topology(int n, std::vector<std::array<double, 2>> positions,
           std::vector<Edge> edges, int knn_k = 0);

  // n points uniform in the unit disk, each connected to its k nearest
  // Euclidean neighbors (ties broken by lower node index); the edge set is
  // the symmetrized union of both directions. Capacities are drawn i.i.d.
  // uniform on [20, 40) per undirected pair. Deterministic in seed.
  static Topology random_geometric(int n, int k, std::uint64_t seed);

  static Topology from_graphml(const std::filesystem::path& path,
                               std::vector<std::string>* warnings = nullptr);

  // Versioned JSON document: {version, n, positions, edges: [[i, j, c], ...]}.
  static Topology from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  int node_count() const { return n_; }
  int directed_edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::array<double, 2>>& positions() const {
    return positions_;
  }
  // Number of neighbors of node i (the undirected degree).
  int degree(int i) const { return static_cast<int>(out_edges_[i].size()); }
  int knn_k() const { return knn_k_; }

  // Edge indices (into edges()) leaving / entering node i.
  const std::vector<int>& out_edges(int i) const { return out_edges_[i]; }
  const std::vector<int>& in_edges(int i) const { return in_edges_[i]; }
  // Index of directed edge (i, j), or -1 when absent.
  int edge_index(int i, int j) const;

  // Displaces floor(fraction * n) randomly chosen nodes by a uniformly
  // random direction with magnitude shift * |position|, then recomputes the
  // k-NN edge set with the original k. Capacities of surviving undirected
  // pairs are preserved; new pairs draw fresh capacities.
  Topology perturbed(double fraction, double shift, std::uint64_t seed) const;

  // Relabels node i as perm[i]; positions, edges and capacities follow.
  Topology permuted(const std::vector<int>& perm) const;

  const CapacityMatrix& capacity() const { return capacity_; }
  bool connected() const;

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.n_ == b.n_ && a.knn_k_ == b.knn_k_ &&
           a.positions_ == b.positions_ && a.edges_ == b.edges_;
  }

 private:
  int n_ = 0;
  int knn_k_ = 0;  // 0 when the graph did not come from the k-NN generator
  std::vector<std::array<double, 2>> positions_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> out_edges_;
  std::vector<std::vector<int>> in_edges_;
  std::unordered_map<std::int64_t, int> edge_lookup_;
  CapacityMatrix capacity_;
};

// k-NN edge set over the given positions: each node is joined to its k
// nearest neighbors and the relation is symmetrized. Exposed for reuse by
// the generator and by perturbation.
std::vector<std::pair<int, int>> knn_undirected_pairs(
    const std::vector<std::array<double, 2>>& positions, int k);

}  // namespace numroute
