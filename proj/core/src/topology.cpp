#include "numroute/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>

#include "numroute/rng.hpp"

namespace numroute {

namespace {

std::int64_t edge_key(int i, int j) {
  return (static_cast<std::int64_t>(i) << 32) | static_cast<std::uint32_t>(j);
}

}  // namespace

CapacityMatrix::CapacityMatrix(Eigen::MatrixXd dense)
    : dense_(std::move(dense)), gso_(normalize(dense_)) {}

Eigen::MatrixXd CapacityMatrix::normalize(const Eigen::MatrixXd& c) {
  if (c.rows() != c.cols()) {
    throw std::invalid_argument("capacity matrix must be square");
  }
  if ((c.array() < 0.0).any()) {
    throw std::invalid_argument("capacity matrix must be nonnegative");
  }
  if (c.diagonal().cwiseAbs().maxCoeff() > 0.0) {
    throw std::invalid_argument("capacity matrix must have a zero diagonal");
  }
  const double max_row_sum = c.rowwise().sum().maxCoeff();
  if (max_row_sum <= 0.0) return c;
  return c / max_row_sum;
}

Topology::Topology(int n, std::vector<std::array<double, 2>> positions,
                   std::vector<Edge> edges, int knn_k)
    : n_(n), knn_k_(knn_k), positions_(std::move(positions)),
      edges_(std::move(edges)) {
  if (n_ < 1) throw std::invalid_argument("node count must be >= 1");
  if (static_cast<int>(positions_.size()) != n_) {
    throw std::invalid_argument("positions size must equal node count");
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::pair(a.src, a.dst) < std::pair(b.src, b.dst);
  });
  out_edges_.assign(n_, {});
  in_edges_.assign(n_, {});
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n_, n_);
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
    const Edge& edge = edges_[e];
    if (edge.src < 0 || edge.src >= n_ || edge.dst < 0 || edge.dst >= n_) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    if (edge.src == edge.dst) {
      throw std::invalid_argument("self-loops are not allowed");
    }
    if (!(edge.capacity > 0.0)) {
      throw std::invalid_argument("edge capacity must be strictly positive");
    }
    if (!edge_lookup_.emplace(edge_key(edge.src, edge.dst), e).second) {
      throw std::invalid_argument("duplicate directed edge");
    }
    out_edges_[edge.src].push_back(e);
    in_edges_[edge.dst].push_back(e);
    dense(edge.src, edge.dst) = edge.capacity;
  }
  for (const Edge& edge : edges_) {
    if (!edge_lookup_.contains(edge_key(edge.dst, edge.src))) {
      throw std::invalid_argument(
          "edge set must be symmetric as a neighborhood relation");
    }
  }
  capacity_ = CapacityMatrix(std::move(dense));
}

int Topology::edge_index(int i, int j) const {
  auto it = edge_lookup_.find(edge_key(i, j));
  return it == edge_lookup_.end() ? -1 : it->second;
}

std::vector<std::pair<int, int>> knn_undirected_pairs(
    const std::vector<std::array<double, 2>>& positions, int k) {
  const int n = static_cast<int>(positions.size());
  std::set<std::pair<int, int>> pairs;
  std::vector<std::pair<double, int>> order(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      order[j] = {dx * dx + dy * dy, j};
    }
    order[i].first = std::numeric_limits<double>::infinity();
    // Ties in distance break toward the lower node index.
    std::sort(order.begin(), order.end());
    for (int m = 0; m < k; ++m) {
      const int j = order[m].second;
      pairs.emplace(std::min(i, j), std::max(i, j));
    }
  }
  return {pairs.begin(), pairs.end()};
}

Topology Topology::random_geometric(int n, int k, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("random_geometric requires n >= 2");
  if (k < 1 || k >= n) {
    throw std::invalid_argument("random_geometric requires 1 <= k < n");
  }
  Rng rng(mix_seed(seed, 0x746f706fULL));  // "topo"
  std::vector<std::array<double, 2>> positions(n);
  for (auto& p : positions) {
    const double radius = std::sqrt(rng.uniform());
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    p = {radius * std::cos(angle), radius * std::sin(angle)};
  }
  std::vector<Edge> edges;
  for (const auto& [i, j] : knn_undirected_pairs(positions, k)) {
    const double c = rng.uniform(20.0, 40.0);
    edges.push_back({i, j, c});
    edges.push_back({j, i, c});
  }
  return Topology(n, std::move(positions), std::move(edges), k);
}

Topology Topology::perturbed(double fraction, double shift,
                             std::uint64_t seed) const {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("perturb fraction must lie in [0, 1]");
  }
  if (shift < 0.0) throw std::invalid_argument("perturb shift must be >= 0");
  if (knn_k_ <= 0) {
    throw std::invalid_argument("perturb requires a k-NN generated topology");
  }
  Rng rng(mix_seed(seed, 0x70657274ULL));  // "pert"
  const int moved = static_cast<int>(fraction * n_);
  std::vector<int> chosen = rng.permutation(n_);
  chosen.resize(moved);
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::array<double, 2>> positions = positions_;
  for (int i : chosen) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    const double radius = std::hypot(positions[i][0], positions[i][1]);
    positions[i][0] += shift * radius * std::cos(angle);
    positions[i][1] += shift * radius * std::sin(angle);
  }

  std::vector<Edge> edges;
  for (const auto& [i, j] : knn_undirected_pairs(positions, knn_k_)) {
    const int existing = edge_index(i, j);
    const double c =
        existing >= 0 ? edges_[existing].capacity : rng.uniform(20.0, 40.0);
    edges.push_back({i, j, c});
    edges.push_back({j, i, c});
  }
  return Topology(n_, std::move(positions), std::move(edges), knn_k_);
}

Topology Topology::permuted(const std::vector<int>& perm) const {
  if (static_cast<int>(perm.size()) != n_) {
    throw std::invalid_argument("permutation size must equal node count");
  }
  std::vector<bool> seen(n_, false);
  for (int v : perm) {
    if (v < 0 || v >= n_ || seen[v]) {
      throw std::invalid_argument("perm must be a bijection on [0, n)");
    }
    seen[v] = true;
  }
  std::vector<std::array<double, 2>> positions(n_);
  for (int i = 0; i < n_; ++i) positions[perm[i]] = positions_[i];
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (const Edge& e : edges_) {
    edges.push_back({perm[e.src], perm[e.dst], e.capacity});
  }
  return Topology(n_, std::move(positions), std::move(edges), knn_k_);
}

bool Topology::connected() const {
  if (n_ <= 1) return true;
  std::vector<bool> visited(n_, false);
  std::queue<int> frontier;
  frontier.push(0);
  visited[0] = true;
  int count = 1;
  while (!frontier.empty()) {
    const int i = frontier.front();
    frontier.pop();
    for (int e : out_edges_[i]) {
      const int j = edges_[e].dst;
      if (!visited[j]) {
        visited[j] = true;
        ++count;
        frontier.push(j);
      }
    }
  }
  return count == n_;
}

nlohmann::json Topology::to_json() const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["n"] = n_;
  auto positions = nlohmann::json::array();
  for (const auto& p : positions_) positions.push_back({p[0], p[1]});
  doc["positions"] = std::move(positions);
  auto edges = nlohmann::json::array();
  for (const Edge& e : edges_) edges.push_back({e.src, e.dst, e.capacity});
  doc["edges"] = std::move(edges);
  if (knn_k_ > 0) doc["knn_k"] = knn_k_;
  return doc;
}

Topology Topology::from_json(const nlohmann::json& doc) {
  if (doc.value("version", 0) != 1) {
    throw std::invalid_argument("unsupported topology document version");
  }
  const int n = doc.at("n").get<int>();
  std::vector<std::array<double, 2>> positions;
  for (const auto& p : doc.at("positions")) {
    positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  std::vector<Edge> edges;
  for (const auto& e : doc.at("edges")) {
    edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(),
                     e.at(2).get<double>()});
  }
  return Topology(n, std::move(positions), std::move(edges),
                  doc.value("knn_k", 0));
}

}  // namespace numroute
