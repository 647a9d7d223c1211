#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "numroute/rng.hpp"
#include "numroute/topology.hpp"

using namespace numroute;

namespace {

Topology path3() {
  // 0 - 1 - 2 with unit capacities.
  return Topology(3, {{{-0.5, 0.0}, {0.0, 0.0}, {0.5, 0.0}}},
                  {{0, 1, 1.0}, {1, 0, 1.0}, {1, 2, 1.0}, {2, 1, 1.0}});
}

}  // namespace

TEST_CASE("generated topology has the requested degree and determinism") {
  const Topology t = Topology::random_geometric(10, 4, 7);
  CHECK(t.node_count() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(t.degree(i) >= 4);  // symmetrization can only add neighbors
  }
  for (const auto& p : t.positions()) {
    CHECK(std::hypot(p[0], p[1]) <= 1.0 + 1e-12);
  }
  const Topology again = Topology::random_geometric(10, 4, 7);
  CHECK(t == again);
  const Topology other = Topology::random_geometric(10, 4, 8);
  CHECK_FALSE(t == other);
}

TEST_CASE("two nodes with one neighbor form a single bidirectional pair") {
  const Topology t = Topology::random_geometric(2, 1, 0);
  REQUIRE(t.directed_edge_count() == 2);
  CHECK(t.edge_index(0, 1) >= 0);
  CHECK(t.edge_index(1, 0) >= 0);
  CHECK(t.edges()[0].capacity == t.edges()[1].capacity);
}

TEST_CASE("generator rejects k >= n") {
  CHECK_THROWS_AS(Topology::random_geometric(4, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(Topology::random_geometric(1, 1, 1), std::invalid_argument);
}

TEST_CASE("capacities are uniform on [20, 40) and shared across directions") {
  const Topology t = Topology::random_geometric(30, 4, 3);
  for (const Edge& e : t.edges()) {
    CHECK(e.capacity >= 20.0);
    CHECK(e.capacity < 40.0);
    const int reverse = t.edge_index(e.dst, e.src);
    REQUIRE(reverse >= 0);
    CHECK(t.edges()[reverse].capacity == e.capacity);
  }
}

TEST_CASE("constructor validates invariants") {
  std::vector<std::array<double, 2>> pos = {{{0.0, 0.0}, {1.0, 0.0}}};
  CHECK_THROWS_AS(Topology(2, pos, {{0, 1, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Topology(2, pos, {{0, 0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Topology(2, pos, {{0, 1, 0.0}, {1, 0, 1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Topology(2, pos, {{0, 2, 1.0}, {2, 0, 1.0}}),
                  std::invalid_argument);
  CHECK_NOTHROW(Topology(2, pos, {{0, 1, 1.0}, {1, 0, 1.0}}));
  CHECK_NOTHROW(Topology(1, {{{0.0, 0.0}}}, {}));
}

TEST_CASE("capacity matrix is zero off-edge and the gso is row-substochastic") {
  const Topology t = Topology::random_geometric(12, 4, 11);
  const Eigen::MatrixXd& c = t.capacity().dense();
  for (int i = 0; i < t.node_count(); ++i) {
    for (int j = 0; j < t.node_count(); ++j) {
      if (t.edge_index(i, j) < 0) CHECK(c(i, j) == 0.0);
    }
  }
  const Eigen::MatrixXd& s = t.capacity().gso();
  CHECK(s.rowwise().sum().maxCoeff() == doctest::Approx(1.0));

  SUBCASE("powers of the gso are non-expansive in the max norm") {
    Rng rng(5);
    Eigen::VectorXd z(t.node_count());
    for (int i = 0; i < z.size(); ++i) z(i) = rng.uniform(-1.0, 1.0);
    const double z_norm = z.cwiseAbs().maxCoeff();
    Eigen::VectorXd w = z;
    for (int p = 0; p < 6; ++p) {
      w = s * w;
      CHECK(w.cwiseAbs().maxCoeff() <= z_norm + 1e-12);
    }
  }
}

TEST_CASE("normalize_gso handles degenerate and idempotent cases") {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK(CapacityMatrix::normalize(zero) == zero);

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 1) = 5.0;
  const Eigen::MatrixXd normalized = CapacityMatrix::normalize(m);
  CHECK(normalized(0, 1) == doctest::Approx(1.0));
  CHECK(CapacityMatrix::normalize(normalized) == normalized);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(CapacityMatrix::normalize(bad), std::invalid_argument);
}

TEST_CASE("permutation relabels consistently") {
  const Topology t = Topology::random_geometric(8, 3, 17);
  const std::vector<int> identity = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(t.permuted(identity) == t);

  Rng rng(23);
  const std::vector<int> perm = rng.permutation(8);
  std::vector<int> inverse(8);
  for (int i = 0; i < 8; ++i) inverse[perm[i]] = i;
  const Topology p = t.permuted(perm);
  CHECK(p.permuted(inverse) == t);

  // Capacity matrix of the permuted topology equals P C P^T.
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(8, 8);
  for (int i = 0; i < 8; ++i) pi(perm[i], i) = 1.0;
  const Eigen::MatrixXd expected =
      pi * t.capacity().dense() * pi.transpose();
  CHECK((p.capacity().dense() - expected).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(t.permuted({0, 0, 1, 2, 3, 4, 5, 6}), std::invalid_argument);
}

TEST_CASE("perturbation trivial cases leave the topology unchanged") {
  const Topology t = Topology::random_geometric(10, 4, 5);
  CHECK(t.perturbed(0.0, 0.2, 99) == t);
  CHECK(t.perturbed(1.0, 0.0, 99) == t);

  const Topology moved = t.perturbed(0.5, 0.2, 99);
  CHECK(moved.node_count() == t.node_count());
  CHECK(moved.knn_k() == t.knn_k());
  // Surviving undirected pairs keep their capacity.
  for (const Edge& e : moved.edges()) {
    const int old_index = t.edge_index(e.src, e.dst);
    if (old_index >= 0) CHECK(e.capacity == t.edges()[old_index].capacity);
  }
  CHECK_THROWS_AS(path3().perturbed(0.5, 0.2, 1), std::invalid_argument);
  CHECK_THROWS_AS(t.perturbed(-0.1, 0.2, 1), std::invalid_argument);
  CHECK_THROWS_AS(t.perturbed(0.5, -0.2, 1), std::invalid_argument);
}

TEST_CASE("json round trip preserves every field") {
  const Topology t = Topology::random_geometric(9, 3, 29);
  const Topology back = Topology::from_json(t.to_json());
  CHECK(back == t);
  CHECK(back.knn_k() == t.knn_k());

  nlohmann::json bad = t.to_json();
  bad["version"] = 2;
  CHECK_THROWS_AS(Topology::from_json(bad), std::invalid_argument);
}

TEST_CASE("graphml ingestion") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "numroute_graphml_test";
  std::filesystem::create_directories(dir);

  SUBCASE("well-formed file with bandwidth attributes") {
    const std::filesystem::path file = dir / "small.graphml";
    std::ofstream(file) << R"(<?xml version="1.0" encoding="utf-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key id="d0" for="edge" attr.name="LinkSpeedRaw" attr.type="double"/>
  <key id="d1" for="node" attr.name="Latitude" attr.type="double"/>
  <key id="d2" for="node" attr.name="Longitude" attr.type="double"/>
  <graph edgedefault="undirected">
    <node id="a"><data key="d1">10.0</data><data key="d2">20.0</data></node>
    <node id="b"><data key="d1">11.0</data><data key="d2">21.0</data></node>
    <node id="c"><data key="d1">12.0</data><data key="d2">22.0</data></node>
    <edge source="a" target="b"><data key="d0">1000000.0</data></edge>
    <edge source="b" target="c"><data key="d0">2000000.0</data></edge>
    <edge source="a" target="c"/>
  </graph>
</graphml>
)";
    const Topology t = Topology::from_graphml(file);
    CHECK(t.node_count() == 3);
    CHECK(t.directed_edge_count() == 6);
    // Bandwidths are min-max rescaled into [20, 40]; the bare edge gets
    // the default 20.
    CHECK(t.edges()[t.edge_index(0, 1)].capacity == doctest::Approx(20.0));
    CHECK(t.edges()[t.edge_index(1, 2)].capacity == doctest::Approx(40.0));
    CHECK(t.edges()[t.edge_index(0, 2)].capacity == doctest::Approx(20.0));
  }

  SUBCASE("zero-edge file gives an empty edge set") {
    const std::filesystem::path file = dir / "eyeball.graphml";
    std::ofstream(file) << R"(<graphml><graph edgedefault="undirected">
      <node id="only"/><node id="pair"/></graph></graphml>)";
    std::vector<std::string> warnings;
    const Topology t = Topology::from_graphml(file, &warnings);
    CHECK(t.node_count() == 2);
    CHECK(t.directed_edge_count() == 0);
    CHECK_FALSE(warnings.empty());  // disconnected
  }

  SUBCASE("malformed xml fails without a partial topology") {
    const std::filesystem::path file = dir / "broken.graphml";
    std::ofstream(file) << "<graphml><graph><node id=";
    CHECK_THROWS_AS(Topology::from_graphml(file), GraphmlError);
  }

  SUBCASE("edge with an undefined endpoint names the element") {
    const std::filesystem::path file = dir / "dangling.graphml";
    std::ofstream(file) << R"(<graphml><graph edgedefault="undirected">
      <node id="a"/><edge source="a" target="ghost"/></graph></graphml>)";
    try {
      Topology::from_graphml(file);
      FAIL("expected GraphmlError");
    } catch (const GraphmlError& err) {
      CHECK(std::string(err.what()).find("ghost") != std::string::npos);
    }
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(Topology::from_graphml(dir / "absent.graphml"),
                    GraphmlError);
  }
}

TEST_CASE("distinct seeds give distinct positions") {
  const Topology a = Topology::random_geometric(20, 4, 1);
  const Topology b = Topology::random_geometric(20, 4, 2);
  bool any_difference = false;
  for (int i = 0; i < 20; ++i) {
    if (a.positions()[i] != b.positions()[i]) any_difference = true;
  }
  CHECK(any_difference);
}
