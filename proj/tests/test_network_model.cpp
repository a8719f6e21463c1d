#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"

using namespace strnet;

namespace {

Eigen::MatrixXi ints(const Eigen::MatrixXd& m) { return m.cast<int>(); }

}  // namespace

TEST_CASE("laplacian of the complete graph on four nodes") {
  Eigen::MatrixXi Ll(4, 4);
  Ll << 3, -1, -1, -1, -1, 3, -1, -1, -1, -1, 3, -1, -1, -1, -1, 3;
  auto L = laplacian(complete_spring_graph(4, 1, 1));
  CHECK(ints(L) == Ll);
  CHECK(laplacian_rank(L) == 3);
  CHECK(connected_components(complete_spring_graph(4, 1, 1)) == std::vector<std::vector<int>>{{0, 1, 2, 3}});
}

TEST_CASE("laplacian of edges 1-2, 1-3, 2-4") {
  Eigen::MatrixXi Lm(4, 4);
  Lm << 2, -1, -1, 0, -1, 2, 0, -1, -1, 0, 1, 0, 0, -1, 0, 1;
  auto L = laplacian(spring_graph_from_edges(4, {{0, 1}, {0, 2}, {1, 3}}, 1, 1));
  CHECK(ints(L) == Lm);
  CHECK(laplacian_rank(L) == 3);
}

TEST_CASE("two disjoint pairs") {
  auto g = spring_graph_from_edges(4, {{0, 1}, {2, 3}}, 1, 1);
  CHECK(laplacian_rank(laplacian(g)) == 2);
  CHECK(connected_components(g) == std::vector<std::vector<int>>{{0, 1}, {2, 3}});
}

TEST_CASE("single node and empty graphs") {
  auto g1 = spring_graph_from_edges(1, {}, 1, 1);
  auto L1 = laplacian(g1);
  CHECK(L1.rows() == 1);
  CHECK(L1(0, 0) == 0);
  CHECK(laplacian_rank(Eigen::MatrixXd::Zero(3, 3)) == 0);
}

TEST_CASE("one edge with an isolated node") {
  auto g = spring_graph_from_edges(3, {{0, 1}}, 1, 1);
  CHECK(connected_components(g) == std::vector<std::vector<int>>{{0, 1}, {2}});
}

TEST_CASE("rank rejects a non-symmetric matrix") {
  Eigen::MatrixXd m(2, 2);
  m << 1, -1, 0, 0;
  CHECK_THROWS_AS(laplacian_rank(m), Error);
}

TEST_CASE("property: rank plus components equals size, rows sum to zero") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    int d = 1 + static_cast<int>(rng() % 12);
    double p = std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b)
        if (std::uniform_real_distribution<double>(0, 1)(rng) < p) edges.push_back({a, b});
    auto g = spring_graph_from_edges(d, edges, 1, 1);
    auto L = laplacian(g);
    CHECK((L - L.transpose()).cwiseAbs().maxCoeff() == 0);
    CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() == 0);
    auto parts = connected_components(g);
    CHECK(laplacian_rank(L) + static_cast<int>(parts.size()) == d);
    std::set<int> all;
    for (auto& c : parts) all.insert(c.begin(), c.end());
    CHECK(static_cast<int>(all.size()) == d);
  }
}

TEST_CASE("property: complete graphs have rank n-1") {
  for (int n = 1; n <= 12; ++n) CHECK(laplacian_rank(laplacian(complete_spring_graph(n, 1, 1))) == n - 1);
}

TEST_CASE("validate") {
  auto spec = make_star(4, complete_spring_graph(4, 1, 1), MaterialLaw::hookean(1), 1, 1);
  CHECK(validate(spec).empty());
  CHECK(spec.topology() == Topology::Star);

  SUBCASE("string referencing a missing node") {
    spec.strings[2].node_at_L = 99;
    auto v = validate(spec);
    REQUIRE(!v.empty());
    bool named = false;
    for (auto& m : v) named |= m.find("string 3") != std::string::npos && m.find("99") != std::string::npos;
    CHECK(named);
  }
  SUBCASE("incidence omits an incident string") {
    auto& g = spec.nodes[spec.star_center()].graph;
    g.incidence[3] = g.incidence[2];
    CHECK(validate(spec).size() >= 1);
  }
}
