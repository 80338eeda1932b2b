#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "txgnn/graph.hpp"

using namespace txgnn;

namespace {

EdgeRecord er(NodeId s, NodeId d, double ts, std::vector<double> a = {1.0}) {
  EdgeRecord e;
  e.src = s;
  e.dst = d;
  e.timestamp = ts;
  e.attrs = std::move(a);
  return e;
}

}  // namespace

TEST_CASE("empty graph is valid") {
  Multigraph g = Multigraph::build(0, {});
  CHECK(g.node_count() == 0);
  CHECK(g.edge_count() == 0);
}

TEST_CASE("duplicate identical edges are both retained") {
  Multigraph g = Multigraph::build(2, {er(0, 1, 1.0), er(0, 1, 1.0)});
  CHECK(g.edge_count() == 2);
  CHECK(g.out_degree(0) == 2);
  CHECK(g.in_degree(1) == 2);
}

TEST_CASE("out of range endpoint rejected") {
  CHECK_THROWS_AS(Multigraph::build(2, {er(0, 2, 1.0)}), DataError);
  CHECK_THROWS_AS(Multigraph::build(2, {er(2, 0, 1.0)}), DataError);
}

TEST_CASE("attr width mismatch rejected") {
  CHECK_THROWS_AS(Multigraph::build(2, {er(0, 1, 1.0, {1.0}), er(1, 0, 2.0, {1.0, 2.0})}),
                  DataError);
}

TEST_CASE("attr_dim inferred or explicit") {
  Multigraph g = Multigraph::build(2, {er(0, 1, 1.0, {1.0, 2.0, 3.0})});
  CHECK(g.attr_dim() == 3);
  Multigraph empty = Multigraph::build(4, {}, 5);
  CHECK(empty.attr_dim() == 5);
}

TEST_CASE("parallel edges appear with multiplicity") {
  // three edges between the same pair, ids 0..2
  std::vector<EdgeRecord> edges = {er(3, 4, 1.0), er(3, 4, 2.0), er(3, 4, 3.0)};
  Multigraph g = Multigraph::build(5, std::move(edges));

  auto out = g.out_neighbors(3);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out[i].first == 4);
    CHECK(out[i].second == i);  // ascending edge id
  }
  auto in = g.in_neighbors(4);
  REQUIRE(in.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(in[i].first == 3);
}

TEST_CASE("isolated node has empty neighborhoods") {
  Multigraph g = Multigraph::build(3, {er(0, 1, 1.0)});
  CHECK(g.out_neighbors(2).empty());
  CHECK(g.in_neighbors(2).empty());
  CHECK(g.in_neighbors(0).empty());  // source-only node
}

TEST_CASE("self loop appears once per direction") {
  Multigraph g = Multigraph::build(2, {er(1, 1, 1.0)});
  auto out = g.out_neighbors(1);
  REQUIRE(out.size() == 1);
  CHECK(out[0].first == 1);
  auto in = g.in_neighbors(1);
  REQUIRE(in.size() == 1);
  CHECK(in[0].first == 1);
}

TEST_CASE("out of range query throws") {
  Multigraph g = Multigraph::build(2, {er(0, 1, 1.0)});
  CHECK_THROWS_AS(g.out_neighbors(2), ArgumentError);
  CHECK_THROWS_AS(g.in_neighbors(7), ArgumentError);
}

TEST_CASE("degree sums match a brute force scan") {
  // mix of self-loops, parallel edges, isolated nodes
  std::vector<EdgeRecord> edges = {
      er(0, 1, 5.0), er(0, 1, 2.0), er(1, 2, 3.0), er(2, 2, 1.0),
      er(4, 0, 9.0), er(2, 0, 4.0), er(2, 2, 8.0),
  };
  Multigraph g = Multigraph::build(6, edges);

  std::size_t total_in = 0;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    std::size_t touch = 0;
    for (const EdgeRecord& e : edges) touch += (e.src == v) + (e.dst == v);
    CHECK(g.in_neighbors(v).size() + g.out_neighbors(v).size() == touch);
    total_in += g.in_neighbors(v).size();
  }
  CHECK(total_in == g.edge_count());
}

TEST_CASE("iteration order is stable and ascending") {
  std::vector<EdgeRecord> edges;
  for (int i = 0; i < 20; ++i) edges.push_back(er(0, NodeId(1 + i % 3), double(20 - i)));
  Multigraph g = Multigraph::build(4, std::move(edges));

  auto first = g.out_neighbors(0);
  auto second = g.out_neighbors(0);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i] == second[i]);
    if (i > 0) CHECK(first[i].second > first[i - 1].second);
  }
}

TEST_CASE("edge ids follow input order") {
  Multigraph g = Multigraph::build(3, {er(2, 0, 9.0), er(0, 1, 1.0)});
  CHECK(g.edge(0).src == 2);
  CHECK(g.edge(1).src == 0);
  CHECK(g.edge(0).timestamp == 9.0);
}

TEST_CASE("label set counts per class") {
  LabelSet ls;
  ls.labels = {{0, 1}, {1, 0}, {2, 0}, {5, 1}, {7, 1}};
  CHECK(ls.size() == 5);
  CHECK(ls.count_of(1) == 3);
  CHECK(ls.count_of(0) == 2);
}
