#include "txgnn/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace txgnn {

Multigraph Multigraph::build(std::size_t node_count,
                             std::vector<EdgeRecord> edges,
                             std::size_t attr_dim) {
  Multigraph g;
  g.node_count_ = node_count;
  if (attr_dim == 0 && !edges.empty()) attr_dim = edges.front().attrs.size();
  g.attr_dim_ = attr_dim;

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const EdgeRecord& e = edges[i];
    if (e.src >= node_count || e.dst >= node_count) {
      throw DataError("edge " + std::to_string(i) + " references node " +
                      std::to_string(std::max(e.src, e.dst)) +
                      " outside graph of " + std::to_string(node_count) +
                      " nodes");
    }
    if (e.attrs.size() != attr_dim) {
      throw DataError("edge " + std::to_string(i) + " has " +
                      std::to_string(e.attrs.size()) +
                      " attributes, expected " + std::to_string(attr_dim));
    }
  }
  g.edges_ = std::move(edges);

  const std::size_t m = g.edges_.size();
  g.out_offsets_.assign(node_count + 1, 0);
  g.in_offsets_.assign(node_count + 1, 0);
  for (const EdgeRecord& e : g.edges_) {
    ++g.out_offsets_[e.src + 1];
    ++g.in_offsets_[e.dst + 1];
  }
  for (std::size_t v = 0; v < node_count; ++v) {
    g.out_offsets_[v + 1] += g.out_offsets_[v];
    g.in_offsets_[v + 1] += g.in_offsets_[v];
  }
  g.out_ids_.resize(m);
  g.in_ids_.resize(m);
  std::vector<std::size_t> out_pos(g.out_offsets_.begin(),
                                   g.out_offsets_.end() - 1);
  std::vector<std::size_t> in_pos(g.in_offsets_.begin(),
                                  g.in_offsets_.end() - 1);
  // Filling in edge-id order makes each per-node slice ascending.
  for (EdgeId e = 0; e < m; ++e) {
    g.out_ids_[out_pos[g.edges_[e].src]++] = e;
    g.in_ids_[in_pos[g.edges_[e].dst]++] = e;
  }
  return g;
}

void Multigraph::check_node(NodeId v) const {
  if (v >= node_count_) {
    throw ArgumentError("node " + std::to_string(v) + " outside graph of " +
                        std::to_string(node_count_) + " nodes");
  }
}

std::span<const EdgeId> Multigraph::out_edges(NodeId v) const {
  check_node(v);
  return {out_ids_.data() + out_offsets_[v],
          out_offsets_[v + 1] - out_offsets_[v]};
}

std::span<const EdgeId> Multigraph::in_edges(NodeId v) const {
  check_node(v);
  return {in_ids_.data() + in_offsets_[v],
          in_offsets_[v + 1] - in_offsets_[v]};
}

std::vector<std::pair<NodeId, EdgeId>> Multigraph::out_neighbors(
    NodeId v) const {
  std::vector<std::pair<NodeId, EdgeId>> out;
  for (EdgeId e : out_edges(v)) out.emplace_back(edges_[e].dst, e);
  return out;
}

std::vector<std::pair<NodeId, EdgeId>> Multigraph::in_neighbors(
    NodeId v) const {
  std::vector<std::pair<NodeId, EdgeId>> out;
  for (EdgeId e : in_edges(v)) out.emplace_back(edges_[e].src, e);
  return out;
}

}  // namespace txgnn
