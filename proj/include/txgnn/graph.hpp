#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txgnn/common.hpp"

namespace txgnn {

// One transaction. `timestamp` orders the edge inside per-node sequences;
// datasets that carry the timestamp as an attribute keep it in `attrs` too.
struct EdgeRecord {
  NodeId src = 0;
  NodeId dst = 0;
  double timestamp = 0.0;
  std::vector<double> attrs;
};

// Directed multigraph with per-edge attribute vectors. Parallel edges are
// distinct records and every neighborhood query reports them with
// multiplicity. Immutable once built; safe for concurrent reads.
class Multigraph {
 public:
  // Edge ids are assigned in input order. attr_dim may be passed explicitly
  // for edge-less graphs; otherwise it is inferred from the first record.
  static Multigraph build(std::size_t node_count, std::vector<EdgeRecord> edges,
                          std::size_t attr_dim = 0);

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t attr_dim() const { return attr_dim_; }

  const EdgeRecord& edge(EdgeId e) const { return edges_[e]; }
  const std::vector<EdgeRecord>& edges() const { return edges_; }

  // Edge ids leaving / entering v, ascending.
  std::span<const EdgeId> out_edges(NodeId v) const;
  std::span<const EdgeId> in_edges(NodeId v) const;

  // Multiset neighborhoods: a neighbor connected by k parallel edges appears
  // k times. Iteration order is ascending edge id.
  std::vector<std::pair<NodeId, EdgeId>> out_neighbors(NodeId v) const;
  std::vector<std::pair<NodeId, EdgeId>> in_neighbors(NodeId v) const;

  std::size_t out_degree(NodeId v) const { return out_edges(v).size(); }
  std::size_t in_degree(NodeId v) const { return in_edges(v).size(); }

  // An empty graph; useful as a placeholder before build().
  Multigraph() = default;

 private:
  void check_node(NodeId v) const;

  std::size_t node_count_ = 0;
  std::size_t attr_dim_ = 0;
  std::vector<EdgeRecord> edges_;
  // CSR-style index: offsets_ has node_count_+1 entries, ids_ holds edge ids
  // grouped per node in ascending order.
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<EdgeId> out_ids_, in_ids_;
};

// Partially observed node labels, 1 = illicit.
struct LabelSet {
  std::unordered_map<NodeId, int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t count_of(int cls) const {
    std::size_t n = 0;
    for (const auto& [node, y] : labels) n += (y == cls);
    return n;
  }
};

}  // namespace txgnn
