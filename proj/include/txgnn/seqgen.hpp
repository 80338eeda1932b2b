#pragma once

#include <unordered_map>
#include <vector>

#include "txgnn/graph.hpp"

namespace txgnn {

// Chronological edge-attribute sequences of a single node, one list per
// direction. An empty direction is padded with one synthetic all-zero record
// so downstream encoders always see at least one element.
struct EdgeSequences {
  NodeId node = 0;
  std::vector<std::vector<double>> x_out, x_in;
  // Ordering keys aligned with x_out/x_in; -inf marks the padding record.
  std::vector<double> t_out, t_in;
};

// Sorts the node's edges of each direction ascending by (timestamp, edge id)
// and keeps the most recent t_max of them (the suffix).
EdgeSequences build_sequences(const Multigraph& g, NodeId v, std::size_t t_max);

// Batch form. Sequences depend only on the graph, so callers cache the result
// across epochs.
std::unordered_map<NodeId, EdgeSequences> build_all(
    const Multigraph& g, std::size_t t_max, const std::vector<NodeId>& nodes);

}  // namespace txgnn
