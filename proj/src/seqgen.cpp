#include "txgnn/seqgen.hpp"

#include <algorithm>
#include <limits>
#include <span>

namespace txgnn {

namespace {

void fill_direction(const Multigraph& g, std::span<const EdgeId> ids,
                    std::size_t t_max, std::vector<std::vector<double>>& xs,
                    std::vector<double>& ts) {
  std::vector<EdgeId> order(ids.begin(), ids.end());
  // ids arrive ascending, so stable sort by timestamp alone realizes the
  // (timestamp, edge id) tie-break.
  std::stable_sort(order.begin(), order.end(), [&](EdgeId a, EdgeId b) {
    return g.edge(a).timestamp < g.edge(b).timestamp;
  });
  std::size_t first = order.size() > t_max ? order.size() - t_max : 0;
  for (std::size_t i = first; i < order.size(); ++i) {
    const EdgeRecord& e = g.edge(order[i]);
    xs.push_back(e.attrs);
    ts.push_back(e.timestamp);
  }
  if (xs.empty()) {
    xs.emplace_back(g.attr_dim(), 0.0);
    ts.push_back(-std::numeric_limits<double>::infinity());
  }
}

}  // namespace

EdgeSequences build_sequences(const Multigraph& g, NodeId v,
                              std::size_t t_max) {
  if (t_max == 0) throw ArgumentError("sequence length cap must be positive");
  if (v >= g.node_count()) {
    throw ArgumentError("node " + std::to_string(v) + " outside graph of " +
                        std::to_string(g.node_count()) + " nodes");
  }
  EdgeSequences s;
  s.node = v;
  fill_direction(g, g.out_edges(v), t_max, s.x_out, s.t_out);
  fill_direction(g, g.in_edges(v), t_max, s.x_in, s.t_in);
  return s;
}

std::unordered_map<NodeId, EdgeSequences> build_all(
    const Multigraph& g, std::size_t t_max, const std::vector<NodeId>& nodes) {
  std::unordered_map<NodeId, EdgeSequences> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) {
    if (!out.count(v)) out.emplace(v, build_sequences(g, v, t_max));
  }
  return out;
}

}  // namespace txgnn
