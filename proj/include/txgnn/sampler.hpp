#pragma once

#include <cstdint>
#include <vector>

#include "txgnn/graph.hpp"

namespace txgnn {

struct SampledEdge {
  NodeId center = 0;    // the node whose neighborhood was sampled
  bool incoming = false;  // true: edge enters center; false: edge leaves it
  EdgeId edge = 0;
  NodeId neighbor = 0;
};

// L-hop sampled computation block. hops[k-1] holds hop k's edges: hop 1
// samples the targets' neighborhoods, hop 2 the level-1 frontier's, and so
// on. levels[l] is the node set a depth-l representation is computed for
// (levels.back() = targets, levels[0] = full closure); each level extends
// the next one by its newly reached neighbors, order preserved.
struct Block {
  std::vector<NodeId> targets;
  std::vector<std::vector<SampledEdge>> hops;
  std::vector<std::vector<NodeId>> levels;

  const std::vector<NodeId>& closure() const { return levels.front(); }
};

// Uniform without-replacement neighborhood sampling, min(fanout, degree)
// edges per (node, direction, hop), deterministic under (seed, epoch, batch).
// Sampled edge ids come out ascending per neighborhood.
Block sample_block(const Multigraph& g, const std::vector<NodeId>& targets,
                   const std::vector<std::size_t>& fanouts, std::uint64_t seed,
                   std::uint64_t epoch = 0, std::uint64_t batch = 0);

// Random permutation of the training nodes chopped into consecutive chunks;
// the last chunk may be short.
std::vector<std::vector<NodeId>> batches(const std::vector<NodeId>& nodes,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         std::uint64_t epoch);

}  // namespace txgnn
