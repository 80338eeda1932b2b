#include "txgnn/sampler.hpp"

#include <algorithm>
#include <random>
#include <span>
#include <unordered_set>

namespace txgnn {

namespace {

// min(k, n) edge ids drawn uniformly without replacement, returned ascending.
std::vector<EdgeId> draw(std::span<const EdgeId> ids, std::size_t k,
                         std::uint64_t seed) {
  std::vector<EdgeId> out;
  if (ids.size() <= k) {
    out.assign(ids.begin(), ids.end());
    return out;
  }
  std::mt19937_64 rng(seed);
  std::vector<EdgeId> scratch(ids.begin(), ids.end());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, scratch.size() - 1);
    std::swap(scratch[i], scratch[d(rng)]);
  }
  out.assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Block sample_block(const Multigraph& g, const std::vector<NodeId>& targets,
                   const std::vector<std::size_t>& fanouts, std::uint64_t seed,
                   std::uint64_t epoch, std::uint64_t batch) {
  if (targets.empty()) throw ArgumentError("sample_block: no target nodes");
  for (std::size_t f : fanouts) {
    if (f < 1) throw ArgumentError("sample_block: fan-outs must be at least 1");
  }
  for (NodeId v : targets) {
    if (v >= g.node_count()) {
      throw ArgumentError("sample_block: target " + std::to_string(v) +
                          " outside graph");
    }
  }

  const std::size_t L = fanouts.size();
  Block b;
  b.targets = targets;
  b.hops.resize(L);
  b.levels.resize(L + 1);

  // Deduplicated targets, first occurrence kept, seed the deepest level.
  std::unordered_set<NodeId> seen;
  for (NodeId v : targets) {
    if (seen.insert(v).second) b.levels[L].push_back(v);
  }

  for (std::size_t hop = 1; hop <= L; ++hop) {
    std::size_t level = L - hop;  // the level this hop's edges extend
    const std::vector<NodeId>& frontier = b.levels[level + 1];
    b.levels[level] = frontier;
    std::unordered_set<NodeId> known(frontier.begin(), frontier.end());

    for (NodeId v : frontier) {
      for (bool incoming : {false, true}) {
        std::uint64_t s = derive_seed(
            seed, "sample",
            {epoch, batch, static_cast<std::uint64_t>(v), hop, incoming ? 1u : 0u});
        auto ids = draw(incoming ? g.in_edges(v) : g.out_edges(v),
                        fanouts[hop - 1], s);
        for (EdgeId e : ids) {
          SampledEdge se;
          se.center = v;
          se.incoming = incoming;
          se.edge = e;
          se.neighbor = incoming ? g.edge(e).src : g.edge(e).dst;
          b.hops[hop - 1].push_back(se);
          if (known.insert(se.neighbor).second) {
            b.levels[level].push_back(se.neighbor);
          }
        }
      }
    }
  }
  return b;
}

std::vector<std::vector<NodeId>> batches(const std::vector<NodeId>& nodes,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         std::uint64_t epoch) {
  if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
  std::vector<NodeId> perm = nodes;
  std::mt19937_64 rng(derive_seed(seed, "batches", {epoch}));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<NodeId>> out;
  for (std::size_t i = 0; i < perm.size(); i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(
                                        std::min(i + batch_size, perm.size())));
  }
  return out;
}

}  // namespace txgnn
