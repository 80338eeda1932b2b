#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "txgnn/graph.hpp"

namespace txgnn {

// Planted-pattern transaction network. Normal accounts transfer to partners
// drawn from a shared preferential-attachment pool. Illicit accounts mix
// pool partners (camouflage) with transfers inside the illicit group, and
// additionally receive "victim" inflows whose amounts are rescaled so the
// mean in/out amount ratio over illicit accounts lands near amount_ratio.
struct SynthConfig {
  std::size_t n_normal = 4000;
  std::size_t n_illicit = 1000;
  double mean_out_degree = 6.0;
  std::size_t attr_dim = 2;   // [amount, timestamp]; the transfer schema is fixed at 2
  double amount_ratio = 3.0;  // illicit receive/send amount ratio
  double degree_skew = 2.0;   // victim in-edge count multiplier vs mean_out_degree
  double camouflage = 0.3;    // fraction of illicit-initiated edges wired via the pool
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthResult {
  Multigraph graph;
  LabelSet labels;
  std::vector<std::string> names;  // dense decimal names, id order
};

SynthResult generate(const SynthConfig& cfg);

// edges.csv (transfer schema) + labels.csv; round-trips through load_edges /
// load_labels with identical ids.
void write_dataset(const SynthResult& r, const std::string& dir);

}  // namespace txgnn
