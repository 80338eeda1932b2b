#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "txgnn/graph.hpp"

namespace txgnn {

// Account-to-account transfer log: src,dst,timestamp,amount.
// Transaction log with sender/receiver lists:
//   tx_id,senders,receivers,timestamp[,extra_1..extra_k]
// where senders/receivers are addr:amount pairs joined by '|'; one edge is
// emitted per (sender, receiver) pair.
enum class EdgeSchema { transfer, tx_list };

struct Dataset {
  Multigraph graph;
  std::vector<std::string> node_names;               // dense id -> name
  std::unordered_map<std::string, NodeId> node_ids;  // name -> dense id

  NodeId require_node(const std::string& name) const;
};

struct SplitAssignment {
  std::vector<NodeId> train, val, test;
  std::uint64_t seed = 0;
};

Dataset load_edges(const std::string& path, EdgeSchema schema);
LabelSet load_labels(const std::string& path, const Dataset& ds);

// Writers for the transfer schema (attr layout [amount, timestamp]); values
// are printed with %.17g so a write/load round trip is bitwise exact.
void write_edges(const std::string& path, const Multigraph& g,
                 const std::vector<std::string>& names);
void write_labels(const std::string& path, const LabelSet& labels,
                  const std::vector<std::string>& names);

// Stratified 2:1:1 per class: each class independently shuffles, takes
// floor(k/4) for validation and test, remainder to train.
SplitAssignment split(const LabelSet& labels, std::uint64_t seed);

// Downsamples illicit training nodes so illicit/(illicit+normal) in the
// training set is approximately `ratio`; validation/test untouched.
SplitAssignment subsample_illicit(const SplitAssignment& a,
                                  const LabelSet& labels, double ratio,
                                  std::uint64_t seed);

void write_split(const std::string& path, const SplitAssignment& a,
                 const std::vector<std::string>& names);
SplitAssignment load_split(const std::string& path, const Dataset& ds);

}  // namespace txgnn
