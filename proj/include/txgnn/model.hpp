#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/sampler.hpp"
#include "txgnn/seqgen.hpp"
#include "txgnn/tensor.hpp"

namespace txgnn {

// Recurrent cell weights for one direction. W* act on the projected input,
// U* on the hidden state; biases are column vectors.
struct GruParams {
  Mat Wr, Wu, Wn, Ur, Uu, Un, br, bu, bn;
};

// One message-passing layer: self transform W2/b2, message transform W3
// (c by 2c, applied to neighbor ‖ difference), attention vector q.
struct LayerParams {
  Mat W2, b2, W3, q;
};

struct ModelParams {
  std::size_t c = 0;  // node representation width, even; c/2 per direction
  std::size_t L = 0;
  std::size_t d = 0;  // edge attribute width

  Mat W_out, b_out, W_in, b_in;  // input projections, (c/2) x d
  GruParams gru_out, gru_in;
  std::vector<LayerParams> layers;
  Mat cls_W1, cls_b1, cls_W2, cls_b2;  // c -> c -> 1

  // Stable (name, tensor) enumeration used by the optimizer, the
  // initializer, and the checkpoint format.
  std::vector<std::pair<std::string, Mat*>> entries();
  std::vector<std::pair<std::string, const Mat*>> entries() const;
};

// Zero-filled parameter set with the right shapes. c must be even.
ModelParams make_params(std::size_t c, std::size_t L, std::size_t d);

// Tape handles for every parameter, so one watch() call starts a
// differentiable forward pass.
struct GruLeaves {
  Tensor Wr, Wu, Wn, Ur, Uu, Un, br, bu, bn;
};
struct LayerLeaves {
  Tensor W2, b2, W3, q;
};
struct ParamLeaves {
  std::size_t c = 0, L = 0, d = 0;
  Tensor W_out, b_out, W_in, b_in;
  GruLeaves gru_out, gru_in;
  std::vector<LayerLeaves> layers;
  Tensor cls_W1, cls_b1, cls_W2, cls_b2;
};
ParamLeaves watch(Tape& tape, const ModelParams& p, bool requires_grad = true);

struct ForwardOptions {
  bool training = false;  // enables dropout
  double dropout = 0.0;
  bool no_attention = false;  // attention weights pinned to 1
  bool encoder_only = false;  // skip message passing, classify the encoder output
  double leaky_slope = 0.2;
  std::uint64_t dropout_seed = 0;
};

// One recurrent step, built from generic tape ops (the batched paths use the
// fused kernel; tests cross-check the two). z and h_prev are 1-D.
Tensor gru_cell(Tape& tape, Tensor z, Tensor h_prev, const GruLeaves& g);

// Sequence encoder for a batch of nodes: per direction, project attrs, run
// that direction's recurrent cell from a zero state, max-pool over time, then
// concatenate outgoing ‖ incoming. Row i of the result is nodes[i].
Tensor encode_nodes(Tape& tape, const ParamLeaves& p,
                    const std::vector<const EdgeSequences*>& nodes);

// One message-passing layer over a sampled block level. h_prev rows follow
// prev_nodes; the result's rows follow cur_nodes (a prefix of prev_nodes).
Tensor discrepancy_layer(Tape& tape, Tensor h_prev, const LayerLeaves& lp,
                 const std::vector<NodeId>& prev_nodes,
                 const std::vector<NodeId>& cur_nodes,
                 const std::vector<SampledEdge>& edges,
                 const ForwardOptions& opt);

// Softmax of LeakyReLU'd dot products with q; the standalone form used by
// property tests.
Vec attention_weights(const Vec& z, const Vec& r_in, const Vec& r_out,
                      const Vec& q, double slope = 0.2);

struct ForwardResult {
  Tensor probs;              // m x 1, aligned with block.levels.back()
  std::vector<double> flat;  // copy of the same values
};

// Full pass over a sampled block: encoder for the closure, L layers walking
// the level sets, classifier on the targets.
ForwardResult forward(Tape& tape, const ParamLeaves& p, const Block& block,
                      const std::unordered_map<NodeId, EdgeSequences>& seqs,
                      const ForwardOptions& opt);

// Versioned text checkpoint: meta key/value lines plus every named tensor in
// hexfloat, so save/load round-trips bitwise.
void save_checkpoint(const std::string& path, const ModelParams& p,
                     const std::vector<std::pair<std::string, std::string>>& meta);
std::pair<ModelParams, std::vector<std::pair<std::string, std::string>>>
load_checkpoint(const std::string& path);

}  // namespace txgnn
