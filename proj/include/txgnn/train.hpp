#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "txgnn/ingest.hpp"
#include "txgnn/metrics.hpp"
#include "txgnn/model.hpp"

namespace txgnn {

enum class Ablation { none, no_attention, encoder_only };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct TrainConfig {
  std::size_t c = 128;
  std::size_t L = 2;
  std::size_t t_max = 32;
  double lr = 0.001;
  double dropout = 0.2;
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  std::vector<std::size_t> fanouts = {25, 10};
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::none;
  bool standardize = true;  // per-column attr normalization from training-reachable edges
  bool full_neighborhood_eval = false;
  double threshold = 0.5;
  std::size_t workers = 1;

  void validate() const;
};

// Per-parameter first/second moments, entries() order.
struct AdamState {
  std::vector<Mat> m, v;
  std::size_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases; the attention
// vectors use fan_in = c, fan_out = 1. Bitwise deterministic under seed.
void xavier_init(ModelParams& p, std::uint64_t seed);

AdamState make_adam_state(const ModelParams& p);

// Standard bias-corrected update; throws NumericalFault on non-finite
// gradients before touching the parameters.
void adam_step(ModelParams& p, const std::vector<Mat>& grads, AdamState& s,
               double lr);

// Per-column standardization statistics over edges reachable from the nodes
// within hops steps (both directions). Zero-variance columns keep std 1.
struct Standardizer {
  Vec mean, stdev;  // empty when disabled
  bool active() const { return mean.size() > 0; }
  Multigraph apply(const Multigraph& g) const;
};
Standardizer fit_standardizer(const Multigraph& g,
                              const std::vector<NodeId>& nodes,
                              std::size_t hops);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-node training loss
  EvalReport val;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
  std::vector<EpochStats> history;
  Standardizer standardizer;
  std::string fault;  // non-empty when a numerical fault aborted training
};

// The full loop: init, epoch loop over sampled mini-batches, Adam, per-epoch
// validation, max-validation-F1 checkpoint retention. A numerical fault stops
// early and returns the best checkpoint seen with `fault` set.
TrainResult train(const TrainConfig& cfg, const Multigraph& g,
                  const LabelSet& labels, const SplitAssignment& split,
                  std::ostream* log = nullptr);

// Probabilities for `nodes`, dropout off. The standardizer must be the one
// the checkpoint was trained with.
std::vector<double> predict(const ModelParams& p, const Multigraph& g,
                            const std::vector<NodeId>& nodes,
                            const TrainConfig& cfg, const Standardizer& std);

void write_history(const std::string& path,
                   const std::vector<EpochStats>& history);

// Checkpoint meta block for save_checkpoint, including the standardizer.
std::vector<std::pair<std::string, std::string>> checkpoint_meta(
    const TrainConfig& cfg, const Standardizer& std);
// Restores config + standardizer fields stored by checkpoint_meta.
void apply_checkpoint_meta(
    const std::vector<std::pair<std::string, std::string>>& meta,
    TrainConfig& cfg, Standardizer& std);

}  // namespace txgnn
