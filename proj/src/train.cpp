#include "txgnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "txgnn/sampler.hpp"
#include "txgnn/seqgen.hpp"

namespace txgnn {

namespace {

constexpr std::size_t kFullFanout = std::numeric_limits<std::size_t>::max() / 2;

std::vector<NodeId> all_nodes(const Multigraph& g) {
  std::vector<NodeId> out(g.node_count());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = static_cast<NodeId>(v);
  return out;
}

// Probabilities for `nodes` against a pre-transformed graph and sequence
// cache; chunks fan out over `workers` threads (parameters are read-shared).
std::vector<double> probs_for(const ModelParams& params, const Multigraph& g,
                              const std::unordered_map<NodeId, EdgeSequences>& seqs,
                              const std::vector<NodeId>& nodes,
                              const TrainConfig& cfg, std::uint64_t eval_seed) {
  std::vector<std::size_t> fanouts;
  if (cfg.ablation != Ablation::encoder_only) {
    fanouts = cfg.full_neighborhood_eval
                  ? std::vector<std::size_t>(cfg.L, kFullFanout)
                  : cfg.fanouts;
  }
  std::vector<std::vector<NodeId>> chunks;
  for (std::size_t i = 0; i < nodes.size(); i += cfg.batch_size) {
    chunks.emplace_back(nodes.begin() + static_cast<std::ptrdiff_t>(i),
                        nodes.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(i + cfg.batch_size, nodes.size())));
  }
  std::vector<std::vector<double>> results(chunks.size());
  std::exception_ptr err;
  std::mutex err_mu;

  auto run_chunk = [&](std::size_t k) {
    try {
      Block block = sample_block(g, chunks[k], fanouts, eval_seed, 0, k);
      Tape tape;
      ParamLeaves leaves = watch(tape, params, false);
      ForwardOptions opt;
      opt.training = false;
      opt.no_attention = cfg.ablation == Ablation::no_attention;
      opt.encoder_only = cfg.ablation == Ablation::encoder_only;
      ForwardResult fr = forward(tape, leaves, block, seqs, opt);
      results[k] = std::move(fr.flat);
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!err) err = std::current_exception();
    }
  };

  if (cfg.workers <= 1 || chunks.size() <= 1) {
    for (std::size_t k = 0; k < chunks.size(); ++k) run_chunk(k);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::size_t n_threads = std::min(cfg.workers, chunks.size());
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next.fetch_add(1); k < chunks.size();
             k = next.fetch_add(1)) {
          run_chunk(k);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);

  std::vector<double> out;
  out.reserve(nodes.size());
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::string fmt_hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_attention") return Ablation::no_attention;
  if (s == "no_mgd") return Ablation::encoder_only;
  throw ArgumentError("unknown ablation '" + s +
                      "' (expected none, no_attention, or no_mgd)");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_attention: return "no_attention";
    default: return "no_mgd";
  }
}

void TrainConfig::validate() const {
  if (c == 0 || c % 2 != 0) throw ArgumentError("config: c must be even and positive");
  if (epochs < 1) throw ArgumentError("config: epochs must be at least 1");
  if (batch_size < 1) throw ArgumentError("config: batch size must be at least 1");
  if (t_max < 1) throw ArgumentError("config: t_max must be at least 1");
  if (!(lr > 0.0)) throw ArgumentError("config: learning rate must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ArgumentError("config: dropout must lie in [0,1)");
  }
  if (ablation != Ablation::encoder_only && fanouts.size() != L) {
    throw ArgumentError("config: need one fan-out per layer (" +
                        std::to_string(L) + " layers, " +
                        std::to_string(fanouts.size()) + " fan-outs)");
  }
  if (workers < 1) throw ArgumentError("config: workers must be at least 1");
}

void xavier_init(ModelParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "init", {}));
  for (auto& [name, m] : p.entries()) {
    bool is_q = name.size() >= 2 && name.compare(name.size() - 2, 2, "_q") == 0;
    if (m->cols() == 1 && !is_q) {
      m->setZero();  // biases
      continue;
    }
    double fan_in = is_q ? static_cast<double>(m->rows()) : static_cast<double>(m->cols());
    double fan_out = is_q ? 1.0 : static_cast<double>(m->rows());
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = u(rng);
    }
  }
}

AdamState make_adam_state(const ModelParams& p) {
  AdamState s;
  for (auto& [name, m] : p.entries()) {
    s.m.push_back(Mat::Zero(m->rows(), m->cols()));
    s.v.push_back(Mat::Zero(m->rows(), m->cols()));
  }
  return s;
}

void adam_step(ModelParams& p, const std::vector<Mat>& grads, AdamState& s,
               double lr) {
  auto entries = p.entries();
  if (grads.size() != entries.size()) {
    throw ArgumentError("adam_step: gradient list does not match parameters");
  }
  for (const Mat& g : grads) {
    if (g.size() != 0 && !g.allFinite()) {
      throw NumericalFault("adam_step: non-finite gradient");
    }
  }
  ++s.step;
  double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Mat* w = entries[i].second;
    Mat g = grads[i].size() == 0 ? Mat::Zero(w->rows(), w->cols()) : grads[i];
    if (g.rows() != w->rows() || g.cols() != w->cols()) {
      throw ArgumentError("adam_step: gradient shape mismatch for " + entries[i].first);
    }
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g.cwiseProduct(g);
    Mat mhat = s.m[i] / bc1;
    Mat vhat = s.v[i] / bc2;
    *w -= lr * (mhat.array() / (vhat.array().sqrt() + s.eps)).matrix();
  }
}

Multigraph Standardizer::apply(const Multigraph& g) const {
  if (!active()) {
    return Multigraph::build(g.node_count(), g.edges(), g.attr_dim());
  }
  if (static_cast<std::size_t>(mean.size()) != g.attr_dim()) {
    throw ArgumentError("standardizer width does not match the graph");
  }
  std::vector<EdgeRecord> edges = g.edges();
  for (EdgeRecord& e : edges) {
    for (std::size_t a = 0; a < e.attrs.size(); ++a) {
      e.attrs[a] = (e.attrs[a] - mean[static_cast<Eigen::Index>(a)]) /
                   stdev[static_cast<Eigen::Index>(a)];
    }
  }
  return Multigraph::build(g.node_count(), std::move(edges), g.attr_dim());
}

Standardizer fit_standardizer(const Multigraph& g,
                              const std::vector<NodeId>& nodes,
                              std::size_t hops) {
  std::unordered_set<NodeId> frontier(nodes.begin(), nodes.end());
  std::unordered_set<NodeId> seen = frontier;
  std::unordered_set<EdgeId> touched;
  for (std::size_t h = 0; h < hops; ++h) {
    std::unordered_set<NodeId> next;
    for (NodeId v : frontier) {
      for (EdgeId e : g.out_edges(v)) {
        touched.insert(e);
        if (seen.insert(g.edge(e).dst).second) next.insert(g.edge(e).dst);
      }
      for (EdgeId e : g.in_edges(v)) {
        touched.insert(e);
        if (seen.insert(g.edge(e).src).second) next.insert(g.edge(e).src);
      }
    }
    frontier = std::move(next);
  }
  Standardizer s;
  if (touched.empty()) return s;
  auto d = static_cast<Eigen::Index>(g.attr_dim());
  s.mean = Vec::Zero(d);
  s.stdev = Vec::Zero(d);
  for (EdgeId e : touched) {
    for (Eigen::Index a = 0; a < d; ++a) s.mean[a] += g.edge(e).attrs[a];
  }
  s.mean /= static_cast<double>(touched.size());
  for (EdgeId e : touched) {
    for (Eigen::Index a = 0; a < d; ++a) {
      double dx = g.edge(e).attrs[a] - s.mean[a];
      s.stdev[a] += dx * dx;
    }
  }
  s.stdev = (s.stdev / static_cast<double>(touched.size())).cwiseSqrt();
  for (Eigen::Index a = 0; a < d; ++a) {
    if (s.stdev[a] == 0.0) s.stdev[a] = 1.0;
  }
  return s;
}

TrainResult train(const TrainConfig& cfg, const Multigraph& g,
                  const LabelSet& labels, const SplitAssignment& split,
                  std::ostream* log) {
  cfg.validate();
  if (split.train.empty()) throw ArgumentError("train: empty training split");
  for (NodeId v : split.train) {
    if (!labels.labels.count(v)) {
      throw ArgumentError("train: node " + std::to_string(v) + " has no label");
    }
  }

  TrainResult result;
  if (cfg.standardize) {
    result.standardizer = fit_standardizer(g, split.train, cfg.L + 1);
  }
  Multigraph g2 = result.standardizer.apply(g);
  auto seqs = build_all(g2, cfg.t_max, all_nodes(g2));

  ModelParams params = make_params(cfg.c, cfg.L, g2.attr_dim());
  xavier_init(params, cfg.seed);
  AdamState adam = make_adam_state(params);

  std::vector<int> val_labels;
  for (NodeId v : split.val) val_labels.push_back(labels.labels.at(v));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    try {
      auto epoch_batches = batches(split.train, cfg.batch_size, cfg.seed, epoch);
      for (std::size_t b = 0; b < epoch_batches.size(); ++b) {
        const std::vector<NodeId>& targets = epoch_batches[b];
        std::vector<std::size_t> fanouts =
            cfg.ablation == Ablation::encoder_only ? std::vector<std::size_t>{} : cfg.fanouts;
        Block block = sample_block(g2, targets, fanouts, cfg.seed, epoch, b);

        Tape tape;
        ParamLeaves leaves = watch(tape, params, true);
        ForwardOptions opt;
        opt.training = true;
        opt.dropout = cfg.dropout;
        opt.no_attention = cfg.ablation == Ablation::no_attention;
        opt.encoder_only = cfg.ablation == Ablation::encoder_only;
        opt.dropout_seed = derive_seed(cfg.seed, "dropout", {epoch, b});
        ForwardResult fr = forward(tape, leaves, block, seqs, opt);

        Vec y(block.levels.back().size());
        for (std::size_t i = 0; i < block.levels.back().size(); ++i) {
          auto it = labels.labels.find(block.levels.back()[i]);
          if (it == labels.labels.end()) {
            throw ArgumentError("train: unlabeled target node");
          }
          y[static_cast<Eigen::Index>(i)] = it->second;
        }
        Tensor loss = tape.bce_sum(fr.probs, y);
        epoch_loss += tape.val(loss)(0, 0);
        tape.backward(loss);

        std::vector<Mat> grads;
        auto collect = [&](Tensor t) { grads.push_back(tape.grad(t)); };
        collect(leaves.W_out); collect(leaves.b_out);
        collect(leaves.W_in); collect(leaves.b_in);
        for (const GruLeaves* gl : {&leaves.gru_out, &leaves.gru_in}) {
          collect(gl->Wr); collect(gl->Wu); collect(gl->Wn);
          collect(gl->Ur); collect(gl->Uu); collect(gl->Un);
          collect(gl->br); collect(gl->bu); collect(gl->bn);
        }
        for (const LayerLeaves& ll : leaves.layers) {
          collect(ll.W2); collect(ll.b2); collect(ll.W3); collect(ll.q);
        }
        collect(leaves.cls_W1); collect(leaves.cls_b1);
        collect(leaves.cls_W2); collect(leaves.cls_b2);
        adam_step(params, grads, adam, cfg.lr);
      }
    } catch (const NumericalFault& e) {
      result.fault = e.what();
      if (log) *log << "numerical fault in epoch " << epoch << ": " << e.what() << "\n";
      return result;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(split.train.size());
    if (!split.val.empty()) {
      auto probs = probs_for(params, g2, seqs, split.val, cfg,
                             derive_seed(cfg.seed, "eval", {epoch}));
      stats.val = evaluate(probs, val_labels, cfg.threshold);
    }
    stats.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);
    if (log) {
      *log << "epoch " << epoch << "  loss " << stats.loss << "  val "
           << stats.val.pretty() << "  " << stats.seconds << "s\n";
    }
    if (stats.val.f1 > result.best_val_f1) {
      result.best_val_f1 = stats.val.f1;
      result.best = params;
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch == 0) {  // no validation split: keep the last epoch
    result.best = params;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

std::vector<double> predict(const ModelParams& p, const Multigraph& g,
                            const std::vector<NodeId>& nodes,
                            const TrainConfig& cfg, const Standardizer& std_) {
  if (p.c != cfg.c || p.L != cfg.L) {
    throw DataError("checkpoint shapes do not match the configuration");
  }
  Multigraph g2 = std_.apply(g);
  auto seqs = build_all(g2, cfg.t_max, all_nodes(g2));
  // block targets are a set, so answer duplicates by lookup
  std::vector<NodeId> uniq;
  std::unordered_map<NodeId, std::size_t> at;
  for (NodeId v : nodes) {
    if (at.emplace(v, uniq.size()).second) uniq.push_back(v);
  }
  std::vector<double> probs =
      probs_for(p, g2, seqs, uniq, cfg, derive_seed(cfg.seed, "predict", {}));
  std::vector<double> out;
  out.reserve(nodes.size());
  for (NodeId v : nodes) out.push_back(probs[at.at(v)]);
  return out;
}

void write_history(const std::string& path,
                   const std::vector<EpochStats>& history) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "epoch,loss,val_precision,val_recall,val_f1,val_auc,seconds\n";
  f.precision(10);
  for (const EpochStats& h : history) {
    f << h.epoch << ',' << h.loss << ',' << h.val.precision << ','
      << h.val.recall << ',' << h.val.f1 << ',';
    if (h.val.has_auc) f << h.val.auc;
    f << ',' << h.seconds << '\n';
  }
}

std::vector<std::pair<std::string, std::string>> checkpoint_meta(
    const TrainConfig& cfg, const Standardizer& std_) {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("t_max", std::to_string(cfg.t_max));
  meta.emplace_back("ablation", to_string(cfg.ablation));
  meta.emplace_back("threshold", fmt_hex(cfg.threshold));
  std::string fo;
  for (std::size_t f : cfg.fanouts) fo += (fo.empty() ? "" : " ") + std::to_string(f);
  meta.emplace_back("fanouts", fo);
  if (std_.active()) {
    std::string m, s;
    for (Eigen::Index i = 0; i < std_.mean.size(); ++i) {
      m += (i ? " " : "") + fmt_hex(std_.mean[i]);
      s += (i ? " " : "") + fmt_hex(std_.stdev[i]);
    }
    meta.emplace_back("std_mean", m);
    meta.emplace_back("std_stdev", s);
  }
  return meta;
}

void apply_checkpoint_meta(
    const std::vector<std::pair<std::string, std::string>>& meta,
    TrainConfig& cfg, Standardizer& std_) {
  auto parse_vec = [](const std::string& s) {
    std::vector<double> out;
    const char* p = s.c_str();
    char* end = nullptr;
    for (double v = std::strtod(p, &end); end != p; v = std::strtod(p, &end)) {
      out.push_back(v);
      p = end;
    }
    return out;
  };
  for (const auto& [k, v] : meta) {
    if (k == "t_max") cfg.t_max = std::stoul(v);
    else if (k == "ablation") cfg.ablation = ablation_from_string(v);
    else if (k == "threshold") cfg.threshold = std::strtod(v.c_str(), nullptr);
    else if (k == "fanouts") {
      cfg.fanouts.clear();
      std::istringstream is(v);
      std::size_t f;
      while (is >> f) cfg.fanouts.push_back(f);
    } else if (k == "std_mean") {
      auto xs = parse_vec(v);
      std_.mean = Eigen::Map<Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    } else if (k == "std_stdev") {
      auto xs = parse_vec(v);
      std_.stdev = Eigen::Map<Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    }
  }
}

}  // namespace txgnn
