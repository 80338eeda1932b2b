#include "txgnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <unordered_map>

#include "txgnn/ingest.hpp"

namespace txgnn {

namespace {

constexpr double kTimeSpan = 1e6;

struct Gen {
  const SynthConfig& cfg;
  std::mt19937_64 rng_struct, rng_amount, rng_time;
  std::vector<int> cls;
  std::vector<NodeId> illicit_ids;
  std::vector<NodeId> pool;
  std::vector<double> next_time;
  std::vector<EdgeRecord> edges;
  // victim_of[i] = illicit node the edge feeds, or -1
  std::vector<std::int64_t> victim_of;
  std::vector<double> base_amount;

  Gen(const SynthConfig& c, std::uint64_t attempt)
      : cfg(c),
        rng_struct(derive_seed(c.seed, "synth-struct", {attempt})),
        rng_amount(derive_seed(c.seed, "synth-amount", {attempt})),
        rng_time(derive_seed(c.seed, "synth-time", {attempt})) {
    std::size_t n = c.n_normal + c.n_illicit;
    cls.assign(n, 0);
    std::fill(cls.begin() + static_cast<std::ptrdiff_t>(c.n_normal), cls.end(), 1);
    std::mt19937_64 rng_assign(derive_seed(c.seed, "synth-assign", {attempt}));
    std::shuffle(cls.begin(), cls.end(), rng_assign);
    for (std::size_t v = 0; v < n; ++v) {
      if (cls[v] == 1) illicit_ids.push_back(static_cast<NodeId>(v));
    }
    pool.resize(n);
    for (std::size_t v = 0; v < n; ++v) pool[v] = static_cast<NodeId>(v);
    next_time.assign(n, -1.0);
  }

  std::size_t n() const { return cls.size(); }

  NodeId pool_draw(NodeId avoid) {
    for (int tries = 0; tries < 16; ++tries) {
      NodeId v = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_struct)];
      if (v != avoid) return v;
    }
    return pool[0] != avoid ? pool[0] : pool[1];
  }

  NodeId uniform_draw(NodeId avoid) {
    std::uniform_int_distribution<std::size_t> d(0, n() - 1);
    for (;;) {
      NodeId v = static_cast<NodeId>(d(rng_struct));
      if (v != avoid) return v;
    }
  }

  NodeId ring_draw(NodeId avoid) {
    if (illicit_ids.size() < 2) return pool_draw(avoid);
    std::uniform_int_distribution<std::size_t> d(0, illicit_ids.size() - 1);
    for (;;) {
      NodeId v = illicit_ids[d(rng_struct)];
      if (v != avoid) return v;
    }
  }

  double amount() {
    return std::lognormal_distribution<double>(1.0, 1.0)(rng_amount);
  }

  // Each sender's transfers form an arrival process with exponential gaps,
  // floored to integer ticks.
  double timestamp(NodeId sender) {
    double& t = next_time[sender];
    if (t < 0.0) {
      t = std::uniform_real_distribution<double>(0.0, 0.5 * kTimeSpan)(rng_time);
    } else {
      t += std::exponential_distribution<double>(1.0 / 2e4)(rng_time);
    }
    return std::min(std::floor(t), kTimeSpan - 1.0);
  }

  void emit(NodeId src, NodeId dst, double amt, std::int64_t victim_target) {
    EdgeRecord e;
    e.src = src;
    e.dst = dst;
    e.timestamp = timestamp(src);
    e.attrs = {amt, e.timestamp};
    edges.push_back(std::move(e));
    victim_of.push_back(victim_target);
    base_amount.push_back(amt);
    pool.push_back(src);
    pool.push_back(dst);
  }

  void build() {
    std::poisson_distribution<int> out_count(cfg.mean_out_degree);
    std::poisson_distribution<int> victim_count(cfg.mean_out_degree * cfg.degree_skew);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    for (NodeId u = 0; u < static_cast<NodeId>(n()); ++u) {
      if (cls[u] == 0) {
        int k = out_count(rng_struct);
        for (int i = 0; i < k; ++i) emit(u, pool_draw(u), amount(), -1);
      } else {
        int k = std::max(1, out_count(rng_struct));
        for (int i = 0; i < k; ++i) {
          NodeId v = coin(rng_struct) < cfg.camouflage ? pool_draw(u) : ring_draw(u);
          emit(u, v, amount(), -1);
        }
        int m = std::max(1, victim_count(rng_struct));
        for (int i = 0; i < m; ++i) {
          emit(uniform_draw(u), u, amount(), static_cast<std::int64_t>(u));
        }
      }
    }

    // Every node must appear in the edge file, labels reference the graph.
    std::vector<char> touched(n(), 0);
    for (const EdgeRecord& e : edges) touched[e.src] = touched[e.dst] = 1;
    for (NodeId u = 0; u < static_cast<NodeId>(n()); ++u) {
      if (!touched[u]) emit(u, pool_draw(u), amount(), -1);
    }

    rescale_victim_amounts();
  }

  // Victim inflow amounts are set so each illicit node's total-in over
  // total-out lands on amount_ratio. Illicit nodes occasionally appear as
  // victim senders of one another, so a few damped passes settle the
  // cross terms.
  void rescale_victim_amounts() {
    std::vector<double> s_out(n(), 0.0), r_other(n(), 0.0), v_victim(n(), 0.0);
    for (int pass = 0; pass < 3; ++pass) {
      std::fill(s_out.begin(), s_out.end(), 0.0);
      std::fill(r_other.begin(), r_other.end(), 0.0);
      std::fill(v_victim.begin(), v_victim.end(), 0.0);
      for (std::size_t i = 0; i < edges.size(); ++i) {
        const EdgeRecord& e = edges[i];
        s_out[e.src] += e.attrs[0];
        if (victim_of[i] == static_cast<std::int64_t>(e.dst)) {
          v_victim[e.dst] += base_amount[i];
        } else {
          r_other[e.dst] += e.attrs[0];
        }
      }
      for (std::size_t i = 0; i < edges.size(); ++i) {
        if (victim_of[i] < 0) continue;
        NodeId u = edges[i].dst;
        double phi = (cfg.amount_ratio * s_out[u] - r_other[u]) / v_victim[u];
        phi = std::clamp(phi, 0.02, 100.0);
        edges[i].attrs[0] = base_amount[i] * phi;
      }
    }
  }

  bool has_parallel_pair() const {
    std::unordered_map<std::uint64_t, int> seen;
    for (const EdgeRecord& e : edges) {
      std::uint64_t key = (static_cast<std::uint64_t>(e.src) << 32) | e.dst;
      if (++seen[key] >= 2) return true;
    }
    return false;
  }
};

}  // namespace

void SynthConfig::validate() const {
  if (n_normal < 1 || n_illicit < 1) {
    throw ArgumentError("synth: both class counts must be at least 1");
  }
  if (attr_dim != 2) {
    throw ArgumentError("synth: the transfer schema fixes attr_dim at 2");
  }
  if (!(amount_ratio > 0.0)) throw ArgumentError("synth: amount ratio must be positive");
  if (!(mean_out_degree > 0.0)) throw ArgumentError("synth: mean out-degree must be positive");
  if (!(degree_skew > 0.0)) throw ArgumentError("synth: degree skew must be positive");
  if (camouflage < 0.0 || camouflage > 1.0) {
    throw ArgumentError("synth: camouflage must lie in [0,1]");
  }
}

SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  std::size_t n = cfg.n_normal + cfg.n_illicit;
  bool want_parallel =
      cfg.mean_out_degree >= 3.0 && static_cast<double>(n) <= 10.0 * cfg.mean_out_degree;

  for (std::uint64_t attempt = 0;; ++attempt) {
    Gen gen(cfg, attempt);
    gen.build();
    if (want_parallel && !gen.has_parallel_pair() && attempt < 64) continue;

    // Renumber nodes in order of first appearance in the edge list so a
    // write/load round trip reproduces ids exactly.
    std::vector<NodeId> remap(n, UINT32_MAX);
    NodeId next = 0;
    for (EdgeRecord& e : gen.edges) {
      if (remap[e.src] == UINT32_MAX) remap[e.src] = next++;
      if (remap[e.dst] == UINT32_MAX) remap[e.dst] = next++;
      e.src = remap[e.src];
      e.dst = remap[e.dst];
    }

    SynthResult r;
    for (std::size_t v = 0; v < n; ++v) {
      r.labels.labels[remap[v]] = gen.cls[v];
    }
    r.names.resize(n);
    for (std::size_t v = 0; v < n; ++v) r.names[v] = std::to_string(v);
    r.graph = Multigraph::build(n, std::move(gen.edges), 2);
    return r;
  }
}

void write_dataset(const SynthResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_edges(dir + "/edges.csv", r.graph, r.names);
  write_labels(dir + "/labels.csv", r.labels, r.names);
}

}  // namespace txgnn
