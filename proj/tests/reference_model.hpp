#pragma once

// Hand-rolled reference network used by the oracle tests. Every number is
// produced by explicit loops over the raw edge array; nothing is shared with
// the library's compute paths except the parameter containers themselves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <tuple>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/model.hpp"

namespace refm {

using txgnn::Mat;
using txgnn::Multigraph;
using txgnn::NodeId;
using dvec = std::vector<double>;

inline dvec matvec(const Mat& w, const dvec& x) {
  dvec y(std::size_t(w.rows()), 0.0);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * x[std::size_t(j)];
    y[std::size_t(i)] = s;
  }
  return y;
}

inline void add_col(dvec& y, const Mat& b) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b(Eigen::Index(i), 0);
}

inline double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot_col(const dvec& x, const Mat& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * q(Eigen::Index(i), 0);
  return s;
}

// runs the whole recurrent chain from a zero state and max-pools the states
inline dvec gru_pool(const txgnn::GruParams& g, const std::vector<dvec>& zs) {
  std::size_t k = std::size_t(g.br.rows());
  dvec h(k, 0.0), best;
  for (const dvec& z : zs) {
    dvec r = matvec(g.Wr, z), u = matvec(g.Wu, z);
    dvec rh_in = matvec(g.Ur, h), uh_in = matvec(g.Uu, h);
    for (std::size_t i = 0; i < k; ++i) {
      r[i] = sigmoid1(r[i] + rh_in[i] + g.br(Eigen::Index(i), 0));
      u[i] = sigmoid1(u[i] + uh_in[i] + g.bu(Eigen::Index(i), 0));
    }
    dvec rh(k);
    for (std::size_t i = 0; i < k; ++i) rh[i] = r[i] * h[i];
    dvec n = matvec(g.Wn, z), nh = matvec(g.Un, rh);
    for (std::size_t i = 0; i < k; ++i) {
      n[i] = std::tanh(n[i] + nh[i] + g.bn(Eigen::Index(i), 0));
      h[i] = (1.0 - u[i]) * n[i] + u[i] * h[i];
    }
    if (best.empty()) {
      best = h;
    } else {
      for (std::size_t i = 0; i < k; ++i) best[i] = std::max(best[i], h[i]);
    }
  }
  return best;
}

// chronological edge attribute lists of one node, found by scanning every
// edge record; keeps the t_max most recent, zero-pads an empty direction
inline std::vector<dvec> gather_direction(const Multigraph& g, NodeId v,
                                          bool incoming, std::size_t t_max) {
  std::vector<std::tuple<double, std::size_t, dvec>> hits;
  for (std::size_t i = 0; i < g.edge_count(); ++i) {
    const txgnn::EdgeRecord& e = g.edge(txgnn::EdgeId(i));
    NodeId end = incoming ? e.dst : e.src;
    if (end == v) hits.emplace_back(e.timestamp, i, e.attrs);
  }
  std::sort(hits.begin(), hits.end(),
            [](const auto& a, const auto& b) {
              if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
              return std::get<1>(a) < std::get<1>(b);
            });
  if (hits.size() > t_max) hits.erase(hits.begin(), hits.end() - std::ptrdiff_t(t_max));
  std::vector<dvec> xs;
  for (auto& h : hits) xs.push_back(std::get<2>(h));
  if (xs.empty()) xs.emplace_back(g.attr_dim(), 0.0);
  return xs;
}

inline dvec encode_node(const Multigraph& g, NodeId v, const txgnn::ModelParams& p,
                        std::size_t t_max) {
  auto run = [&](bool incoming, const Mat& w, const Mat& b,
                 const txgnn::GruParams& cell) {
    std::vector<dvec> zs;
    for (const dvec& x : gather_direction(g, v, incoming, t_max)) {
      dvec z = matvec(w, x);
      add_col(z, b);
      zs.push_back(std::move(z));
    }
    return gru_pool(cell, zs);
  };
  dvec out = run(false, p.W_out, p.b_out, p.gru_out);
  dvec in = run(true, p.W_in, p.b_in, p.gru_in);
  out.insert(out.end(), in.begin(), in.end());
  return out;
}

// one message: W3 applied to neighbor state followed by the center/neighbor gap
inline dvec message(const Mat& w3, const dvec& zu, const dvec& zv) {
  dvec x = zu;
  for (std::size_t i = 0; i < zv.size(); ++i) x.push_back(zv[i] - zu[i]);
  return matvec(w3, x);
}

// incoming aggregate of node v, sum or mean over the edge multiset
inline dvec r_in_of(const Multigraph& g, const std::vector<dvec>& z, const Mat& w3,
                    NodeId v, bool mean_pool = false) {
  dvec acc(z[v].size(), 0.0);
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < g.edge_count(); ++i) {
    const txgnn::EdgeRecord& e = g.edge(txgnn::EdgeId(i));
    if (e.dst != v) continue;
    dvec m = message(w3, z[e.src], z[v]);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += m[j];
    ++cnt;
  }
  if (mean_pool && cnt > 0) {
    for (double& a : acc) a /= double(cnt);
  }
  return acc;
}

inline dvec r_out_of(const Multigraph& g, const std::vector<dvec>& z, const Mat& w3,
                     NodeId v, bool mean_pool = false) {
  dvec acc(z[v].size(), 0.0);
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < g.edge_count(); ++i) {
    const txgnn::EdgeRecord& e = g.edge(txgnn::EdgeId(i));
    if (e.src != v) continue;
    dvec m = message(w3, z[e.dst], z[v]);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += m[j];
    ++cnt;
  }
  if (mean_pool && cnt > 0) {
    for (double& a : acc) a /= double(cnt);
  }
  return acc;
}

struct ForwardFlags {
  bool no_attention = false;
  bool encoder_only = false;
  bool mean_pool = false;
  double slope = 0.2;
};

// full-neighborhood forward pass over the whole graph
inline dvec forward(const Multigraph& g, const std::vector<NodeId>& targets,
                    const txgnn::ModelParams& p, std::size_t t_max,
                    ForwardFlags flags = {}) {
  std::size_t n = g.node_count();
  std::vector<dvec> h(n);
  for (NodeId v = 0; v < NodeId(n); ++v) h[v] = encode_node(g, v, p, t_max);

  if (!flags.encoder_only) {
    for (const txgnn::LayerParams& lp : p.layers) {
      std::vector<dvec> z(n), fresh(n);
      for (NodeId v = 0; v < NodeId(n); ++v) {
        z[v] = matvec(lp.W2, h[v]);
        add_col(z[v], lp.b2);
      }
      for (NodeId v = 0; v < NodeId(n); ++v) {
        dvec rin = r_in_of(g, z, lp.W3, v, flags.mean_pool);
        dvec rout = r_out_of(g, z, lp.W3, v, flags.mean_pool);
        double a1 = 1.0, a2 = 1.0, a3 = 1.0;
        if (!flags.no_attention) {
          double w[3] = {dot_col(z[v], lp.q), dot_col(rin, lp.q), dot_col(rout, lp.q)};
          for (double& x : w) {
            if (x < 0.0) x *= flags.slope;
          }
          double mx = std::max({w[0], w[1], w[2]});
          double e0 = std::exp(w[0] - mx), e1 = std::exp(w[1] - mx), e2 = std::exp(w[2] - mx);
          double s = e0 + e1 + e2;
          a1 = e0 / s;
          a2 = e1 / s;
          a3 = e2 / s;
        }
        fresh[v].resize(z[v].size());
        for (std::size_t i = 0; i < z[v].size(); ++i) {
          fresh[v][i] = a1 * z[v][i] + a2 * rin[i] + a3 * rout[i];
        }
      }
      h = std::move(fresh);
    }
  }

  dvec probs;
  for (NodeId t : targets) {
    dvec a = matvec(p.cls_W1, h[t]);
    add_col(a, p.cls_b1);
    for (double& x : a) x = std::max(x, 0.0);
    dvec logit = matvec(p.cls_W2, a);
    add_col(logit, p.cls_b2);
    probs.push_back(sigmoid1(logit[0]));
  }
  return probs;
}

}  // namespace refm
