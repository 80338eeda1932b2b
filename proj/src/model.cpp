#include "txgnn/model.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace txgnn {

namespace {

template <typename P, typename M>
std::vector<std::pair<std::string, M*>> list_entries(P& p) {
  std::vector<std::pair<std::string, M*>> out;
  out.emplace_back("proj_out_w", &p.W_out);
  out.emplace_back("proj_out_b", &p.b_out);
  out.emplace_back("proj_in_w", &p.W_in);
  out.emplace_back("proj_in_b", &p.b_in);
  auto gru = [&out](const char* tag, auto& g) {
    std::string t(tag);
    out.emplace_back(t + "_wr", &g.Wr);
    out.emplace_back(t + "_wu", &g.Wu);
    out.emplace_back(t + "_wn", &g.Wn);
    out.emplace_back(t + "_ur", &g.Ur);
    out.emplace_back(t + "_uu", &g.Uu);
    out.emplace_back(t + "_un", &g.Un);
    out.emplace_back(t + "_br", &g.br);
    out.emplace_back(t + "_bu", &g.bu);
    out.emplace_back(t + "_bn", &g.bn);
  };
  gru("gru_out", p.gru_out);
  gru("gru_in", p.gru_in);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    std::string t = "layer" + std::to_string(l);
    out.emplace_back(t + "_w2", &p.layers[l].W2);
    out.emplace_back(t + "_b2", &p.layers[l].b2);
    out.emplace_back(t + "_w3", &p.layers[l].W3);
    out.emplace_back(t + "_q", &p.layers[l].q);
  }
  out.emplace_back("cls_w1", &p.cls_W1);
  out.emplace_back("cls_b1", &p.cls_b1);
  out.emplace_back("cls_w2", &p.cls_W2);
  out.emplace_back("cls_b2", &p.cls_b2);
  return out;
}

Tensor dropout_mask(Tape& tape, Tensor x, double rate, std::uint64_t seed) {
  const Mat& X = tape.val(x);
  Mat mask(X.rows(), X.cols());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  double inv = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = keep(rng) ? inv : 0.0;
    }
  }
  return tape.mul(x, tape.leaf(std::move(mask)));
}

// Encoder over one direction, rows back in input order.
Tensor encode_direction(
    Tape& tape, const ParamLeaves& p, bool incoming,
    const std::vector<const EdgeSequences*>& nodes) {
  const std::size_t c2 = p.c / 2;
  const GruLeaves& gru = incoming ? p.gru_in : p.gru_out;
  Tensor W = incoming ? p.W_in : p.W_out;
  Tensor b = incoming ? p.b_in : p.b_out;

  // Bucket nodes sharing a sequence length so each bucket runs as one
  // time-major batch.
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& xs = incoming ? nodes[i]->x_in : nodes[i]->x_out;
    buckets[xs.size()].push_back(i);
  }

  std::vector<Tensor> pooled;
  std::vector<std::size_t> order;
  for (const auto& [T, members] : buckets) {
    const Eigen::Index mb = static_cast<Eigen::Index>(members.size());
    Mat xall(static_cast<Eigen::Index>(T) * mb, static_cast<Eigen::Index>(p.d));
    for (std::size_t t = 0; t < T; ++t) {
      for (Eigen::Index j = 0; j < mb; ++j) {
        const auto& xs = incoming ? nodes[members[j]]->x_in : nodes[members[j]]->x_out;
        for (std::size_t a = 0; a < p.d; ++a) {
          xall(static_cast<Eigen::Index>(t) * mb + j, static_cast<Eigen::Index>(a)) =
              xs[t][a];
        }
      }
    }
    Tensor z = tape.linear(tape.leaf(std::move(xall)), W, b);
    Tensor gr = tape.linear(z, gru.Wr, gru.br);
    Tensor gu = tape.linear(z, gru.Wu, gru.bu);
    Tensor gn = tape.linear(z, gru.Wn, gru.bn);
    Tensor h = tape.zeros(mb, static_cast<Eigen::Index>(c2));
    std::vector<Tensor> states;
    states.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      h = tape.gru_step(gr, gu, gn, static_cast<Eigen::Index>(t) * mb, mb, h,
                        gru.Ur, gru.Uu, gru.Un);
      states.push_back(h);
    }
    pooled.push_back(tape.reduce_max(states));
    order.insert(order.end(), members.begin(), members.end());
  }

  Tensor stacked = tape.vstack(pooled);
  std::vector<Eigen::Index> back(nodes.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    back[order[k]] = static_cast<Eigen::Index>(k);
  }
  return tape.gather_rows(stacked, std::move(back));
}

}  // namespace

std::vector<std::pair<std::string, Mat*>> ModelParams::entries() {
  return list_entries<ModelParams, Mat>(*this);
}

std::vector<std::pair<std::string, const Mat*>> ModelParams::entries() const {
  return list_entries<const ModelParams, const Mat>(*this);
}

ModelParams make_params(std::size_t c, std::size_t L, std::size_t d) {
  if (c == 0 || c % 2 != 0) {
    throw ArgumentError("representation width must be even and positive");
  }
  if (d == 0) throw ArgumentError("attribute width must be positive");
  ModelParams p;
  p.c = c;
  p.L = L;
  p.d = d;
  const auto c2 = static_cast<Eigen::Index>(c / 2);
  const auto ci = static_cast<Eigen::Index>(c);
  const auto di = static_cast<Eigen::Index>(d);
  p.W_out = Mat::Zero(c2, di);
  p.b_out = Mat::Zero(c2, 1);
  p.W_in = Mat::Zero(c2, di);
  p.b_in = Mat::Zero(c2, 1);
  for (GruParams* g : {&p.gru_out, &p.gru_in}) {
    g->Wr = g->Wu = g->Wn = Mat::Zero(c2, c2);
    g->Ur = g->Uu = g->Un = Mat::Zero(c2, c2);
    g->br = g->bu = g->bn = Mat::Zero(c2, 1);
  }
  p.layers.resize(L);
  for (LayerParams& l : p.layers) {
    l.W2 = Mat::Zero(ci, ci);
    l.b2 = Mat::Zero(ci, 1);
    l.W3 = Mat::Zero(ci, 2 * ci);
    l.q = Mat::Zero(ci, 1);
  }
  p.cls_W1 = Mat::Zero(ci, ci);
  p.cls_b1 = Mat::Zero(ci, 1);
  p.cls_W2 = Mat::Zero(1, ci);
  p.cls_b2 = Mat::Zero(1, 1);
  return p;
}

ParamLeaves watch(Tape& tape, const ModelParams& p, bool requires_grad) {
  ParamLeaves w;
  w.c = p.c;
  w.L = p.L;
  w.d = p.d;
  auto lf = [&](const Mat& m, int nd = 2) { return tape.leaf(m, requires_grad, nd); };
  w.W_out = lf(p.W_out);
  w.b_out = lf(p.b_out, 1);
  w.W_in = lf(p.W_in);
  w.b_in = lf(p.b_in, 1);
  auto gru = [&](const GruParams& g) {
    GruLeaves o;
    o.Wr = lf(g.Wr); o.Wu = lf(g.Wu); o.Wn = lf(g.Wn);
    o.Ur = lf(g.Ur); o.Uu = lf(g.Uu); o.Un = lf(g.Un);
    o.br = lf(g.br, 1); o.bu = lf(g.bu, 1); o.bn = lf(g.bn, 1);
    return o;
  };
  w.gru_out = gru(p.gru_out);
  w.gru_in = gru(p.gru_in);
  for (const LayerParams& l : p.layers) {
    LayerLeaves o;
    o.W2 = lf(l.W2);
    o.b2 = lf(l.b2, 1);
    o.W3 = lf(l.W3);
    o.q = lf(l.q, 1);
    w.layers.push_back(o);
  }
  w.cls_W1 = lf(p.cls_W1);
  w.cls_b1 = lf(p.cls_b1, 1);
  w.cls_W2 = lf(p.cls_W2);
  w.cls_b2 = lf(p.cls_b2, 1);
  return w;
}

Tensor gru_cell(Tape& tape, Tensor z, Tensor h_prev, const GruLeaves& g) {
  Tensor r = tape.sigmoid(tape.add(
      tape.add(tape.matmul(g.Wr, z), tape.matmul(g.Ur, h_prev)), g.br));
  Tensor u = tape.sigmoid(tape.add(
      tape.add(tape.matmul(g.Wu, z), tape.matmul(g.Uu, h_prev)), g.bu));
  Tensor n = tape.tanh_(tape.add(
      tape.add(tape.matmul(g.Wn, z), tape.matmul(g.Un, tape.mul(r, h_prev))),
      g.bn));
  // (1-u).n + u.h == n + u.(h-n)
  return tape.add(n, tape.mul(u, tape.sub(h_prev, n)));
}

Tensor encode_nodes(Tape& tape, const ParamLeaves& p,
                    const std::vector<const EdgeSequences*>& nodes) {
  if (nodes.empty()) throw ArgumentError("encode_nodes: empty node list");
  for (const EdgeSequences* s : nodes) {
    if (s->x_out.empty() || s->x_in.empty()) {
      throw ArgumentError("encode_nodes: sequences must be padded non-empty");
    }
    if (s->x_out.front().size() != p.d || s->x_in.front().size() != p.d) {
      throw ArgumentError("encode_nodes: attribute width mismatch");
    }
  }
  Tensor h_out = encode_direction(tape, p, false, nodes);
  Tensor h_in = encode_direction(tape, p, true, nodes);
  return tape.concat_cols(h_out, h_in);  // outgoing half first
}

Tensor discrepancy_layer(Tape& tape, Tensor h_prev, const LayerLeaves& lp,
                 const std::vector<NodeId>& prev_nodes,
                 const std::vector<NodeId>& cur_nodes,
                 const std::vector<SampledEdge>& edges,
                 const ForwardOptions& opt) {
  std::unordered_map<NodeId, Eigen::Index> prev_row;
  prev_row.reserve(prev_nodes.size());
  for (std::size_t i = 0; i < prev_nodes.size(); ++i) {
    prev_row.emplace(prev_nodes[i], static_cast<Eigen::Index>(i));
  }
  std::unordered_map<NodeId, Eigen::Index> cur_row;
  cur_row.reserve(cur_nodes.size());
  std::vector<Eigen::Index> cur_in_prev(cur_nodes.size());
  for (std::size_t i = 0; i < cur_nodes.size(); ++i) {
    cur_row.emplace(cur_nodes[i], static_cast<Eigen::Index>(i));
    cur_in_prev[i] = prev_row.at(cur_nodes[i]);
  }

  Tensor z_all = tape.linear(h_prev, lp.W2, lp.b2);
  Tensor z_t = tape.gather_rows(z_all, cur_in_prev);

  auto aggregate = [&](bool incoming) -> Tensor {
    std::vector<Eigen::Index> u_rows, v_rows, seg;
    for (const SampledEdge& e : edges) {
      if (e.incoming != incoming) continue;
      auto cu = cur_row.find(e.center);
      if (cu == cur_row.end()) {
        throw ArgumentError("discrepancy_layer: sampled edge centered outside the level");
      }
      auto un = prev_row.find(e.neighbor);
      if (un == prev_row.end()) {
        throw ArgumentError("discrepancy_layer: neighbor missing from the previous level");
      }
      u_rows.push_back(un->second);
      v_rows.push_back(prev_row.at(e.center));
      seg.push_back(cu->second);
    }
    auto k = static_cast<Eigen::Index>(cur_nodes.size());
    if (u_rows.empty()) {
      return tape.zeros(k, static_cast<Eigen::Index>(tape.val(z_all).cols()));
    }
    Tensor z_u = tape.gather_rows(z_all, std::move(u_rows));
    Tensor z_v = tape.gather_rows(z_all, std::move(v_rows));
    Tensor msg = tape.linear(tape.concat_cols(z_u, tape.sub(z_v, z_u)), lp.W3);
    return tape.segment_sum(msg, std::move(seg), k);
  };

  Tensor r_in = aggregate(true);
  Tensor r_out = aggregate(false);

  if (opt.no_attention) {
    return tape.add(tape.add(z_t, r_in), r_out);
  }
  Tensor lz = tape.leaky_relu(tape.matmul(z_t, lp.q), opt.leaky_slope);
  Tensor li = tape.leaky_relu(tape.matmul(r_in, lp.q), opt.leaky_slope);
  Tensor lo = tape.leaky_relu(tape.matmul(r_out, lp.q), opt.leaky_slope);
  Tensor alpha = tape.softmax_rows(
      tape.concat_cols(tape.concat_cols(lz, li), lo));
  Tensor h = tape.add(
      tape.add(tape.scale_rows(z_t, tape.slice_cols(alpha, 0, 1)),
               tape.scale_rows(r_in, tape.slice_cols(alpha, 1, 1))),
      tape.scale_rows(r_out, tape.slice_cols(alpha, 2, 1)));
  return h;
}

Vec attention_weights(const Vec& z, const Vec& r_in, const Vec& r_out,
                      const Vec& q, double slope) {
  Tape tape;
  Tensor lz = tape.leaky_relu(tape.dot(tape.leaf_vec(z), tape.leaf_vec(q)), slope);
  Tensor li = tape.leaky_relu(tape.dot(tape.leaf_vec(r_in), tape.leaf_vec(q)), slope);
  Tensor lo = tape.leaky_relu(tape.dot(tape.leaf_vec(r_out), tape.leaf_vec(q)), slope);
  Tensor a = tape.softmax(tape.concat(tape.concat(lz, li), lo));
  return tape.val(a).col(0);
}

ForwardResult forward(Tape& tape, const ParamLeaves& p, const Block& block,
                      const std::unordered_map<NodeId, EdgeSequences>& seqs,
                      const ForwardOptions& opt) {
  const std::vector<NodeId>& closure =
      opt.encoder_only ? block.levels.back() : block.closure();
  std::vector<const EdgeSequences*> node_seqs;
  node_seqs.reserve(closure.size());
  for (NodeId v : closure) {
    auto it = seqs.find(v);
    if (it == seqs.end()) {
      throw ArgumentError("forward: sequence cache is missing node " +
                          std::to_string(v));
    }
    node_seqs.push_back(&it->second);
  }

  Tensor h = encode_nodes(tape, p, node_seqs);
  bool drop = opt.training && opt.dropout > 0.0;
  std::size_t L = p.L;

  if (!opt.encoder_only && (block.hops.size() != L || block.levels.size() != L + 1)) {
    throw ArgumentError("forward: block depth " +
                        std::to_string(block.hops.size()) +
                        " does not match the model's " + std::to_string(L) +
                        " layers");
  }
  if (!opt.encoder_only) {
    for (std::size_t l = 1; l <= L; ++l) {
      h = discrepancy_layer(tape, h, p.layers[l - 1], block.levels[l - 1],
                    block.levels[l], block.hops[L - l], opt);
      if (drop && l < L) {
        h = dropout_mask(tape, h, opt.dropout,
                         derive_seed(opt.dropout_seed, "dropout-layer", {l}));
      }
    }
    // after the last layer, rows follow block.levels[L] == the targets
  } else {
    h = tape.slice_rows(h, 0, static_cast<Eigen::Index>(block.levels.back().size()));
  }

  Tensor hid = tape.relu(tape.linear(h, p.cls_W1, p.cls_b1));
  if (drop) {
    hid = dropout_mask(tape, hid, opt.dropout,
                       derive_seed(opt.dropout_seed, "dropout-cls", {}));
  }
  Tensor probs = tape.sigmoid(tape.linear(hid, p.cls_W2, p.cls_b2));

  ForwardResult r;
  r.probs = probs;
  const Mat& pv = tape.val(probs);
  r.flat.assign(pv.data(), pv.data() + pv.rows());
  return r;
}

void save_checkpoint(const std::string& path, const ModelParams& p,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "txgnn checkpoint v1\n";
  f << "meta c " << p.c << "\nmeta L " << p.L << "\nmeta d " << p.d << "\n";
  for (const auto& [k, v] : meta) f << "meta " << k << ' ' << v << '\n';
  char buf[40];
  for (const auto& [name, m] : p.entries()) {
    f << "tensor " << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%a", (*m)(i, j));
        f << buf << (j + 1 == m->cols() ? '\n' : ' ');
      }
    }
  }
  f << "end\n";
}

std::pair<ModelParams, std::vector<std::pair<std::string, std::string>>>
load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "txgnn checkpoint v1") {
    throw DataError(path + ": not a recognized checkpoint");
  }
  std::vector<std::pair<std::string, std::string>> meta;
  std::size_t c = 0, L = SIZE_MAX, d = 0;
  ModelParams p;
  bool made = false;
  std::size_t filled = 0, expect = 0;
  std::map<std::string, Mat*> by_name;

  while (std::getline(f, line)) {
    if (line == "end") {
      if (!made || filled != expect) {
        throw DataError(path + ": checkpoint is missing tensors");
      }
      return {std::move(p), std::move(meta)};
    }
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "meta") {
      std::string key;
      is >> key;
      std::string value;
      std::getline(is, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key == "c") c = std::stoul(value);
      else if (key == "L") L = std::stoul(value);
      else if (key == "d") d = std::stoul(value);
      else meta.emplace_back(key, value);
    } else if (kind == "tensor") {
      if (!made) {
        if (c == 0 || L == SIZE_MAX || d == 0) {
          throw DataError(path + ": c/L/d must precede tensors");
        }
        p = make_params(c, L, d);
        for (auto& [n, m] : p.entries()) by_name[n] = m;
        expect = by_name.size();
        made = true;
      }
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      is >> name >> rows >> cols;
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw DataError(path + ": unexpected tensor '" + name + "'");
      }
      Mat* m = it->second;
      if (m->rows() != rows || m->cols() != cols) {
        throw DataError(path + ": tensor '" + name + "' has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", config requires " + std::to_string(m->rows()) + "x" +
                        std::to_string(m->cols()));
      }
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (!std::getline(f, line)) throw DataError(path + ": truncated tensor data");
        const char* s = line.c_str();
        char* endp = nullptr;
        for (Eigen::Index j = 0; j < cols; ++j) {
          double v = std::strtod(s, &endp);
          if (endp == s) throw DataError(path + ": malformed tensor row");
          (*m)(i, j) = v;
          s = endp;
        }
      }
      ++filled;
    } else if (!kind.empty()) {
      throw DataError(path + ": unrecognized line '" + line + "'");
    }
  }
  throw DataError(path + ": missing end marker");
}

}  // namespace txgnn
