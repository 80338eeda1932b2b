#include "txgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace txgnn {

namespace {

void check_finite(const Mat& m, const char* op) {
  if (!m.allFinite()) {
    throw NumericalFault(std::string(op) + " produced a non-finite value");
  }
}

void want_shape(const Mat& m, Eigen::Index r, Eigen::Index c, const char* op) {
  if (m.rows() != r || m.cols() != c) {
    throw ArgumentError(std::string(op) + ": expected " + std::to_string(r) +
                        "x" + std::to_string(c) + ", got " +
                        std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
  }
}

constexpr double kBceEps = 1e-12;

}  // namespace

Tensor Tape::push(Mat val, int nd, bool requires_grad,
                  std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  n.nd = nd;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Tensor{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::at(Tensor t) {
  if (!t.ok() || t.id >= nodes_.size()) throw ArgumentError("invalid tensor handle");
  return nodes_[t.id];
}

const Tape::Node& Tape::at(Tensor t) const {
  if (!t.ok() || t.id >= nodes_.size()) throw ArgumentError("invalid tensor handle");
  return nodes_[t.id];
}

Mat& Tape::gbuf(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::accum(std::uint32_t id, const Mat& g) {
  if (!nodes_[id].requires_grad) return;
  Mat& dst = gbuf(id);
  if (dst.rows() != g.rows() || dst.cols() != g.cols()) {
    throw ArgumentError("gradient shape mismatch: node holds " +
                        std::to_string(dst.rows()) + "x" +
                        std::to_string(dst.cols()) + ", got " +
                        std::to_string(g.rows()) + "x" +
                        std::to_string(g.cols()));
  }
  dst += g;
}

const Mat& Tape::val(Tensor t) const { return at(t).val; }

const Mat& Tape::grad(Tensor t) const { return at(t).grad; }

int Tape::ndim(Tensor t) const { return at(t).nd; }

Tensor Tape::leaf(Mat value, bool requires_grad, int nd) {
  check_finite(value, "leaf");
  return push(std::move(value), nd, requires_grad, nullptr);
}

Tensor Tape::leaf_vec(const Vec& value, bool requires_grad) {
  Mat m = value;
  check_finite(m, "leaf");
  return push(std::move(m), 1, requires_grad, nullptr);
}

Tensor Tape::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return push(Mat::Zero(rows, cols), cols == 1 ? 1 : 2, requires_grad, nullptr);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols() != B.rows()) {
    throw ArgumentError("matmul: inner dims " + std::to_string(A.cols()) +
                        " vs " + std::to_string(B.rows()));
  }
  Mat C = A * B;
  check_finite(C, "matmul");
  int nd = (ndim(a) == 2 && ndim(b) == 2) ? 2 : 1;
  bool rg = req(a) || req(b);
  Tensor c = push(std::move(C), nd, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      t.accum(ai, g * t.nodes_[bi].val.transpose());
      t.accum(bi, t.nodes_[ai].val.transpose() * g);
    };
  }
  return c;
}

Tensor Tape::linear(Tensor x, Tensor w, Tensor b) {
  const Mat& X = val(x);
  const Mat& W = val(w);
  if (X.cols() != W.cols()) {
    throw ArgumentError("linear: input width " + std::to_string(X.cols()) +
                        " vs weight width " + std::to_string(W.cols()));
  }
  Mat Y = X * W.transpose();
  if (b.ok()) {
    want_shape(val(b), W.rows(), 1, "linear bias");
    Y.rowwise() += val(b).col(0).transpose();
  }
  check_finite(Y, "linear");
  bool rg = req(x) || req(w) || (b.ok() && req(b));
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, wi = w.id, yi = y.id;
    std::uint32_t bi = b.ok() ? b.id : UINT32_MAX;
    nodes_[y.id].back = [xi, wi, bi, yi](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      t.accum(xi, g * t.nodes_[wi].val);
      t.accum(wi, g.transpose() * t.nodes_[xi].val);
      if (bi != UINT32_MAX) t.accum(bi, g.colwise().sum().transpose());
    };
  }
  return y;
}

Tensor Tape::add(Tensor a, Tensor b) {
  const Mat& A = val(a);
  want_shape(val(b), A.rows(), A.cols(), "add");
  Mat C = A + val(b);
  check_finite(C, "add");
  bool rg = req(a) || req(b);
  Tensor c = push(std::move(C), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      t.accum(ai, g);
      t.accum(bi, g);
    };
  }
  return c;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  const Mat& A = val(a);
  want_shape(val(b), A.rows(), A.cols(), "sub");
  Mat C = A - val(b);
  check_finite(C, "sub");
  bool rg = req(a) || req(b);
  Tensor c = push(std::move(C), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      t.accum(ai, g);
      t.accum(bi, -g);
    };
  }
  return c;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  const Mat& A = val(a);
  want_shape(val(b), A.rows(), A.cols(), "mul");
  Mat C = A.cwiseProduct(val(b));
  check_finite(C, "mul");
  bool rg = req(a) || req(b);
  Tensor c = push(std::move(C), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      t.accum(ai, g.cwiseProduct(t.nodes_[bi].val));
      t.accum(bi, g.cwiseProduct(t.nodes_[ai].val));
    };
  }
  return c;
}

Tensor Tape::scale(Tensor a, double s) {
  Mat C = s * val(a);
  check_finite(C, "scale");
  bool rg = req(a);
  Tensor c = push(std::move(C), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, ci = c.id;
    nodes_[c.id].back = [ai, ci, s](Tape& t) {
      t.accum(ai, s * t.nodes_[ci].grad);
    };
  }
  return c;
}

Tensor Tape::sum(Tensor a) {
  Mat C(1, 1);
  C(0, 0) = val(a).sum();
  check_finite(C, "sum");
  bool rg = req(a);
  Tensor c = push(std::move(C), 1, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, ci = c.id;
    nodes_[c.id].back = [ai, ci](Tape& t) {
      const Node& n = t.nodes_[ai];
      t.accum(ai, Mat::Constant(n.val.rows(), n.val.cols(),
                                t.nodes_[ci].grad(0, 0)));
    };
  }
  return c;
}

Tensor Tape::sigmoid(Tensor a) {
  Mat Y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
  check_finite(Y, "sigmoid");
  bool rg = req(a);
  Tensor y = push(std::move(Y), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi](Tape& t) {
      const Mat& s = t.nodes_[yi].val;
      const Mat& g = t.nodes_[yi].grad;
      t.accum(ai, (g.array() * s.array() * (1.0 - s.array())).matrix());
    };
  }
  return y;
}

Tensor Tape::tanh_(Tensor a) {
  Mat Y = val(a).array().tanh().matrix();
  check_finite(Y, "tanh");
  bool rg = req(a);
  Tensor y = push(std::move(Y), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi](Tape& t) {
      const Mat& s = t.nodes_[yi].val;
      const Mat& g = t.nodes_[yi].grad;
      t.accum(ai, (g.array() * (1.0 - s.array().square())).matrix());
    };
  }
  return y;
}

Tensor Tape::relu(Tensor a) {
  Mat Y = val(a).cwiseMax(0.0);
  bool rg = req(a);
  Tensor y = push(std::move(Y), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi](Tape& t) {
      const Mat& x = t.nodes_[ai].val;
      const Mat& g = t.nodes_[yi].grad;
      t.accum(ai, (x.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
    };
  }
  return y;
}

Tensor Tape::leaky_relu(Tensor a, double slope) {
  const Mat& X = val(a);
  Mat Y = (X.array() > 0.0).select(X, slope * X);
  check_finite(Y, "leaky_relu");
  bool rg = req(a);
  Tensor y = push(std::move(Y), ndim(a), rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi, slope](Tape& t) {
      const Mat& x = t.nodes_[ai].val;
      const Mat& g = t.nodes_[yi].grad;
      t.accum(ai, (x.array() > 0.0).select(g, slope * g));
    };
  }
  return y;
}

Tensor Tape::softmax(Tensor a) {
  const Mat& X = val(a);
  if (ndim(a) != 1 || X.cols() != 1) throw ArgumentError("softmax: expects a 1-D tensor");
  if (X.rows() < 1) throw ArgumentError("softmax: empty input");
  Eigen::ArrayXd e = (X.col(0).array() - X.col(0).maxCoeff()).exp();
  Mat Y = (e / e.sum()).matrix();
  check_finite(Y, "softmax");
  bool rg = req(a);
  Tensor y = push(std::move(Y), 1, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi](Tape& t) {
      const Mat& s = t.nodes_[yi].val;
      const Mat& g = t.nodes_[yi].grad;
      double inner = (g.array() * s.array()).sum();
      t.accum(ai, (s.array() * (g.array() - inner)).matrix());
    };
  }
  return y;
}

Tensor Tape::softmax_rows(Tensor a) {
  const Mat& X = val(a);
  Mat Y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::ArrayXd e = (X.row(i).array() - X.row(i).maxCoeff()).exp();
    Y.row(i) = (e / e.sum()).matrix().transpose();
  }
  check_finite(Y, "softmax_rows");
  bool rg = req(a);
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, yi = y.id;
    nodes_[y.id].back = [ai, yi](Tape& t) {
      const Mat& s = t.nodes_[yi].val;
      const Mat& g = t.nodes_[yi].grad;
      Mat dx(s.rows(), s.cols());
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double inner = (g.row(i).array() * s.row(i).array()).sum();
        dx.row(i) = (s.row(i).array() * (g.row(i).array() - inner)).matrix();
      }
      t.accum(ai, dx);
    };
  }
  return y;
}

Tensor Tape::reduce_max(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ArgumentError("reduce_max: empty list");
  const Mat& first = val(xs[0]);
  Mat Y = first;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> arg =
      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(first.rows(),
                                                               first.cols());
  bool rg = req(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Mat& X = val(xs[k]);
    want_shape(X, first.rows(), first.cols(), "reduce_max");
    rg = rg || req(xs[k]);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        // strict comparison keeps the earliest position on ties
        if (X(i, j) > Y(i, j)) {
          Y(i, j) = X(i, j);
          arg(i, j) = static_cast<int>(k);
        }
      }
    }
  }
  check_finite(Y, "reduce_max");
  Tensor y = push(std::move(Y), ndim(xs[0]), rg, nullptr);
  if (rg) {
    std::vector<std::uint32_t> pids(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) pids[k] = xs[k].id;
    std::uint32_t yi = y.id;
    nodes_[y.id].back = [pids, arg = std::move(arg), yi](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      for (std::size_t k = 0; k < pids.size(); ++k) {
        if (!t.nodes_[pids[k]].requires_grad) continue;
        Mat gk = Mat::Zero(g.rows(), g.cols());
        bool any = false;
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          for (Eigen::Index j = 0; j < g.cols(); ++j) {
            if (arg(i, j) == static_cast<int>(k)) {
              gk(i, j) = g(i, j);
              any = true;
            }
          }
        }
        if (any) t.accum(pids[k], gk);
      }
    };
  }
  return y;
}

Tensor Tape::concat(Tensor a, Tensor b) {
  if (ndim(a) != 1 || ndim(b) != 1) throw ArgumentError("concat: expects 1-D tensors");
  const Mat& A = val(a);
  const Mat& B = val(b);
  Mat C(A.rows() + B.rows(), 1);
  if (A.rows() > 0) C.topRows(A.rows()) = A;
  if (B.rows() > 0) C.bottomRows(B.rows()) = B;
  bool rg = req(a) || req(b);
  Eigen::Index p = A.rows(), q = B.rows();
  Tensor c = push(std::move(C), 1, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci, p, q](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      if (p > 0) t.accum(ai, g.topRows(p));
      if (q > 0) t.accum(bi, g.bottomRows(q));
    };
  }
  return c;
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows()) throw ArgumentError("concat_cols: row mismatch");
  Mat C(A.rows(), A.cols() + B.cols());
  C.leftCols(A.cols()) = A;
  C.rightCols(B.cols()) = B;
  bool rg = req(a) || req(b);
  Eigen::Index p = A.cols(), q = B.cols();
  Tensor c = push(std::move(C), 2, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci, p, q](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      t.accum(ai, g.leftCols(p));
      t.accum(bi, g.rightCols(q));
    };
  }
  return c;
}

Tensor Tape::vstack(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ArgumentError("vstack: empty list");
  Eigen::Index cols = val(xs[0]).cols(), rows = 0;
  bool rg = false;
  for (Tensor x : xs) {
    if (val(x).cols() != cols) throw ArgumentError("vstack: column mismatch");
    rows += val(x).rows();
    rg = rg || req(x);
  }
  Mat C(rows, cols);
  Eigen::Index pos = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
  for (Tensor x : xs) {
    const Mat& X = val(x);
    if (X.rows() > 0) C.middleRows(pos, X.rows()) = X;
    spans.emplace_back(pos, X.rows());
    pos += X.rows();
  }
  Tensor c = push(std::move(C), 2, rg, nullptr);
  if (rg) {
    std::vector<std::uint32_t> pids(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) pids[k] = xs[k].id;
    std::uint32_t ci = c.id;
    nodes_[c.id].back = [pids, spans = std::move(spans), ci](Tape& t) {
      const Mat& g = t.nodes_[ci].grad;
      for (std::size_t k = 0; k < pids.size(); ++k) {
        if (spans[k].second > 0) {
          t.accum(pids[k], g.middleRows(spans[k].first, spans[k].second));
        }
      }
    };
  }
  return c;
}

Tensor Tape::gather_rows(Tensor x, std::vector<Eigen::Index> rows) {
  const Mat& X = val(x);
  Mat Y(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= X.rows()) {
      throw ArgumentError("gather_rows: index " + std::to_string(rows[i]) +
                          " out of range");
    }
    Y.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  }
  bool rg = req(x);
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, yi = y.id;
    nodes_[y.id].back = [xi, yi, rows = std::move(rows)](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      Mat& gx = t.gbuf(xi);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        gx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return y;
}

Tensor Tape::slice_rows(Tensor x, Eigen::Index start, Eigen::Index len) {
  const Mat& X = val(x);
  if (start < 0 || len < 0 || start + len > X.rows()) {
    throw ArgumentError("slice_rows: range out of bounds");
  }
  Mat Y = X.middleRows(start, len);
  bool rg = req(x);
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, yi = y.id;
    nodes_[y.id].back = [xi, yi, start, len](Tape& t) {
      t.gbuf(xi).middleRows(start, len) += t.nodes_[yi].grad;
    };
  }
  return y;
}

Tensor Tape::slice_cols(Tensor x, Eigen::Index start, Eigen::Index len) {
  const Mat& X = val(x);
  if (start < 0 || len < 0 || start + len > X.cols()) {
    throw ArgumentError("slice_cols: range out of bounds");
  }
  Mat Y = X.middleCols(start, len);
  bool rg = req(x);
  Tensor y = push(std::move(Y), len == 1 ? 1 : 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, yi = y.id;
    nodes_[y.id].back = [xi, yi, start, len](Tape& t) {
      t.gbuf(xi).middleCols(start, len) += t.nodes_[yi].grad;
    };
  }
  return y;
}

Tensor Tape::segment_sum(Tensor x, std::vector<Eigen::Index> seg,
                         Eigen::Index k) {
  const Mat& X = val(x);
  if (static_cast<Eigen::Index>(seg.size()) != X.rows()) {
    throw ArgumentError("segment_sum: one segment id per row required");
  }
  Mat Y = Mat::Zero(k, X.cols());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] < 0 || seg[i] >= k) throw ArgumentError("segment_sum: id out of range");
    Y.row(seg[i]) += X.row(static_cast<Eigen::Index>(i));
  }
  check_finite(Y, "segment_sum");
  bool rg = req(x);
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, yi = y.id;
    nodes_[y.id].back = [xi, yi, seg = std::move(seg)](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      Mat gx(static_cast<Eigen::Index>(seg.size()), g.cols());
      for (std::size_t i = 0; i < seg.size(); ++i) {
        gx.row(static_cast<Eigen::Index>(i)) = g.row(seg[i]);
      }
      t.accum(xi, gx);
    };
  }
  return y;
}

Tensor Tape::scale_rows(Tensor x, Tensor s) {
  const Mat& X = val(x);
  const Mat& S = val(s);
  want_shape(S, X.rows(), 1, "scale_rows weights");
  Mat Y = S.col(0).asDiagonal() * X;
  check_finite(Y, "scale_rows");
  bool rg = req(x) || req(s);
  Tensor y = push(std::move(Y), 2, rg, nullptr);
  if (rg) {
    std::uint32_t xi = x.id, si = s.id, yi = y.id;
    nodes_[y.id].back = [xi, si, yi](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      const Mat& X2 = t.nodes_[xi].val;
      const Mat& S2 = t.nodes_[si].val;
      t.accum(xi, S2.col(0).asDiagonal() * g);
      t.accum(si, g.cwiseProduct(X2).rowwise().sum());
    };
  }
  return y;
}

Tensor Tape::dot(Tensor a, Tensor b) {
  if (ndim(a) != 1 || ndim(b) != 1) throw ArgumentError("dot: expects 1-D tensors");
  const Mat& A = val(a);
  want_shape(val(b), A.rows(), 1, "dot");
  Mat C(1, 1);
  C(0, 0) = A.col(0).dot(val(b).col(0));
  check_finite(C, "dot");
  bool rg = req(a) || req(b);
  Tensor c = push(std::move(C), 1, rg, nullptr);
  if (rg) {
    std::uint32_t ai = a.id, bi = b.id, ci = c.id;
    nodes_[c.id].back = [ai, bi, ci](Tape& t) {
      double g = t.nodes_[ci].grad(0, 0);
      t.accum(ai, g * t.nodes_[bi].val);
      t.accum(bi, g * t.nodes_[ai].val);
    };
  }
  return c;
}

Tensor Tape::bce_sum(Tensor probs, const Vec& labels) {
  const Mat& P = val(probs);
  want_shape(P, labels.size(), 1, "bce_sum probs");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    double p = std::clamp(P(i, 0), kBceEps, 1.0 - kBceEps);
    loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  Mat C(1, 1);
  C(0, 0) = loss;
  check_finite(C, "bce_sum");
  bool rg = req(probs);
  Tensor c = push(std::move(C), 1, rg, nullptr);
  if (rg) {
    std::uint32_t pi = probs.id, ci = c.id;
    nodes_[c.id].back = [pi, ci, labels](Tape& t) {
      double g = t.nodes_[ci].grad(0, 0);
      const Mat& P2 = t.nodes_[pi].val;
      Mat dp(P2.rows(), 1);
      for (Eigen::Index i = 0; i < P2.rows(); ++i) {
        double p = P2(i, 0);
        if (p <= kBceEps || p >= 1.0 - kBceEps) {
          dp(i, 0) = 0.0;  // inside the clamp plateau
        } else {
          dp(i, 0) = g * (p - labels[i]) / (p * (1.0 - p));
        }
      }
      t.accum(pi, dp);
    };
  }
  return c;
}

Tensor Tape::gru_step(Tensor gr, Tensor gu, Tensor gn, Eigen::Index row_start,
                      Eigen::Index rows, Tensor h, Tensor ur, Tensor uu,
                      Tensor un) {
  const Mat& H = val(h);
  const Eigen::Index k = H.cols();
  if (H.rows() != rows) throw ArgumentError("gru_step: hidden state row mismatch");
  for (Tensor g : {gr, gu, gn}) {
    const Mat& G = val(g);
    if (row_start < 0 || row_start + rows > G.rows() || G.cols() != k) {
      throw ArgumentError("gru_step: gate slice out of bounds");
    }
  }
  for (Tensor u : {ur, uu, un}) want_shape(val(u), k, k, "gru_step recurrent weight");

  Mat ar = val(gr).middleRows(row_start, rows) + H * val(ur).transpose();
  Mat au = val(gu).middleRows(row_start, rows) + H * val(uu).transpose();
  Mat r = (1.0 / (1.0 + (-ar.array()).exp())).matrix();
  Mat u = (1.0 / (1.0 + (-au.array()).exp())).matrix();
  Mat rh = r.cwiseProduct(H);
  Mat n = (val(gn).middleRows(row_start, rows) + rh * val(un).transpose())
              .array()
              .tanh()
              .matrix();
  Mat out = n + u.cwiseProduct(H - n);
  check_finite(out, "gru_step");

  bool rg = req(gr) || req(gu) || req(gn) || req(h) || req(ur) || req(uu) || req(un);
  Tensor y = push(std::move(out), 2, rg, nullptr);
  if (rg) {
    std::uint32_t gri = gr.id, gui = gu.id, gni = gn.id, hi = h.id,
                  uri = ur.id, uui = uu.id, uni = un.id, yi = y.id;
    nodes_[y.id].back = [gri, gui, gni, hi, uri, uui, uni, yi, row_start, rows,
                         r = std::move(r), u = std::move(u),
                         n = std::move(n)](Tape& t) {
      const Mat& g = t.nodes_[yi].grad;
      const Mat& H2 = t.nodes_[hi].val;
      const Mat& Ur = t.nodes_[uri].val;
      const Mat& Uu = t.nodes_[uui].val;
      const Mat& Un = t.nodes_[uni].val;

      Mat dn = g.cwiseProduct(Mat::Ones(u.rows(), u.cols()) - u);
      Mat du = g.cwiseProduct(H2 - n);
      Mat dh = g.cwiseProduct(u);

      Mat dan = dn.cwiseProduct(
          (Mat::Ones(n.rows(), n.cols()) - n.cwiseProduct(n)));
      Mat rh = r.cwiseProduct(H2);
      Mat drh = dan * Un;
      Mat dr = drh.cwiseProduct(H2);
      dh += drh.cwiseProduct(r);
      Mat dar = dr.cwiseProduct(r).cwiseProduct(Mat::Ones(r.rows(), r.cols()) - r);
      Mat dau = du.cwiseProduct(u).cwiseProduct(Mat::Ones(u.rows(), u.cols()) - u);
      dh += dar * Ur;
      dh += dau * Uu;

      if (t.nodes_[gri].requires_grad) t.gbuf(gri).middleRows(row_start, rows) += dar;
      if (t.nodes_[gui].requires_grad) t.gbuf(gui).middleRows(row_start, rows) += dau;
      if (t.nodes_[gni].requires_grad) t.gbuf(gni).middleRows(row_start, rows) += dan;
      t.accum(hi, dh);
      t.accum(uri, dar.transpose() * H2);
      t.accum(uui, dau.transpose() * H2);
      t.accum(uni, dan.transpose() * rh);
    };
  }
  return y;
}

void Tape::backward(Tensor loss) {
  Node& l = at(loss);
  if (l.val.rows() != 1 || l.val.cols() != 1) {
    throw ArgumentError("backward: loss must be a scalar");
  }
  gbuf(loss.id)(0, 0) += 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad.size() != 0 && n.back) n.back(*this);
  }
}

}  // namespace txgnn
