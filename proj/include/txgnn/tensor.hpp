#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "txgnn/common.hpp"

namespace txgnn {

// Row-major so flat CSV/checkpoint dumps read naturally.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Handle into a Tape. Invalid handles mark optional arguments (e.g. a linear
// op without bias).
struct Tensor {
  std::uint32_t id = UINT32_MAX;
  bool ok() const { return id != UINT32_MAX; }
};

// Reverse-mode differentiation tape over dense double matrices. A tape is
// built fresh per forward pass and never shared across threads. Vectors are
// stored k-by-1; every op validates shapes and checks outputs for NaN/Inf,
// throwing NumericalFault on the first non-finite value.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Mat value, bool requires_grad = false, int ndim = 2);
  Tensor leaf_vec(const Vec& value, bool requires_grad = false);
  Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);

  Tensor matmul(Tensor a, Tensor b);
  // x·wᵀ (+ b broadcast to every row). Pass an invalid Tensor to skip bias.
  Tensor linear(Tensor x, Tensor w, Tensor b = {});
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);  // elementwise
  Tensor scale(Tensor a, double s);
  Tensor sum(Tensor a);  // total of all entries, 1x1

  Tensor sigmoid(Tensor a);
  Tensor tanh_(Tensor a);
  Tensor relu(Tensor a);
  Tensor leaky_relu(Tensor a, double slope = 0.2);

  Tensor softmax(Tensor a);       // 1-D
  Tensor softmax_rows(Tensor a);  // independent softmax per row

  // Coordinatewise max over equal-shaped tensors; ties send the gradient to
  // the earliest element of the list.
  Tensor reduce_max(const std::vector<Tensor>& xs);

  Tensor concat(Tensor a, Tensor b);  // 1-D
  Tensor concat_cols(Tensor a, Tensor b);
  Tensor vstack(const std::vector<Tensor>& xs);

  Tensor gather_rows(Tensor x, std::vector<Eigen::Index> rows);
  Tensor slice_rows(Tensor x, Eigen::Index start, Eigen::Index len);
  Tensor slice_cols(Tensor x, Eigen::Index start, Eigen::Index len);

  // out[k] = sum of x rows i with seg[i] == k; segments with no rows are zero.
  Tensor segment_sum(Tensor x, std::vector<Eigen::Index> seg, Eigen::Index k);
  // row i scaled by s[i] (s is m-by-1).
  Tensor scale_rows(Tensor x, Tensor s);

  Tensor dot(Tensor a, Tensor b);  // 1-D inner product, 1x1

  // Binary cross-entropy summed over the batch; probs clamped to
  // [eps, 1-eps] with eps = 1e-12 before the logs.
  Tensor bce_sum(Tensor probs, const Vec& labels);

  // One fused recurrent step. gr/gu/gn are precomputed input-side gate
  // pre-activations for a whole bucket laid out time-major; the slice
  // [row_start, row_start+rows) belongs to this step. h is the previous
  // hidden state (rows-by-k), ur/uu/un the recurrent weight matrices.
  // r = sigmoid(gr + h·urᵀ), u = sigmoid(gu + h·uuᵀ),
  // n = tanh(gn + (r.h)·unᵀ), out = (1-u).n + u.h
  Tensor gru_step(Tensor gr, Tensor gu, Tensor gn, Eigen::Index row_start,
                  Eigen::Index rows, Tensor h, Tensor ur, Tensor uu, Tensor un);

  // Accumulates gradients of `loss` (must be 1x1) into every node that
  // requires them; reachable leaves can then be read via grad().
  void backward(Tensor loss);

  const Mat& val(Tensor t) const;
  // Zero-sized matrix when no gradient reached the node.
  const Mat& grad(Tensor t) const;
  int ndim(Tensor t) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    int nd = 2;
    std::function<void(Tape&)> back;
  };

  Tensor push(Mat val, int nd, bool requires_grad,
              std::function<void(Tape&)> back);
  Node& at(Tensor t);
  const Node& at(Tensor t) const;
  bool req(Tensor t) const { return at(t).requires_grad; }
  Mat& gbuf(std::uint32_t id);
  void accum(std::uint32_t id, const Mat& g);

  // Deque so references returned by val() survive later pushes; a vector
  // would invalidate them on growth.
  std::deque<Node> nodes_;
};

}  // namespace txgnn
