#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "toothseg/types.hpp"

namespace toothseg::ad {

// Reverse-mode tape over dense double matrices. Nodes are created in
// topological order; backward() walks the tape in reverse creation order, so
// each node's backward_fn only accumulates into parents created earlier.
struct Node {
  Mat val;
  Mat grad;  // allocated lazily, same shape as val
  bool requires_grad = false;
  std::function<void(Node&)> backward_fn;

  Mat& g() {
    if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
    return grad;
  }
};

class Tape {
 public:
  Node* leaf(Mat v, bool requires_grad = false) {
    auto n = std::make_unique<Node>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    Node* p = n.get();
    nodes_.push_back(std::move(n));
    return p;
  }

  template <typename Fn>
  Node* make(Mat v, bool requires_grad, Fn&& backward) {
    Node* p = leaf(std::move(v), requires_grad);
    if (requires_grad) p->backward_fn = std::forward<Fn>(backward);
    return p;
  }

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(Node* root);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

inline bool any_grad(std::initializer_list<const Node*> xs) {
  for (const Node* x : xs)
    if (x->requires_grad) return true;
  return false;
}

// ---- elementwise / scalar ----
Node* add(Tape& t, Node* a, Node* b);
Node* sub(Tape& t, Node* a, Node* b);
Node* mul(Tape& t, Node* a, Node* b);          // elementwise
Node* scale(Tape& t, Node* a, double s);
Node* add_const(Tape& t, Node* a, double c);
Node* const_minus(Tape& t, double c, Node* a);  // c - a
Node* clamp_min(Tape& t, Node* a, double floor);
Node* relu(Tape& t, Node* a);
Node* sigmoid(Tape& t, Node* a);
Node* pointwise_div(Tape& t, Node* a, Node* b);

// ---- matrix ----
Node* matmul(Tape& t, Node* a, Node* b);    // a * b
Node* matmul_nt(Tape& t, Node* a, Node* b); // a * b^T
Node* matmul_tn(Tape& t, Node* a, Node* b); // a^T * b
Node* add_row_broadcast(Tape& t, Node* a, Node* row);      // a + 1*row
Node* mul_col_broadcast(Tape& t, Node* a, Node* col);      // rows scaled by col entries
Node* div_col_broadcast(Tape& t, Node* a, Node* col);
Node* concat_cols(Tape& t, const std::vector<Node*>& parts);
Node* slice_cols(Tape& t, Node* a, int start, int count);
Node* slice_row(Tape& t, Node* a, int row);  // 1 x C view of one row

// ---- reductions / shape ----
Node* sum(Tape& t, Node* a);                    // 1x1
Node* row_sum(Tape& t, Node* a);                // Nx1
Node* row_max(Tape& t, Node* a);                // Nx1, subgradient at first argmax
Node* colwise_max(Tape& t, Node* a);            // 1xC
Node* repeat_row(Tape& t, Node* row, int n);    // 1xC -> NxC
Node* softmax_rows(Tape& t, Node* a);

// ---- gather / group ----
Node* gather_rows(Tape& t, Node* a, const std::vector<int>& idx);
// Rows grouped in consecutive blocks of K; output has rows/K rows, max over
// each block per channel.
Node* group_max_rows(Tape& t, Node* a, int group_size);
// out.row(i) = sum_j weights[i][j] * a.row(indices[i][j]); weights fixed.
Node* interpolate_rows(Tape& t, Node* a, const std::vector<std::array<int, 3>>& idx,
                       const std::vector<std::array<double, 3>>& w);

// ---- fused domain ops ----
// Per-group standardization with learnable per-channel scale/shift. Input rows
// are G groups of K consecutive rows. sigma is one scalar per group over all
// K*C centered entries, or per channel when per_channel_sigma is set.
Node* geometric_affine(Tape& t, Node* groups, int group_size, Node* alpha,
                       Node* beta, double eps, bool per_channel_sigma);

// Focal cross-entropy over the boundary rows of a row-stochastic matrix.
// Returns 0 when the boundary set is empty. Probabilities are clamped at
// prob_floor inside the log.
Node* boundary_focal_loss(Tape& t, Node* probs, const std::vector<int>& labels,
                          const std::vector<char>& boundary, double gamma,
                          double prob_floor);

// Mean binary cross-entropy from logits (targets fixed 0/1).
Node* bce_with_logits_mean(Tape& t, Node* logits, const Vec& targets);

// Weighted mean cross-entropy from logits rows against integer targets:
// sum_i w_i * ce_i / sum_i w_i.
Node* weighted_ce_mean(Tape& t, Node* logits, const std::vector<int>& targets,
                       const std::vector<double>& weights);

}  // namespace toothseg::ad
