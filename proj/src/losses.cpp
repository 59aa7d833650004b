#include "toothseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace toothseg {

namespace {

// Jonker-Volgenant shortest augmenting path solver on a square matrix.
// Returns row -> column assignment.
std::vector<int> jv_square(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> rowsol(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) rowsol[p[j] - 1] = j - 1;
  return rowsol;
}

// Pads to square with zero-cost dummies; every dummy is always consumed, so
// the padding never changes which real pairs are optimal.
double padded_cost_and_sol(const Mat& cost, std::vector<int>* rowsol_out) {
  const int m = static_cast<int>(cost.rows());
  const int g = static_cast<int>(cost.cols());
  const int n = std::max(m, g);
  Mat pad = Mat::Zero(n, n);
  pad.topLeftCorner(m, g) = cost;
  std::vector<int> rowsol = jv_square(pad);
  double total = 0.0;
  for (int i = 0; i < m; ++i)
    if (rowsol[i] < g) total += cost(i, rowsol[i]);
  if (rowsol_out) *rowsol_out = std::move(rowsol);
  return total;
}

}  // namespace

double assignment_cost(const Mat& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) return 0.0;
  return padded_cost_and_sol(cost, nullptr);
}

MatchResult hungarian_match(const Mat& cost) {
  MatchResult result;
  const int m = static_cast<int>(cost.rows());
  const int g = static_cast<int>(cost.cols());
  if (m == 0 || g == 0) {
    for (int i = 0; i < m; ++i) result.unmatched_preds.push_back(i);
    return result;
  }
  if (!cost.allFinite()) throw PreconditionError("hungarian_match: non-finite costs");

  const double optimum = assignment_cost(cost);
  const double tol = 1e-9 * (1.0 + std::abs(optimum));
  const int need = std::min(m, g);

  // Fix pairs one at a time in lexicographic order, keeping the completion
  // optimal. Rows may only be skipped when preds outnumber gts.
  std::vector<char> col_used(g, 0);
  double fixed = 0.0;
  int last_row = -1;
  for (int step = 0; step < need; ++step) {
    const int remaining = need - step;
    bool placed = false;
    for (int i = last_row + 1; i <= m - remaining && !placed; ++i) {
      for (int j = 0; j < g && !placed; ++j) {
        if (col_used[j]) continue;
        // Completion over rows strictly after i and unused columns.
        std::vector<int> rows, cols;
        for (int r = i + 1; r < m; ++r) rows.push_back(r);
        for (int c = 0; c < g; ++c)
          if (!col_used[c] && c != j) cols.push_back(c);
        Mat sub(rows.size(), cols.size());
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t c = 0; c < cols.size(); ++c)
            sub(r, c) = cost(rows[r], cols[c]);
        const double completion =
            (remaining - 1 == 0) ? 0.0 : assignment_cost(sub);
        if (fixed + cost(i, j) + completion <= optimum + tol) {
          result.pairs.emplace_back(i, j);
          col_used[j] = 1;
          fixed += cost(i, j);
          last_row = i;
          placed = true;
        }
      }
    }
    if (!placed)
      throw std::logic_error("hungarian_match: refinement failed to place a pair");
  }

  std::vector<char> matched(m, 0);
  for (auto& [pi, gi] : result.pairs) matched[pi] = 1;
  for (int i = 0; i < m; ++i)
    if (!matched[i]) result.unmatched_preds.push_back(i);
  return result;
}

Mat matching_cost(const HeadOutput& head, const std::vector<GroundTruthInstance>& gts,
                  double dice_smooth) {
  const int m = static_cast<int>(head.mask_logits.rows());
  const int g = static_cast<int>(gts.size());
  const int no_object = static_cast<int>(head.class_logits.cols()) - 1;
  Mat cost(m, g);

#pragma omp parallel for
  for (int i = 0; i < m; ++i) {
    const auto row = head.class_logits.row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    Vec logits = head.mask_logits.row(i).transpose();
    for (int j = 0; j < g; ++j) {
      const int cls = gts[j].category - 1;
      if (cls < 0 || cls >= no_object)
        throw PreconditionError("matching_cost: gt category out of range");
      const double cls_term = lse - row(cls);
      cost(i, j) = cls_term + mask_loss(logits, gts[j].mask, dice_smooth);
    }
  }
  return cost;
}

double mask_loss(const Vec& mask_logits, const std::vector<char>& gt_mask,
                 double dice_smooth) {
  const int n = static_cast<int>(mask_logits.size());
  if (n < 1 || static_cast<int>(gt_mask.size()) != n)
    throw PreconditionError("mask_loss: size mismatch");
  double bce = 0.0, inter = 0.0, psum = 0.0, ysum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = mask_logits(i);
    const double y = gt_mask[i] ? 1.0 : 0.0;
    bce += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
    const double p = 1.0 / (1.0 + std::exp(-l));
    inter += p * y;
    psum += p;
    ysum += y;
  }
  const double dice =
      1.0 - (2.0 * inter + dice_smooth) / (psum + ysum + dice_smooth);
  return bce / n + dice;
}

double instance_boundary_loss(const Mat& semantic_probs, const std::vector<int>& labels,
                              const BoundaryMask& boundary, double gamma,
                              double prob_floor) {
  ad::Tape t;
  ad::Node* p = t.leaf(semantic_probs, false);
  return ad::boundary_focal_loss(t, p, labels, boundary.is_boundary, gamma,
                                 prob_floor)->val(0, 0);
}

std::pair<double, double> classification_and_objectness_loss(
    const HeadOutput& head, const MatchResult& match,
    const std::vector<GroundTruthInstance>& gts, double no_object_weight) {
  const int m = static_cast<int>(head.class_logits.rows());
  const int no_object = static_cast<int>(head.class_logits.cols()) - 1;

  std::vector<int> targets(m, no_object);
  std::vector<double> weights(m, no_object_weight);
  Vec matched_indicator = Vec::Zero(m);
  for (auto& [pi, gi] : match.pairs) {
    targets[pi] = gts[gi].category - 1;
    weights[pi] = 1.0;
    matched_indicator(pi) = 1.0;
  }

  double wsum = 0.0, cls = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto row = head.class_logits.row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    cls += weights[i] * (lse - row(targets[i]));
    wsum += weights[i];
  }
  cls = m == 0 ? 0.0 : cls / wsum;

  double obj = 0.0;
  for (int i = 0; i < m; ++i) {
    const double p = std::clamp(head.objectness(i), 1e-12, 1.0 - 1e-12);
    obj += matched_indicator(i) > 0.5 ? -std::log(p) : -std::log1p(-p);
  }
  obj = m == 0 ? 0.0 : obj / m;
  return {cls, obj};
}

LossReport total_loss(double cls, double mask, double obj, double ibl,
                      const LossWeights& weights) {
  LossReport r;
  r.cls = cls;
  r.mask = mask;
  r.obj = obj;
  r.ibl = ibl;
  r.total = weights.lambda_cls * cls + weights.lambda_mask * mask +
            weights.lambda_obj * obj + weights.lambda_ibl * ibl;
  return r;
}

ad::Node* mask_loss_node(ad::Tape& t, ad::Node* mask_logits_row,
                         const std::vector<char>& gt_mask, double dice_smooth) {
  using namespace ad;
  const int n = static_cast<int>(mask_logits_row->val.size());
  Vec y(n);
  for (int i = 0; i < n; ++i) y(i) = gt_mask[i] ? 1.0 : 0.0;
  Node* bce = bce_with_logits_mean(t, mask_logits_row, y);
  Node* probs = sigmoid(t, mask_logits_row);
  Node* yn = t.leaf(y.transpose());
  Node* inter = sum(t, mul(t, probs, yn));
  Node* numer = add_const(t, scale(t, inter, 2.0), dice_smooth);
  Node* denom = add_const(t, sum(t, probs), y.sum() + dice_smooth);
  Node* dice = const_minus(t, 1.0, pointwise_div(t, numer, denom));
  return add(t, bce, dice);
}

LossNodes build_scan_loss(ad::Tape& t, const HeadNodes& head,
                          const std::vector<GroundTruthInstance>& gts,
                          const MatchResult& match, const std::vector<int>& labels,
                          const BoundaryMask& boundary, const LossConfig& cfg,
                          int num_tooth_classes, double gingiva_floor) {
  using namespace ad;
  const int m = static_cast<int>(head.class_logits->val.rows());
  const int no_object = num_tooth_classes;

  std::vector<int> targets(m, no_object);
  std::vector<double> weights(m, cfg.no_object_weight);
  Vec matched_indicator = Vec::Zero(m);
  for (auto& [pi, gi] : match.pairs) {
    targets[pi] = gts[gi].category - 1;
    weights[pi] = 1.0;
    matched_indicator(pi) = 1.0;
  }

  LossNodes out;
  out.cls = weighted_ce_mean(t, head.class_logits, targets, weights);
  out.obj = bce_with_logits_mean(t, head.obj_logits, matched_indicator);

  if (match.pairs.empty()) {
    out.mask = t.leaf(Mat::Zero(1, 1));
  } else {
    std::vector<Node*> terms;
    for (auto& [pi, gi] : match.pairs) {
      Node* row = slice_row(t, head.mask_logits, pi);
      terms.push_back(mask_loss_node(t, row, gts[gi].mask, cfg.dice_smooth));
    }
    Node* acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(t, acc, terms[i]);
    out.mask = scale(t, acc, 1.0 / terms.size());
  }

  Node* probs = assemble_semantic_probs_soft(t, head, num_tooth_classes, gingiva_floor);
  out.ibl = boundary_focal_loss(t, probs, labels, boundary.is_boundary, cfg.gamma,
                                cfg.prob_floor);

  Node* total = scale(t, out.cls, cfg.lambda_cls);
  total = add(t, total, scale(t, out.mask, cfg.lambda_mask));
  total = add(t, total, scale(t, out.obj, cfg.lambda_obj));
  total = add(t, total, scale(t, out.ibl, cfg.lambda_ibl));
  out.total = total;
  return out;
}

LossReport LossNodes::report() const {
  LossReport r;
  r.total = total->val(0, 0);
  r.cls = cls->val(0, 0);
  r.mask = mask->val(0, 0);
  r.obj = obj->val(0, 0);
  r.ibl = ibl->val(0, 0);
  return r;
}

}  // namespace toothseg
