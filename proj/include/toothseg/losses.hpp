#pragma once

#include <utility>
#include <vector>

#include "toothseg/autodiff.hpp"
#include "toothseg/config.hpp"
#include "toothseg/instance_head.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

struct GroundTruthInstance {
  std::vector<char> mask;  // length N
  int category = 0;        // in [1, C]
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (pred_index, gt_index), sorted by pred
  std::vector<int> unmatched_preds;
};

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_mask = 1.0;
  double lambda_obj = 1.0;
  double lambda_ibl = 0.006;
};

struct LossReport {
  double total = 0.0;
  double cls = 0.0;
  double mask = 0.0;
  double obj = 0.0;
  double ibl = 0.0;
};

// Minimum-total-cost assignment of min(M, G) pairs. Ties between optimal
// assignments resolve to the lexicographically smallest sorted pair list.
MatchResult hungarian_match(const Mat& cost);

// Optimal assignment cost alone (Jonker-Volgenant on the padded square
// matrix); exposed for the matching refinement and for tests.
double assignment_cost(const Mat& cost);

// cost(m, g) = -log softmax class prob of the gt category
//            + mean binary cross-entropy between sigmoid mask logits and mask
//            + Dice loss, unit weights.
Mat matching_cost(const HeadOutput& head, const std::vector<GroundTruthInstance>& gts,
                  double dice_smooth = 1.0);

// Mean BCE from logits plus smoothed Dice loss.
double mask_loss(const Vec& mask_logits, const std::vector<char>& gt_mask,
                 double dice_smooth = 1.0);

double instance_boundary_loss(const Mat& semantic_probs, const std::vector<int>& labels,
                              const BoundaryMask& boundary, double gamma,
                              double prob_floor = 1e-7);

// cls: weighted mean cross-entropy, matched queries against their gt
// category, unmatched against no-object (weight no_object_weight).
// obj: mean BCE of objectness against the matched indicator.
std::pair<double, double> classification_and_objectness_loss(
    const HeadOutput& head, const MatchResult& match,
    const std::vector<GroundTruthInstance>& gts, double no_object_weight = 0.1);

LossReport total_loss(double cls, double mask, double obj, double ibl,
                      const LossWeights& weights);

// ---- tape builders used by the training step ----

ad::Node* mask_loss_node(ad::Tape& t, ad::Node* mask_logits_row,
                         const std::vector<char>& gt_mask, double dice_smooth);

struct LossNodes {
  ad::Node* total = nullptr;
  ad::Node* cls = nullptr;
  ad::Node* mask = nullptr;
  ad::Node* obj = nullptr;
  ad::Node* ibl = nullptr;
  LossReport report() const;
};

// Builds the full composite loss for one scan given a fixed matching.
LossNodes build_scan_loss(ad::Tape& t, const HeadNodes& head,
                          const std::vector<GroundTruthInstance>& gts,
                          const MatchResult& match, const std::vector<int>& labels,
                          const BoundaryMask& boundary, const LossConfig& cfg,
                          int num_tooth_classes, double gingiva_floor);

}  // namespace toothseg
