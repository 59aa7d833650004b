#pragma once

#include <map>
#include <vector>

#include "toothseg/config.hpp"
#include "toothseg/losses.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

struct SemanticScores {
  double oa = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_iou;   // NaN for classes absent on both sides
  std::vector<double> per_class_dice;  // same convention
};

struct APResult {
  std::map<double, double> ap_at;
  double map_value = 0.0;
};

struct ScoredInstance {
  std::vector<char> mask;
  double score = 0.0;
};

SemanticScores semantic_metrics(const std::vector<int>& pred,
                                const std::vector<int>& gt, int num_classes);

// Class-agnostic instance AP at mask-IoU threshold T (strict >), all-point
// interpolated precision-recall area. No gts: 1 with no predictions, else 0.
double instance_ap(const std::vector<ScoredInstance>& preds,
                   const std::vector<GroundTruthInstance>& gts, double threshold);

APResult mean_ap(const std::vector<ScoredInstance>& preds,
                 const std::vector<GroundTruthInstance>& gts,
                 const std::vector<double>& thresholds);

// One instance per non-gingiva semantic class, unit score; the protocol used
// to compare semantic baselines on instance metrics.
std::vector<ScoredInstance> semantic_to_instances(const std::vector<int>& labels,
                                                  int num_classes);

}  // namespace toothseg
