#include "toothseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace toothseg {

SemanticScores semantic_metrics(const std::vector<int>& pred,
                                const std::vector<int>& gt, int num_classes) {
  const int n = static_cast<int>(gt.size());
  if (static_cast<int>(pred.size()) != n)
    throw PreconditionError("semantic_metrics: length mismatch");

  std::vector<std::vector<long>> conf(num_classes, std::vector<long>(num_classes, 0));
  for (int i = 0; i < n; ++i) {
    if (gt[i] < 0 || gt[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
      throw PreconditionError("semantic_metrics: label out of range");
    conf[gt[i]][pred[i]]++;
  }

  SemanticScores s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.per_class_iou.assign(num_classes, nan);
  s.per_class_dice.assign(num_classes, nan);

  long correct = 0;
  double acc_sum = 0.0, iou_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const long tp = conf[c][c];
    long fn = 0, fp = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fn += conf[c][o];
      fp += conf[o][c];
    }
    correct += tp;
    const long gt_count = tp + fn;
    const long pred_count = tp + fp;
    if (gt_count == 0 && pred_count == 0) continue;  // absent everywhere
    ++present;
    const double recall = gt_count > 0 ? double(tp) / gt_count : 0.0;
    const double iou = double(tp) / double(tp + fp + fn);
    s.per_class_iou[c] = iou;
    s.per_class_dice[c] = 2.0 * tp / double(2 * tp + fp + fn);
    acc_sum += recall;
    iou_sum += iou;
  }
  s.oa = n > 0 ? double(correct) / n : 0.0;
  s.macc = present > 0 ? acc_sum / present : 0.0;
  s.miou = present > 0 ? iou_sum / present : 0.0;
  return s;
}

namespace {

double mask_iou(const std::vector<char>& a, const std::vector<char>& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]);
    uni += (a[i] || b[i]);
  }
  return uni == 0 ? 0.0 : double(inter) / uni;
}

}  // namespace

double instance_ap(const std::vector<ScoredInstance>& preds,
                   const std::vector<GroundTruthInstance>& gts, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw PreconditionError("instance_ap: threshold must be in (0,1)");
  if (gts.empty()) return preds.empty() ? 1.0 : 0.0;
  if (preds.empty()) return 0.0;

  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<char> gt_taken(gts.size(), 0);
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (int idx : order) {
    int best_gt = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g]) continue;
      const double iou = mask_iou(preds[idx].mask, gts[g].mask);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best_iou > threshold) {
      gt_taken[best_gt] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(double(tp) / (tp + fp));
    recall.push_back(double(tp) / gts.size());
  }

  // All-point interpolation: integrate the running precision envelope.
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    double envelope = precision[i];
    for (std::size_t j = i + 1; j < precision.size(); ++j)
      envelope = std::max(envelope, precision[j]);
    ap += (recall[i] - prev_recall) * envelope;
    prev_recall = recall[i];
  }
  return ap;
}

APResult mean_ap(const std::vector<ScoredInstance>& preds,
                 const std::vector<GroundTruthInstance>& gts,
                 const std::vector<double>& thresholds) {
  APResult r;
  double acc = 0.0;
  for (double t : thresholds) {
    const double ap = instance_ap(preds, gts, t);
    r.ap_at[t] = ap;
    acc += ap;
  }
  r.map_value = thresholds.empty() ? 0.0 : acc / thresholds.size();
  return r;
}

std::vector<ScoredInstance> semantic_to_instances(const std::vector<int>& labels,
                                                  int num_classes) {
  std::vector<ScoredInstance> out;
  for (int c = 1; c < num_classes; ++c) {
    ScoredInstance inst;
    inst.mask.assign(labels.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) {
        inst.mask[i] = 1;
        any = true;
      }
    }
    inst.score = 1.0;
    if (any) out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace toothseg
