#include "toothseg/instance_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace toothseg {

HeadOutput head_values(const HeadNodes& nodes) {
  HeadOutput out;
  out.mask_logits = nodes.mask_logits->val;
  out.class_logits = nodes.class_logits->val;
  out.objectness = (1.0 / (1.0 + (-nodes.obj_logits->val.col(0).array()).exp())).matrix();
  return out;
}

double binary_mask_iou(const Vec& a, const Vec& b) {
  int inter = 0, uni = 0;
  for (int i = 0; i < a.size(); ++i) {
    const bool pa = a(i) >= 0.5, pb = b(i) >= 0.5;
    inter += (pa && pb);
    uni += (pa || pb);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

std::vector<int> mask_nms(const std::vector<InstancePrediction>& predictions,
                          double iou_threshold) {
  std::vector<int> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return predictions[a].score > predictions[b].score;
  });
  std::vector<int> kept;
  for (int i : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (binary_mask_iou(predictions[i].mask_prob, predictions[k].mask_prob) >=
          iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<InstancePrediction> decode_instances(const HeadOutput& head,
                                                 const HeadConfig& cfg) {
  const int m = static_cast<int>(head.mask_logits.rows());
  const int num_classes = static_cast<int>(head.class_logits.cols());
  const int no_object = num_classes - 1;

  std::vector<InstancePrediction> candidates;
  for (int q = 0; q < m; ++q) {
    Eigen::ArrayXd logits = head.class_logits.row(q).array();
    logits -= logits.maxCoeff();
    Eigen::ArrayXd dist = logits.exp();
    dist /= dist.sum();

    int arg;
    dist.maxCoeff(&arg);
    if (arg == no_object) continue;
    const double max_tooth = dist.head(no_object).maxCoeff();
    const double score = head.objectness(q) * max_tooth;
    if (score < cfg.objectness_floor || max_tooth < cfg.class_floor) continue;

    InstancePrediction p;
    p.mask_prob = (1.0 / (1.0 + (-head.mask_logits.row(q).array()).exp())).matrix();
    p.class_dist = dist.matrix();
    p.score = score;
    candidates.push_back(std::move(p));
  }

  std::vector<int> kept = mask_nms(candidates, cfg.nms_iou);
  std::vector<InstancePrediction> out;
  out.reserve(kept.size());
  for (int i : kept) out.push_back(std::move(candidates[i]));
  return out;
}

Mat assemble_semantic_probs(const std::vector<InstancePrediction>& predictions,
                            double gingiva_floor, int num_points,
                            int num_tooth_classes) {
  Mat probs = Mat::Zero(num_points, num_tooth_classes + 1);
  for (const auto& pred : predictions) {
    for (int c = 0; c < num_tooth_classes; ++c) {
      const double w = pred.score * pred.class_dist(c);
      if (w == 0.0) continue;
      probs.col(c + 1) += w * pred.mask_prob;
    }
  }
  for (int i = 0; i < num_points; ++i) {
    const double tooth_mass = probs.row(i).sum();
    probs(i, 0) = std::max(gingiva_floor, 1.0 - tooth_mass);
    probs.row(i) /= probs.row(i).sum();
  }
  return probs;
}

ad::Node* assemble_semantic_probs_soft(ad::Tape& t, const HeadNodes& head,
                                       int num_tooth_classes,
                                       double gingiva_floor) {
  using namespace ad;
  Node* dist = softmax_rows(t, head.class_logits);           // M x (C+1)
  Node* tooth = slice_cols(t, dist, 0, num_tooth_classes);   // M x C
  Node* max_tooth = row_max(t, tooth);                       // M x 1
  Node* objectness = sigmoid(t, head.obj_logits);            // M x 1
  Node* score = mul(t, objectness, max_tooth);               // M x 1
  Node* weighted = mul_col_broadcast(t, tooth, score);       // M x C
  Node* mask_prob = sigmoid(t, head.mask_logits);            // M x N
  Node* tooth_mass = matmul_tn(t, mask_prob, weighted);      // N x C
  Node* mass_sum = row_sum(t, tooth_mass);                   // N x 1
  Node* gingiva = clamp_min(t, const_minus(t, 1.0, mass_sum), gingiva_floor);
  Node* unnorm = concat_cols(t, {gingiva, tooth_mass});      // N x (C+1)
  return div_col_broadcast(t, unnorm, row_sum(t, unnorm));
}

}  // namespace toothseg
