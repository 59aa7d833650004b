#pragma once

#include <vector>

#include "toothseg/autodiff.hpp"
#include "toothseg/config.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

// Learnable query embeddings plus the per-layer attention weights live in the
// ParamStore (training.hpp); this header holds the value-level head types and
// the pure decoding operations.

struct HeadOutput {
  Mat mask_logits;   // M x N
  Mat class_logits;  // M x (C+1), last column is the no-object class
  Vec objectness;    // length M, in (0,1)
};

struct InstancePrediction {
  Vec mask_prob;   // length N, in [0,1]
  Vec class_dist;  // length C+1 (tooth classes then no-object), sums to 1
  double score = 0.0;
};

// Tape handles for the differentiable head outputs of one forward pass.
struct HeadNodes {
  ad::Node* mask_logits = nullptr;
  ad::Node* class_logits = nullptr;
  ad::Node* obj_logits = nullptr;  // M x 1, pre-sigmoid
};

HeadOutput head_values(const HeadNodes& nodes);

// Greedy NMS over binarized masks (threshold 0.5) in descending score order;
// suppressed iff binary IoU with any kept mask >= iou_threshold. Returns kept
// indices in descending score order.
std::vector<int> mask_nms(const std::vector<InstancePrediction>& predictions,
                          double iou_threshold);

// Sigmoid/softmax decode of all queries, confidence filtering, then NMS.
std::vector<InstancePrediction> decode_instances(const HeadOutput& head,
                                                 const HeadConfig& cfg);

// N x (C+1) row-stochastic semantic matrix; column 0 is gingiva, columns
// 1..C are tooth classes.
Mat assemble_semantic_probs(const std::vector<InstancePrediction>& predictions,
                            double gingiva_floor, int num_points,
                            int num_tooth_classes);

// Differentiable semantic assembly over every query (no floors, no NMS);
// used by the training loss so Eq-style per-class probabilities get
// supervised directly.
ad::Node* assemble_semantic_probs_soft(ad::Tape& t, const HeadNodes& head,
                                       int num_tooth_classes,
                                       double gingiva_floor);

double binary_mask_iou(const Vec& a, const Vec& b);

}  // namespace toothseg
