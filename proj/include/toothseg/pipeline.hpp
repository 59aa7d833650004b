#pragma once

#include <string>
#include <vector>

#include "toothseg/data.hpp"
#include "toothseg/graphcut.hpp"
#include "toothseg/metrics.hpp"

namespace toothseg {

// Semantic argmax over the first num_classes columns of a prediction matrix.
std::vector<int> semantic_labels(const Mat& probs, int num_classes);

// Graph-cut refinement of one prediction: Potts labels from the semantic
// probabilities, then each kept instance re-voted onto the refined labels.
PredictionFile refine_prediction(const PredictionFile& pred, const PointSet& points,
                                 const GraphCutConfig& cfg, int num_classes);

struct ScanEvaluation {
  SemanticScores semantic;
  APResult ap;
};

ScanEvaluation evaluate_scan(const PredictionFile& pred, const Scan& gt,
                             const MetricsConfig& metrics, int num_classes);

struct DatasetReport {
  double oa = 0.0, macc = 0.0, miou = 0.0;
  double ap50 = 0.0, ap70 = 0.0, ap90 = 0.0, map_value = 0.0;
  std::vector<double> per_class_dice;  // macro-averaged where defined
  int scans = 0;
};

DatasetReport average_evaluations(const std::vector<ScanEvaluation>& evals);

void write_report_csv(const DatasetReport& report, const std::string& path);
std::string format_report_table(const DatasetReport& report);

}  // namespace toothseg
