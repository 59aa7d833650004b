#include "toothseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace toothseg {

std::vector<int> semantic_labels(const Mat& probs, int num_classes) {
  std::vector<int> labels(probs.rows());
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < num_classes; ++c)
      if (probs(i, c) > probs(i, best)) best = c;
    labels[i] = best;
  }
  return labels;
}

PredictionFile refine_prediction(const PredictionFile& pred, const PointSet& points,
                                 const GraphCutConfig& cfg, int num_classes) {
  PottsProblem problem;
  problem.unary = unary_costs(pred.probs.leftCols(num_classes), cfg.unary_eps);
  problem.edges = build_graph(points, cfg.k);
  problem.smoothing_lambda = cfg.lambda_smooth;
  Labeling refined = minimize_energy(problem, cfg.optimizer);

  PredictionFile out;
  out.probs = Mat::Zero(pred.probs.rows(), pred.probs.cols());
  for (int i = 0; i < pred.probs.rows(); ++i) out.probs(i, refined.labels[i]) = 1.0;

  out.instances = pred.instances;
  for (auto& inst : out.instances) {
    // Majority vote of refined labels over the instance mask updates the class.
    std::vector<int> counts(num_classes, 0);
    for (int i = 0; i < inst.mask_prob.size(); ++i)
      if (inst.mask_prob(i) >= 0.5) counts[refined.labels[i]]++;
    int best = 0;
    for (int c = 1; c < num_classes; ++c)
      if (counts[c] > counts[best]) best = c;
    if (best > 0) {
      Vec dist = Vec::Zero(inst.class_dist.size());
      dist(best - 1) = 1.0;  // tooth classes occupy the leading entries
      inst.class_dist = dist;
    }
  }
  return out;
}

ScanEvaluation evaluate_scan(const PredictionFile& pred, const Scan& gt,
                             const MetricsConfig& metrics, int num_classes) {
  ScanEvaluation ev;
  std::vector<int> pred_labels = semantic_labels(pred.probs, num_classes);
  ev.semantic = semantic_metrics(pred_labels, gt.categories, num_classes);

  std::vector<ScoredInstance> scored;
  for (const auto& inst : pred.instances) {
    ScoredInstance si;
    si.score = inst.score;
    si.mask.resize(inst.mask_prob.size());
    for (int i = 0; i < inst.mask_prob.size(); ++i) si.mask[i] = inst.mask_prob(i) >= 0.5;
    scored.push_back(std::move(si));
  }
  ev.ap = mean_ap(scored, scan_instances(gt), metrics.ap_thresholds);
  return ev;
}

DatasetReport average_evaluations(const std::vector<ScanEvaluation>& evals) {
  DatasetReport r;
  r.scans = static_cast<int>(evals.size());
  if (evals.empty()) return r;

  std::size_t classes = 0;
  for (const auto& ev : evals)
    classes = std::max(classes, ev.semantic.per_class_dice.size());
  std::vector<double> dice_sum(classes, 0.0);
  std::vector<int> dice_count(classes, 0);

  auto ap_near = [](const APResult& ap, double t) {
    for (const auto& [key, value] : ap.ap_at)
      if (std::abs(key - t) < 1e-9) return value;
    return 0.0;
  };

  for (const auto& ev : evals) {
    r.oa += ev.semantic.oa;
    r.macc += ev.semantic.macc;
    r.miou += ev.semantic.miou;
    r.map_value += ev.ap.map_value;
    r.ap50 += ap_near(ev.ap, 0.50);
    r.ap70 += ap_near(ev.ap, 0.70);
    r.ap90 += ap_near(ev.ap, 0.90);
    for (std::size_t c = 0; c < ev.semantic.per_class_dice.size(); ++c) {
      if (!std::isnan(ev.semantic.per_class_dice[c])) {
        dice_sum[c] += ev.semantic.per_class_dice[c];
        dice_count[c]++;
      }
    }
  }
  const double inv = 1.0 / r.scans;
  r.oa *= inv;
  r.macc *= inv;
  r.miou *= inv;
  r.map_value *= inv;
  r.ap50 *= inv;
  r.ap70 *= inv;
  r.ap90 *= inv;
  r.per_class_dice.resize(classes);
  for (std::size_t c = 0; c < classes; ++c)
    r.per_class_dice[c] = dice_count[c] > 0
                              ? dice_sum[c] / dice_count[c]
                              : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_report_csv(const DatasetReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write report: " + path);
  out << "OA,mACC,mIoU,AP@0.5,AP@0.7,AP@0.9,mAP";
  for (std::size_t c = 0; c < report.per_class_dice.size(); ++c)
    out << ",Dice_c" << c;
  out << "\n";
  out << std::setprecision(6) << std::fixed;
  out << report.oa << ',' << report.macc << ',' << report.miou << ',' << report.ap50
      << ',' << report.ap70 << ',' << report.ap90 << ',' << report.map_value;
  for (double d : report.per_class_dice) out << ',' << d;
  out << "\n";
}

std::string format_report_table(const DatasetReport& report) {
  std::ostringstream ss;
  ss << std::setprecision(2) << std::fixed;
  ss << "+--------+--------+--------+--------+--------+--------+--------+\n"
     << "|   OA   |  mACC  |  mIoU  | AP@0.5 | AP@0.7 | AP@0.9 |  mAP   |\n"
     << "+--------+--------+--------+--------+--------+--------+--------+\n";
  auto cell = [&](double v) {
    std::ostringstream c;
    c << std::setprecision(2) << std::fixed << std::setw(5) << 100.0 * v << "%";
    return c.str();
  };
  ss << "| " << cell(report.oa) << " | " << cell(report.macc) << " | "
     << cell(report.miou) << " | " << cell(report.ap50) << " | " << cell(report.ap70)
     << " | " << cell(report.ap90) << " | " << cell(report.map_value) << " |\n"
     << "+--------+--------+--------+--------+--------+--------+--------+\n"
     << "(macro-averaged over " << report.scans << " scans)\n";
  return ss.str();
}

}  // namespace toothseg
