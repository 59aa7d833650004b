#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toothseg/data.hpp"
#include "toothseg/losses.hpp"
#include "toothseg/model.hpp"

namespace toothseg {

// Per-scan cache: features, geometry and supervision targets are static, so
// they are prepared once and reused every epoch.
struct ScanSample {
  Scan scan;
  Mat features;  // N x 24, optionally column-standardized
  GeometryPlan plan;
  std::vector<GroundTruthInstance> gts;
  std::vector<int> labels;  // semantic categories, 0 = gingiva
  BoundaryMask boundary;
};

ScanSample prepare_sample(const Scan& scan, const PipelineConfig& cfg);

struct AdamState {
  std::map<std::string, Mat> m, v;
  long step = 0;
};

class Trainer {
 public:
  Trainer(const PipelineConfig& cfg);

  // Forward, Hungarian matching, composite loss, backward and one Adam update
  // over the batch. Throws on non-finite loss with the component values.
  LossReport train_step(const std::vector<const ScanSample*>& batch, double lr);

  LossNodes scan_loss(ad::Tape& tape, const ScanSample& sample, bool with_grad,
                      ModelForward* fwd_out = nullptr);

  double learning_rate(int epoch) const;

  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);

  Model& model() { return model_; }
  const PipelineConfig& config() const { return cfg_; }
  int epoch = 0;
  long global_step = 0;

 private:
  PipelineConfig cfg_;
  Model model_;
  AdamState opt_;
};

// Full epoch loop with CSV logging and periodic checkpoints; returns the
// final checkpoint path. Resumes from resume_path when given.
std::string run_training(const PipelineConfig& cfg, const std::vector<Scan>& scans,
                         const std::string& out_dir,
                         const std::optional<std::string>& resume_path = {});

PredictionFile infer_scan(Model& model, const ScanSample& sample,
                          const PipelineConfig& cfg);

}  // namespace toothseg
