#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace toothseg {

struct BackboneConfig {
  int input_channels = 24;
  int stem_channels = 32;
  std::vector<int> stage_channels = {64, 128, 256, 512};
  std::vector<int> stage_strides = {2, 2, 2, 2};
  std::vector<int> decoder_channels = {256, 128, 128, 128};
  int k_neighbors = 24;
  std::string sigma_mode = "scalar";  // "scalar" | "per_channel"
  double affine_eps = 1e-5;

  void validate() const;
  int output_channels() const;
};

struct HeadConfig {
  int num_queries = 32;
  int query_dim = 128;
  int num_decoder_layers = 2;
  int num_tooth_classes = 16;
  double objectness_floor = 0.3;
  double class_floor = 0.3;
  double nms_iou = 0.5;
  double gingiva_floor = 0.05;
};

struct LossConfig {
  double lambda_cls = 1.0;
  double lambda_mask = 1.0;
  double lambda_obj = 1.0;
  double lambda_ibl = 0.006;
  double gamma = 2.0;
  double no_object_weight = 0.1;
  double dice_smooth = 1.0;
  double prob_floor = 1e-7;
  int boundary_k = 16;
};

struct GraphCutConfig {
  int k = 8;
  double lambda_smooth = 2.0;
  double unary_eps = 1e-5;
  std::string optimizer = "expansion";  // "expansion" | "icm"
};

struct MetricsConfig {
  std::vector<double> ap_thresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                       0.75, 0.80, 0.85, 0.90, 0.95};
  std::string pr_interpolation = "all_point";
};

struct DataConfig {
  int target_points = 16000;
  bool mirror_categories = false;
  bool normalize_features = true;
};

struct TrainerConfig {
  int batch_size = 6;
  int epochs = 300;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int checkpoint_every = 50;
  double grad_clip = 5.0;
  bool cosine_decay = true;
};

struct SynthConfig {
  int n_teeth = 14;
  std::vector<int> missing;
  double jitter = 0.05;  // mm
  int points_per_scan = 2048;
  std::uint64_t seed = 0;
  int num_scans = 8;

  void validate() const;
};

struct PipelineConfig {
  BackboneConfig backbone;
  HeadConfig head;
  LossConfig loss;
  GraphCutConfig graphcut;
  MetricsConfig metrics;
  DataConfig data;
  TrainerConfig trainer;
  SynthConfig synth;
};

PipelineConfig default_config();

std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config_file(const std::string& path);
void save_config_file(const PipelineConfig& cfg, const std::string& path);

}  // namespace toothseg
