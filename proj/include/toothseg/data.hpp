#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "toothseg/config.hpp"
#include "toothseg/instance_head.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

// A labeled maxillary scan. Face data carries, per point, the coordinates and
// normals of the three vertices of one incident mesh triangle.
struct Scan {
  PointSet points;
  Mat face_vertex_coords;   // N x 9, vertex-index order
  Mat face_vertex_normals;  // N x 9
  std::vector<int> instance_ids;  // 0 = gingiva, 1..16 tooth positions
  std::vector<int> categories;    // 0..16 (0..8 in mirrored mode)

  int size() const { return points.size(); }
  void validate() const;
};

// 0 -> 0; 11..18 -> 1..8; 21..28 -> 9..16. With mirror_categories the left
// quadrant folds onto the right: 21..28 -> 1..8.
int fdi_to_category(int fdi, bool mirror_categories = false);

Scan load_scan(const std::string& mesh_path, const std::string& label_path,
               bool mirror_categories = false);

Scan downsample_scan(const Scan& scan, int target, std::uint64_t seed = 0);

// N x 24: point coord (3), point normal (3), face vertex coords (9),
// face vertex normals (9).
Mat build_input_features(const Scan& scan);

Scan generate_synthetic_arch(const SynthConfig& config);

// Deterministic corpus with rotating clinical variety: 14/15/16-tooth arches,
// every fourth scan with a premolar gap, 15/16-tooth scans with wisdom teeth.
std::vector<Scan> generate_synthetic_corpus(const SynthConfig& base, int num_scans);

// Ground-truth instances of a scan: one per distinct nonzero instance id,
// ascending id order.
std::vector<GroundTruthInstance> scan_instances(const Scan& scan);

// ---- binary formats ----

// "BATP" prediction file: magic, version u16, N u32, P (N x 17 float32 LE,
// row-major), instance count u32, then per instance class distribution (17
// float32), score (float32), mask probabilities (N float32).
void write_prediction(const Mat& probs, const std::vector<InstancePrediction>& instances,
                      const std::string& path);
struct PredictionFile {
  Mat probs;
  std::vector<InstancePrediction> instances;
};
PredictionFile read_prediction(const std::string& path);

// "BATS" processed-scan file, float32 payload.
void write_scan(const Scan& scan, const std::string& path);
Scan read_scan(const std::string& path);

// Checkpoint: map of named float32 arrays with shape headers; the pipeline
// config is serialized alongside as <path>.json.
using ArrayMap = std::map<std::string, Mat>;
void write_checkpoint(const ArrayMap& arrays, const std::string& path);
ArrayMap read_checkpoint(const std::string& path);

// Colored point cloud export for offline inspection.
void write_labeled_ply(const std::string& path, const Mat& coords,
                       const std::vector<int>& labels);

std::vector<std::string> list_files(const std::string& dir, const std::string& ext);

}  // namespace toothseg
