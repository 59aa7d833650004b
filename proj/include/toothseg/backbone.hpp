#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "toothseg/autodiff.hpp"
#include "toothseg/config.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

struct FeatureMap {
  Mat features;  // N_l x C_l
  Mat coords;    // N_l x 3
};

// Named parameter matrices; map order gives the deterministic iteration order
// for optimizer updates and checkpoints.
struct ParamStore {
  std::map<std::string, Mat> values;

  Mat& add(const std::string& name, int rows, int cols) {
    return values.emplace(name, Mat::Zero(rows, cols)).first->second;
  }
  Mat& at(const std::string& name) { return values.at(name); }
  const Mat& at(const std::string& name) const { return values.at(name); }
};

// Per-forward binding of parameters onto a tape. Gradients accumulate on the
// bound nodes and are harvested after backward().
struct ParamBinding {
  ad::Tape* tape = nullptr;
  ParamStore* store = nullptr;
  bool with_grad = false;
  std::map<std::string, ad::Node*> nodes;

  ad::Node* operator()(const std::string& name) {
    auto it = nodes.find(name);
    if (it != nodes.end()) return it->second;
    ad::Node* n = tape->leaf(store->at(name), with_grad);
    nodes.emplace(name, n);
    return n;
  }
};

// Static per-scan geometry: FPS samples, neighbor gathers and interpolation
// stencils depend only on coordinates, so they are computed once and reused
// across epochs.
struct StageGeometry {
  std::vector<int> sample_idx;  // into the previous level
  std::vector<int> gather_idx;  // flattened N_l * K rows into previous level
  Mat coords;                   // N_l x 3
  int k = 0;
};

struct InterpPlan {
  std::vector<std::array<int, 3>> idx;
  std::vector<std::array<double, 3>> w;
};

struct GeometryPlan {
  Mat full_coords;
  std::vector<StageGeometry> stages;   // encoder levels 1..S
  std::vector<InterpPlan> interps;     // decoder stages coarse->fine
};

StageGeometry plan_encoder_stage(const Mat& coords, int stride, int k,
                                 int fps_start = 0);
InterpPlan plan_interpolation(const Mat& coarse_coords, const Mat& fine_coords);
GeometryPlan build_geometry_plan(const Mat& coords, const BackboneConfig& cfg,
                                 int fps_start = 0);

// Parameter construction (deterministic given seed).
void init_backbone_params(ParamStore& store, const BackboneConfig& cfg,
                          std::uint64_t seed);

// y = x + w2 * relu(w1 * relu(x) + b1) + b2, shared across rows.
ad::Node* residual_block(ad::Tape& t, ad::Node* x, ParamBinding& bind,
                         const std::string& prefix);

ad::Node* encoder_stage(ad::Tape& t, ad::Node* features, const StageGeometry& geo,
                        ParamBinding& bind, const std::string& prefix,
                        const BackboneConfig& cfg);

ad::Node* decoder_stage(ad::Tape& t, ad::Node* coarse, const InterpPlan& interp,
                        ad::Node* skip, ParamBinding& bind, const std::string& prefix);

ad::Node* global_local_aggregate(ad::Tape& t, const std::vector<ad::Node*>& encoder_maps,
                                 ad::Node* final_decoder);
Mat global_local_aggregate(const std::vector<Mat>& encoder_maps, const Mat& final_decoder);

ad::Node* backbone_forward(ad::Tape& t, ad::Node* input, const GeometryPlan& plan,
                           ParamBinding& bind, const BackboneConfig& cfg);

// Convenience value-only evaluation.
Mat backbone_forward_values(const Mat& input, const Mat& coords,
                            const BackboneConfig& cfg, ParamStore& store,
                            int fps_start = 0);

}  // namespace toothseg
