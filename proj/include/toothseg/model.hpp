#pragma once

#include "toothseg/backbone.hpp"
#include "toothseg/config.hpp"
#include "toothseg/instance_head.hpp"

namespace toothseg {

void init_head_params(ParamStore& store, const HeadConfig& cfg, int point_channels,
                      std::uint64_t seed);

// Cross-attention refinement of the learnable queries over projected point
// features, then the three output branches.
HeadNodes head_forward(ad::Tape& t, ad::Node* point_features, ParamBinding& bind,
                       const HeadConfig& cfg);

struct ModelForward {
  ad::Node* point_features = nullptr;  // F_bb
  HeadNodes head;
  ParamBinding bind;
};

struct Model {
  BackboneConfig backbone;
  HeadConfig head;
  ParamStore params;

  void init(std::uint64_t seed);
  ModelForward forward(ad::Tape& t, const Mat& input, const GeometryPlan& plan,
                       bool with_grad);
};

}  // namespace toothseg
