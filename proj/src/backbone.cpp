#include "toothseg/backbone.hpp"

#include <cmath>
#include <random>

#include "toothseg/geometry.hpp"

namespace toothseg {

namespace {

PointSet as_point_set(const Mat& coords) {
  PointSet ps;
  ps.coords = coords;
  ps.normals = Mat::Zero(coords.rows(), 3);
  ps.normals.col(2).setOnes();
  return ps;
}

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gauss(std::mt19937_64& rng) {
  double u1 = u01(rng);
  while (u1 <= 1e-300) u1 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u01(rng));
}

void he_init(Mat& w, std::mt19937_64& rng) {
  const double std = std::sqrt(2.0 / std::max<int>(1, w.rows()));
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) w(i, j) = std * gauss(rng);
}

}  // namespace

StageGeometry plan_encoder_stage(const Mat& coords, int stride, int k, int fps_start) {
  const int n = static_cast<int>(coords.rows());
  const int m = (n + stride - 1) / stride;
  StageGeometry geo;
  geo.k = std::min(k, n);
  PointSet ps = as_point_set(coords);
  geo.sample_idx = farthest_point_sample(ps, m, fps_start);
  geo.coords.resize(m, 3);
  for (int i = 0; i < m; ++i) geo.coords.row(i) = coords.row(geo.sample_idx[i]);
  NeighborIndex nn = knn_indices(ps, geo.coords, geo.k);
  geo.gather_idx.resize(static_cast<std::size_t>(m) * geo.k);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < geo.k; ++j)
      geo.gather_idx[static_cast<std::size_t>(i) * geo.k + j] = nn.indices(i, j);
  return geo;
}

InterpPlan plan_interpolation(const Mat& coarse_coords, const Mat& fine_coords) {
  const int nc = static_cast<int>(coarse_coords.rows());
  if (nc < 1) throw PreconditionError("plan_interpolation: empty coarse set");
  const int k = std::min(3, nc);
  NeighborIndex nn = knn_indices(as_point_set(coarse_coords), fine_coords, k);
  InterpPlan plan;
  const int nf = static_cast<int>(fine_coords.rows());
  plan.idx.resize(nf, {-1, -1, -1});
  plan.w.resize(nf, {0.0, 0.0, 0.0});
  for (int i = 0; i < nf; ++i) {
    double wsum = 0.0;
    for (int j = 0; j < k; ++j) {
      const int src = nn.indices(i, j);
      const double d = (coarse_coords.row(src) - fine_coords.row(i)).norm();
      plan.idx[i][j] = src;
      plan.w[i][j] = 1.0 / (d + 1e-8);
      wsum += plan.w[i][j];
    }
    for (int j = 0; j < k; ++j) plan.w[i][j] /= wsum;
  }
  return plan;
}

GeometryPlan build_geometry_plan(const Mat& coords, const BackboneConfig& cfg,
                                 int fps_start) {
  cfg.validate();
  GeometryPlan plan;
  plan.full_coords = coords;
  Mat level = coords;
  for (std::size_t s = 0; s < cfg.stage_strides.size(); ++s) {
    StageGeometry geo = plan_encoder_stage(level, cfg.stage_strides[s],
                                           cfg.k_neighbors, fps_start);
    level = geo.coords;
    plan.stages.push_back(std::move(geo));
  }
  // Decoder runs coarse-to-fine; stage i interpolates level S-i onto S-i-1.
  const int s_count = static_cast<int>(plan.stages.size());
  for (int i = 0; i < s_count; ++i) {
    const Mat& coarse = plan.stages[s_count - 1 - i].coords;
    const Mat& fine =
        (s_count - 1 - i == 0) ? plan.full_coords : plan.stages[s_count - 2 - i].coords;
    plan.interps.push_back(plan_interpolation(coarse, fine));
  }
  return plan;
}

void init_backbone_params(ParamStore& store, const BackboneConfig& cfg,
                          std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed ^ 0xb5ad4eceda1ce2a9ULL);
  auto dense = [&](const std::string& name, int in, int out) {
    he_init(store.add(name + ".w", in, out), rng);
    store.add(name + ".b", 1, out);
  };

  dense("backbone.stem", cfg.input_channels, cfg.stem_channels);
  int prev = cfg.stem_channels;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const std::string p = "backbone.enc" + std::to_string(s);
    store.add(p + ".alpha", 1, prev).setOnes();
    store.add(p + ".beta", 1, prev);
    dense(p + ".lift", prev, cfg.stage_channels[s]);
    for (int b = 0; b < 2; ++b) {
      const std::string bp = p + ".block" + std::to_string(b);
      dense(bp + ".fc1", cfg.stage_channels[s], cfg.stage_channels[s]);
      dense(bp + ".fc2", cfg.stage_channels[s], cfg.stage_channels[s]);
    }
    prev = cfg.stage_channels[s];
  }

  const int s_count = static_cast<int>(cfg.stage_channels.size());
  int coarse_ch = cfg.stage_channels.back();
  for (int i = 0; i < s_count; ++i) {
    const int skip_ch =
        (s_count - 1 - i == 0) ? cfg.stem_channels : cfg.stage_channels[s_count - 2 - i];
    const std::string p = "backbone.dec" + std::to_string(i);
    dense(p + ".fuse", coarse_ch + skip_ch, cfg.decoder_channels[i]);
    for (int b = 0; b < 2; ++b) {
      const std::string bp = p + ".block" + std::to_string(b);
      dense(bp + ".fc1", cfg.decoder_channels[i], cfg.decoder_channels[i]);
      dense(bp + ".fc2", cfg.decoder_channels[i], cfg.decoder_channels[i]);
    }
    coarse_ch = cfg.decoder_channels[i];
  }
}

ad::Node* residual_block(ad::Tape& t, ad::Node* x, ParamBinding& bind,
                         const std::string& prefix) {
  using namespace ad;
  Node* h = relu(t, x);
  h = add_row_broadcast(t, matmul(t, h, bind(prefix + ".fc1.w")), bind(prefix + ".fc1.b"));
  h = relu(t, h);
  h = add_row_broadcast(t, matmul(t, h, bind(prefix + ".fc2.w")), bind(prefix + ".fc2.b"));
  return add(t, x, h);
}

ad::Node* encoder_stage(ad::Tape& t, ad::Node* features, const StageGeometry& geo,
                        ParamBinding& bind, const std::string& prefix,
                        const BackboneConfig& cfg) {
  using namespace ad;
  Node* grouped = gather_rows(t, features, geo.gather_idx);
  Node* normed = geometric_affine(t, grouped, geo.k, bind(prefix + ".alpha"),
                                  bind(prefix + ".beta"), cfg.affine_eps,
                                  cfg.sigma_mode == "per_channel");
  Node* lifted = add_row_broadcast(t, matmul(t, normed, bind(prefix + ".lift.w")),
                                   bind(prefix + ".lift.b"));
  Node* h = residual_block(t, lifted, bind, prefix + ".block0");
  h = residual_block(t, h, bind, prefix + ".block1");
  return group_max_rows(t, h, geo.k);
}

ad::Node* decoder_stage(ad::Tape& t, ad::Node* coarse, const InterpPlan& interp,
                        ad::Node* skip, ParamBinding& bind, const std::string& prefix) {
  using namespace ad;
  if (coarse->val.rows() < 1) throw PreconditionError("decoder_stage: empty coarse set");
  Node* up = interpolate_rows(t, coarse, interp.idx, interp.w);
  Node* fused = concat_cols(t, {up, skip});
  Node* h = add_row_broadcast(t, matmul(t, fused, bind(prefix + ".fuse.w")),
                              bind(prefix + ".fuse.b"));
  h = relu(t, h);
  h = residual_block(t, h, bind, prefix + ".block0");
  return residual_block(t, h, bind, prefix + ".block1");
}

ad::Node* global_local_aggregate(ad::Tape& t, const std::vector<ad::Node*>& encoder_maps,
                                 ad::Node* final_decoder) {
  using namespace ad;
  if (encoder_maps.empty())
    throw PreconditionError("global_local_aggregate: empty encoder list");
  std::vector<Node*> pooled;
  for (Node* m : encoder_maps) pooled.push_back(colwise_max(t, m));
  Node* global = pooled.size() == 1 ? pooled[0] : concat_cols(t, pooled);
  Node* repeated = repeat_row(t, global, static_cast<int>(final_decoder->val.rows()));
  return concat_cols(t, {final_decoder, repeated});
}

Mat global_local_aggregate(const std::vector<Mat>& encoder_maps, const Mat& final_decoder) {
  ad::Tape t;
  std::vector<ad::Node*> nodes;
  for (const Mat& m : encoder_maps) nodes.push_back(t.leaf(m));
  return global_local_aggregate(t, nodes, t.leaf(final_decoder))->val;
}

ad::Node* backbone_forward(ad::Tape& t, ad::Node* input, const GeometryPlan& plan,
                           ParamBinding& bind, const BackboneConfig& cfg) {
  using namespace ad;
  if (input->val.cols() != cfg.input_channels)
    throw PreconditionError("backbone_forward: input channel mismatch");
  if (input->val.rows() != plan.full_coords.rows())
    throw PreconditionError("backbone_forward: input row mismatch with plan");

  Node* stem = add_row_broadcast(t, matmul(t, input, bind("backbone.stem.w")),
                                 bind("backbone.stem.b"));

  std::vector<Node*> encoder_outputs;
  Node* feat = stem;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    feat = encoder_stage(t, feat, plan.stages[s], bind,
                         "backbone.enc" + std::to_string(s), cfg);
    encoder_outputs.push_back(feat);
  }

  const int s_count = static_cast<int>(plan.stages.size());
  Node* dec = encoder_outputs.back();
  for (int i = 0; i < s_count; ++i) {
    Node* skip = (s_count - 1 - i == 0) ? stem : encoder_outputs[s_count - 2 - i];
    dec = decoder_stage(t, dec, plan.interps[i], skip, bind,
                        "backbone.dec" + std::to_string(i));
  }

  return global_local_aggregate(t, encoder_outputs, dec);
}

Mat backbone_forward_values(const Mat& input, const Mat& coords,
                            const BackboneConfig& cfg, ParamStore& store,
                            int fps_start) {
  ad::Tape t;
  GeometryPlan plan = build_geometry_plan(coords, cfg, fps_start);
  ParamBinding bind{&t, &store, false, {}};
  return backbone_forward(t, t.leaf(input), plan, bind, cfg)->val;
}

}  // namespace toothseg
