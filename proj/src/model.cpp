#include "toothseg/model.hpp"

#include <cmath>
#include <random>

namespace toothseg {

namespace {

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gauss(std::mt19937_64& rng) {
  double u1 = u01(rng);
  while (u1 <= 1e-300) u1 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u01(rng));
}

void init_mat(Mat& w, double std, std::mt19937_64& rng) {
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) w(i, j) = std * gauss(rng);
}

}  // namespace

void init_head_params(ParamStore& store, const HeadConfig& cfg, int point_channels,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x6a09e667f3bcc909ULL);
  const int d = cfg.query_dim;
  auto dense = [&](const std::string& name, int in, int out, double std) {
    init_mat(store.add(name + ".w", in, out), std, rng);
    store.add(name + ".b", 1, out);
  };

  init_mat(store.add("head.queries", cfg.num_queries, d), 0.5, rng);
  dense("head.kv", point_channels, d, std::sqrt(2.0 / point_channels));
  for (int l = 0; l < cfg.num_decoder_layers; ++l) {
    const std::string p = "head.layer" + std::to_string(l);
    const double std = std::sqrt(1.0 / d);
    init_mat(store.add(p + ".wq", d, d), std, rng);
    init_mat(store.add(p + ".wk", d, d), std, rng);
    init_mat(store.add(p + ".wv", d, d), std, rng);
    init_mat(store.add(p + ".wo", d, d), std, rng);
    dense(p + ".ffn1", d, d, std::sqrt(2.0 / d));
    dense(p + ".ffn2", d, d, std::sqrt(2.0 / d));
  }
  dense("head.pp1", point_channels, d, std::sqrt(2.0 / point_channels));
  // Small output scale keeps the initial mask logits Q' E_pp^T near zero.
  dense("head.pp2", d, d, std::sqrt(1.0 / d) / std::sqrt(double(d)));
  dense("head.cls", d, cfg.num_tooth_classes + 1, std::sqrt(1.0 / d));
  dense("head.obj", d, 1, std::sqrt(1.0 / d));
}

HeadNodes head_forward(ad::Tape& t, ad::Node* point_features, ParamBinding& bind,
                       const HeadConfig& cfg) {
  using namespace ad;
  const int d = cfg.query_dim;

  Node* kv = relu(t, add_row_broadcast(t, matmul(t, point_features, bind("head.kv.w")),
                                       bind("head.kv.b")));
  Node* q = bind("head.queries");
  for (int l = 0; l < cfg.num_decoder_layers; ++l) {
    const std::string p = "head.layer" + std::to_string(l);
    Node* qp = matmul(t, q, bind(p + ".wq"));
    Node* kp = matmul(t, kv, bind(p + ".wk"));
    Node* vp = matmul(t, kv, bind(p + ".wv"));
    Node* scores = scale(t, matmul_nt(t, qp, kp), 1.0 / std::sqrt(double(d)));
    Node* attn = softmax_rows(t, scores);
    Node* ctx = matmul(t, attn, vp);
    q = add(t, q, matmul(t, ctx, bind(p + ".wo")));
    Node* h = relu(t, add_row_broadcast(t, matmul(t, q, bind(p + ".ffn1.w")),
                                        bind(p + ".ffn1.b")));
    h = add_row_broadcast(t, matmul(t, h, bind(p + ".ffn2.w")), bind(p + ".ffn2.b"));
    q = add(t, q, h);
  }

  Node* pp = relu(t, add_row_broadcast(t, matmul(t, point_features, bind("head.pp1.w")),
                                       bind("head.pp1.b")));
  pp = add_row_broadcast(t, matmul(t, pp, bind("head.pp2.w")), bind("head.pp2.b"));

  HeadNodes out;
  out.mask_logits = matmul_nt(t, q, pp);
  out.class_logits = add_row_broadcast(t, matmul(t, q, bind("head.cls.w")),
                                       bind("head.cls.b"));
  out.obj_logits = add_row_broadcast(t, matmul(t, q, bind("head.obj.w")),
                                     bind("head.obj.b"));
  return out;
}

void Model::init(std::uint64_t seed) {
  params.values.clear();
  init_backbone_params(params, backbone, seed);
  init_head_params(params, head, backbone.output_channels(), seed + 1);
}

ModelForward Model::forward(ad::Tape& t, const Mat& input, const GeometryPlan& plan,
                            bool with_grad) {
  ModelForward fwd;
  fwd.bind = ParamBinding{&t, &params, with_grad, {}};
  fwd.point_features = backbone_forward(t, t.leaf(input), plan, fwd.bind, backbone);
  fwd.head = head_forward(t, fwd.point_features, fwd.bind, head);
  return fwd;
}

}  // namespace toothseg
