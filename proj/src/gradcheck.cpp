#include "toothseg/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "toothseg/autodiff.hpp"
#include "toothseg/geometry.hpp"
#include "toothseg/losses.hpp"
#include "toothseg/training.hpp"

namespace toothseg {

namespace {

constexpr double kTol = 1e-4;
constexpr double kDenomFloor = 1e-2;
constexpr double kStep = 1e-5;

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kDenomFloor});
}

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Mat random_mat(int rows, int cols, std::mt19937_64& rng, double lo = -1.0,
               double hi = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = lo + (hi - lo) * u01(rng);
  return m;
}

// Checks d(scalar fn)/d(every entry of *target) by central differences.
double check_entries(Mat& target, const std::function<double()>& value,
                     const Mat& analytic) {
  double worst = 0.0;
  for (int i = 0; i < target.rows(); ++i) {
    for (int j = 0; j < target.cols(); ++j) {
      const double keep = target(i, j);
      target(i, j) = keep + kStep;
      const double up = value();
      target(i, j) = keep - kStep;
      const double down = value();
      target(i, j) = keep;
      worst = std::max(worst, rel_err(analytic(i, j), (up - down) / (2.0 * kStep)));
    }
  }
  return worst;
}

GradcheckResult check_affine(std::uint64_t seed, bool per_channel) {
  GradcheckResult res;
  res.name = per_channel ? "local_affine_norm(per_channel)" : "local_affine_norm(scalar)";
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < 8; ++trial) {
    const int k = 2 + int(rng() % 3);   // K <= 4
    const int c = 1 + int(rng() % 3);   // C <= 3
    const int groups = 1 + int(rng() % 2);
    Mat f = random_mat(groups * k, c, rng);
    Mat alpha = random_mat(1, c, rng, 0.5, 1.5);
    Mat beta = random_mat(1, c, rng, -0.5, 0.5);
    Mat weight = random_mat(groups * k, c, rng);  // random linear functional

    auto value = [&]() {
      ad::Tape t;
      ad::Node* out = ad::geometric_affine(t, t.leaf(f), k, t.leaf(alpha),
                                           t.leaf(beta), 1e-5, per_channel);
      return out->val.cwiseProduct(weight).sum();
    };

    ad::Tape t;
    ad::Node* fn = t.leaf(f, true);
    ad::Node* an = t.leaf(alpha, true);
    ad::Node* bn = t.leaf(beta, true);
    ad::Node* out = ad::geometric_affine(t, fn, k, an, bn, 1e-5, per_channel);
    ad::Node* loss = ad::sum(t, ad::mul(t, out, t.leaf(weight)));
    t.backward(loss);

    res.max_rel_err = std::max(res.max_rel_err, check_entries(f, value, fn->grad));
    res.max_rel_err = std::max(res.max_rel_err, check_entries(alpha, value, an->grad));
    res.max_rel_err = std::max(res.max_rel_err, check_entries(beta, value, bn->grad));
  }
  res.passed = res.max_rel_err <= kTol;
  return res;
}

GradcheckResult check_boundary_focal(std::uint64_t seed) {
  GradcheckResult res;
  res.name = "boundary_focal_loss";
  std::mt19937_64 rng(seed);
  const double gammas[] = {2.0, 0.0, 1.5};
  for (int trial = 0; trial < 9; ++trial) {
    const int n = 4 + int(rng() % 9);
    const int c = 3 + int(rng() % 3);
    Mat p = random_mat(n, c, rng, 0.05, 1.0);
    for (int i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
    std::vector<int> labels(n);
    std::vector<char> boundary(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = int(rng() % c);
      boundary[i] = (rng() % 2) != 0;
    }
    boundary[0] = 1;  // non-empty boundary set
    const double gamma = gammas[trial % 3];

    auto value = [&]() {
      ad::Tape t;
      return ad::boundary_focal_loss(t, t.leaf(p), labels, boundary, gamma, 1e-7)
          ->val(0, 0);
    };

    ad::Tape t;
    ad::Node* pn = t.leaf(p, true);
    ad::Node* loss = ad::boundary_focal_loss(t, pn, labels, boundary, gamma, 1e-7);
    t.backward(loss);
    if (pn->grad.size() == 0) pn->g();

    // Locality: the gradient is identically zero off the boundary set.
    for (int i = 0; i < n; ++i)
      if (!boundary[i] && pn->grad.row(i).cwiseAbs().maxCoeff() != 0.0) {
        res.max_rel_err = 1.0;
        res.passed = false;
        return res;
      }
    // FD only on boundary rows; off-boundary entries have no effect at all.
    Mat analytic = pn->grad;
    for (int i = 0; i < n; ++i) {
      if (!boundary[i]) continue;
      for (int j = 0; j < c; ++j) {
        const double keep = p(i, j);
        p(i, j) = keep + kStep;
        const double up = value();
        p(i, j) = keep - kStep;
        const double down = value();
        p(i, j) = keep;
        res.max_rel_err = std::max(
            res.max_rel_err, rel_err(analytic(i, j), (up - down) / (2.0 * kStep)));
      }
    }
  }
  res.passed = res.max_rel_err <= kTol;
  return res;
}

GradcheckResult check_mask_loss(std::uint64_t seed) {
  GradcheckResult res;
  res.name = "mask_bce_dice_loss";
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 4 + int(rng() % 13);
    Mat logits = random_mat(1, n, rng, -2.0, 2.0);
    std::vector<char> mask(n);
    for (int i = 0; i < n; ++i) mask[i] = (rng() % 2) != 0;
    mask[0] = 1;

    auto value = [&]() {
      Vec row = logits.row(0).transpose();
      return mask_loss(row, mask, 1.0);
    };

    ad::Tape t;
    ad::Node* ln = t.leaf(logits, true);
    ad::Node* loss = mask_loss_node(t, ln, mask, 1.0);
    t.backward(loss);
    res.max_rel_err = std::max(res.max_rel_err, check_entries(logits, value, ln->grad));
  }
  res.passed = res.max_rel_err <= kTol;
  return res;
}

GradcheckResult check_total_loss(std::uint64_t seed) {
  GradcheckResult res;
  res.name = "composite_total_loss";

  PipelineConfig cfg;
  cfg.backbone.input_channels = 24;
  cfg.backbone.stem_channels = 6;
  cfg.backbone.stage_channels = {8, 8};
  cfg.backbone.stage_strides = {2, 2};
  cfg.backbone.decoder_channels = {8, 8};
  cfg.backbone.k_neighbors = 4;
  cfg.head.num_queries = 3;
  cfg.head.query_dim = 8;
  cfg.head.num_decoder_layers = 1;
  cfg.head.num_tooth_classes = 4;
  cfg.loss.boundary_k = 3;
  cfg.trainer.seed = seed;
  cfg.data.normalize_features = false;

  SynthConfig synth;
  synth.n_teeth = 3;
  synth.points_per_scan = 64;
  synth.seed = seed;
  synth.jitter = 0.02;
  Scan scan = generate_synthetic_arch(synth);
  // Shrink to 16 points and fold categories into the 4-class head.
  Scan small = downsample_scan(scan, 16, 0);
  for (auto& c : small.categories) c = c == 0 ? 0 : 1 + (c - 1) % 4;
  for (std::size_t i = 0; i < small.instance_ids.size(); ++i)
    small.instance_ids[i] = small.categories[i];

  ScanSample sample = prepare_sample(small, cfg);
  Trainer trainer(cfg);
  Model& model = trainer.model();

  // Freeze the assignment at the base point; the loss below reuses it.
  MatchResult match;
  {
    ad::Tape t;
    ModelForward fwd = model.forward(t, sample.features, sample.plan, false);
    match = hungarian_match(matching_cost(head_values(fwd.head), sample.gts,
                                          cfg.loss.dice_smooth));
  }

  auto loss_value = [&]() {
    ad::Tape t;
    ModelForward fwd = model.forward(t, sample.features, sample.plan, false);
    LossNodes nodes = build_scan_loss(t, fwd.head, sample.gts, match, sample.labels,
                                      sample.boundary, cfg.loss,
                                      cfg.head.num_tooth_classes,
                                      cfg.head.gingiva_floor);
    return nodes.total->val(0, 0);
  };

  ad::Tape t;
  ModelForward fwd = model.forward(t, sample.features, sample.plan, true);
  LossNodes nodes = build_scan_loss(t, fwd.head, sample.gts, match, sample.labels,
                                    sample.boundary, cfg.loss,
                                    cfg.head.num_tooth_classes, cfg.head.gingiva_floor);
  t.backward(nodes.total);

  for (auto& [name, node] : fwd.bind.nodes) {
    Mat analytic = node->grad.size() == 0
                       ? Mat::Zero(node->val.rows(), node->val.cols())
                       : node->grad;
    res.max_rel_err = std::max(
        res.max_rel_err, check_entries(model.params.at(name), loss_value, analytic));
  }
  res.passed = res.max_rel_err <= kTol;
  return res;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, std::ostream* log) {
  std::vector<GradcheckResult> all;
  all.push_back(check_affine(seed + 1, false));
  all.push_back(check_affine(seed + 2, true));
  all.push_back(check_boundary_focal(seed + 3));
  all.push_back(check_mask_loss(seed + 4));
  all.push_back(check_total_loss(seed + 5));
  if (log) {
    for (const auto& r : all)
      (*log) << (r.passed ? "[PASS] " : "[FAIL] ") << r.name
             << " max_rel_err=" << r.max_rel_err << "\n";
  }
  return all;
}

bool gradcheck_passed(const std::vector<GradcheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace toothseg
