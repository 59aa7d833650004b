#include "toothseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "toothseg/geometry.hpp"

namespace toothseg {

namespace {

void quantize_f32(Mat& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = static_cast<float>(m(i, j));
}

}  // namespace

ScanSample prepare_sample(const Scan& scan, const PipelineConfig& cfg) {
  ScanSample s;
  s.scan = scan;
  s.features = build_input_features(scan);
  if (cfg.data.normalize_features) {
    for (int c = 0; c < s.features.cols(); ++c) {
      const double mean = s.features.col(c).mean();
      const double var =
          (s.features.col(c).array() - mean).square().sum() / s.features.rows();
      s.features.col(c) = (s.features.col(c).array() - mean) / (std::sqrt(var) + 1e-6);
    }
  }
  s.plan = build_geometry_plan(scan.points.coords, cfg.backbone, 0);
  s.gts = scan_instances(scan);
  s.labels = scan.categories;
  const int kb = std::min(cfg.loss.boundary_k, scan.size() - 1);
  s.boundary = extract_boundary_set(scan.points, scan.instance_ids, kb);
  return s;
}

Trainer::Trainer(const PipelineConfig& cfg) : cfg_(cfg) {
  model_.backbone = cfg.backbone;
  model_.head = cfg.head;
  model_.init(cfg.trainer.seed);
}

double Trainer::learning_rate(int ep) const {
  const double base = cfg_.trainer.learning_rate;
  if (!cfg_.trainer.cosine_decay) return base;
  const double frac = cfg_.trainer.epochs <= 1
                          ? 0.0
                          : double(ep) / double(cfg_.trainer.epochs);
  return base * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, frac)));
}

LossNodes Trainer::scan_loss(ad::Tape& tape, const ScanSample& sample, bool with_grad,
                             ModelForward* fwd_out) {
  ModelForward fwd = model_.forward(tape, sample.features, sample.plan, with_grad);
  HeadOutput head = head_values(fwd.head);
  Mat cost = matching_cost(head, sample.gts, cfg_.loss.dice_smooth);
  MatchResult match = hungarian_match(cost);
  LossNodes loss = build_scan_loss(tape, fwd.head, sample.gts, match, sample.labels,
                                   sample.boundary, cfg_.loss,
                                   cfg_.head.num_tooth_classes,
                                   cfg_.head.gingiva_floor);
  if (fwd_out) *fwd_out = std::move(fwd);
  return loss;
}

LossReport Trainer::train_step(const std::vector<const ScanSample*>& batch, double lr) {
  if (batch.empty()) throw PreconditionError("train_step: empty batch");
  const double inv = 1.0 / batch.size();

  std::map<std::string, Mat> grads;
  LossReport report;
  for (const ScanSample* sample : batch) {
    ad::Tape tape;
    ModelForward fwd;
    LossNodes loss = scan_loss(tape, *sample, true, &fwd);
    const LossReport r = loss.report();
    if (!std::isfinite(r.total)) {
      std::ostringstream ss;
      ss << "train_step: non-finite loss (total=" << r.total << " cls=" << r.cls
         << " mask=" << r.mask << " obj=" << r.obj << " ibl=" << r.ibl << ")";
      throw std::runtime_error(ss.str());
    }
    tape.backward(loss.total);
    for (auto& [name, node] : fwd.bind.nodes) {
      if (node->grad.size() == 0) continue;
      auto it = grads.find(name);
      if (it == grads.end())
        grads.emplace(name, inv * node->grad);
      else
        it->second += inv * node->grad;
    }
    report.total += inv * r.total;
    report.cls += inv * r.cls;
    report.mask += inv * r.mask;
    report.obj += inv * r.obj;
    report.ibl += inv * r.ibl;
  }

  if (cfg_.trainer.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& [name, g] : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.trainer.grad_clip) {
      const double s = cfg_.trainer.grad_clip / norm;
      for (auto& [name, g] : grads) g *= s;
    }
  }

  // Adam with bias correction; map iteration order is fixed by name.
  opt_.step += 1;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, double(opt_.step));
  const double bc2 = 1.0 - std::pow(b2, double(opt_.step));
  for (auto& [name, g] : grads) {
    Mat& value = model_.params.at(name);
    Mat& m = opt_.m.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
    Mat& v = opt_.v.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    value.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
  global_step += 1;
  return report;
}

void Trainer::save_checkpoint(const std::string& path) {
  // Live state adopts the serialized float32 values, so a resumed run and an
  // uninterrupted one stay bit-identical past this point.
  ArrayMap arrays;
  for (auto& [name, value] : model_.params.values) {
    quantize_f32(value);
    arrays[name] = value;
  }
  for (auto& [name, m] : opt_.m) {
    quantize_f32(m);
    arrays["opt.m." + name] = m;
  }
  for (auto& [name, v] : opt_.v) {
    quantize_f32(v);
    arrays["opt.v." + name] = v;
  }
  Mat meta(1, 3);
  meta << double(opt_.step), double(epoch), double(global_step);
  arrays["trainer.meta"] = meta;
  write_checkpoint(arrays, path);
  save_config_file(cfg_, path + ".json");
}

void Trainer::load_checkpoint(const std::string& path) {
  ArrayMap arrays = read_checkpoint(path);
  for (auto& [name, value] : model_.params.values) {
    auto it = arrays.find(name);
    if (it == arrays.end())
      throw IngestError("checkpoint missing parameter " + name + ": " + path);
    if (it->second.rows() != value.rows() || it->second.cols() != value.cols())
      throw IngestError("checkpoint shape mismatch for " + name + ": " + path);
    value = it->second;
  }
  opt_.m.clear();
  opt_.v.clear();
  for (auto& [name, m] : arrays) {
    if (name.rfind("opt.m.", 0) == 0) opt_.m[name.substr(6)] = m;
    if (name.rfind("opt.v.", 0) == 0) opt_.v[name.substr(6)] = m;
  }
  auto meta = arrays.find("trainer.meta");
  if (meta != arrays.end()) {
    opt_.step = long(meta->second(0, 0));
    epoch = int(meta->second(0, 1));
    global_step = long(meta->second(0, 2));
  }
}

std::string run_training(const PipelineConfig& cfg, const std::vector<Scan>& scans,
                         const std::string& out_dir,
                         const std::optional<std::string>& resume_path) {
  if (scans.empty()) throw PreconditionError("run_training: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::vector<ScanSample> samples;
  samples.reserve(scans.size());
  for (const Scan& s : scans) samples.push_back(prepare_sample(s, cfg));

  Trainer trainer(cfg);
  if (resume_path) trainer.load_checkpoint(*resume_path);

  const std::string log_path = out_dir + "/training_log.csv";
  std::ofstream log(log_path, resume_path ? std::ios::app : std::ios::trunc);
  if (!log) throw IngestError("cannot write training log: " + log_path);
  if (!resume_path) log << "epoch,step,total,cls,mask,obj,ibl\n";

  const std::string ckpt = out_dir + "/checkpoint.tsck";
  const int batch = std::max(1, cfg.trainer.batch_size);
  for (int ep = trainer.epoch; ep < cfg.trainer.epochs; ++ep) {
    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(cfg.trainer.seed * 1000003ULL + ep);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng() % (i + 1)]);

    const double lr = trainer.learning_rate(ep);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<const ScanSample*> b;
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i)
        b.push_back(&samples[order[i]]);
      const LossReport r = trainer.train_step(b, lr);
      log << ep << ',' << trainer.global_step << ',' << r.total << ',' << r.cls
          << ',' << r.mask << ',' << r.obj << ',' << r.ibl << '\n';
    }
    trainer.epoch = ep + 1;
    if (cfg.trainer.checkpoint_every > 0 &&
        (ep + 1) % cfg.trainer.checkpoint_every == 0)
      trainer.save_checkpoint(ckpt);
  }
  trainer.save_checkpoint(ckpt);
  log.flush();
  return ckpt;
}

PredictionFile infer_scan(Model& model, const ScanSample& sample,
                          const PipelineConfig& cfg) {
  ad::Tape tape;
  ModelForward fwd = model.forward(tape, sample.features, sample.plan, false);
  HeadOutput head = head_values(fwd.head);
  PredictionFile pf;
  pf.instances = decode_instances(head, cfg.head);
  Mat probs = assemble_semantic_probs(pf.instances, cfg.head.gingiva_floor,
                                      sample.scan.size(), cfg.head.num_tooth_classes);
  // Prediction files always carry 17 columns; narrower class sets pad with zeros.
  if (probs.cols() < 17) {
    Mat padded = Mat::Zero(probs.rows(), 17);
    padded.leftCols(probs.cols()) = probs;
    pf.probs = padded;
    for (auto& inst : pf.instances) {
      Vec dist = Vec::Zero(17);
      dist.head(inst.class_dist.size()) = inst.class_dist;
      inst.class_dist = dist;
    }
  } else {
    pf.probs = probs;
  }
  return pf;
}

}  // namespace toothseg
