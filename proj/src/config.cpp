#include "toothseg/config.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

using nlohmann::json;

void BackboneConfig::validate() const {
  if (stage_channels.size() != stage_strides.size())
    throw PreconditionError("backbone: stage_channels and stage_strides length mismatch");
  if (decoder_channels.size() != stage_channels.size())
    throw PreconditionError("backbone: decoder_channels length mismatch");
  for (int s : stage_strides)
    if (s < 1) throw PreconditionError("backbone: strides must be >= 1");
  if (sigma_mode != "scalar" && sigma_mode != "per_channel")
    throw PreconditionError("backbone: unknown sigma_mode " + sigma_mode);
  if (affine_eps <= 0) throw PreconditionError("backbone: affine_eps must be > 0");
}

int BackboneConfig::output_channels() const {
  return decoder_channels.back() +
         std::accumulate(stage_channels.begin(), stage_channels.end(), 0);
}

void SynthConfig::validate() const {
  if (n_teeth < 1 || n_teeth > 16)
    throw PreconditionError("synth: n_teeth must be in [1,16]");
  for (int m : missing)
    if (m < 1 || m > 16) throw PreconditionError("synth: missing ids must be in [1,16]");
  if (points_per_scan < 64)
    throw PreconditionError("synth: points_per_scan must be >= 64");
}

PipelineConfig default_config() { return PipelineConfig{}; }

namespace {

json to_json(const PipelineConfig& c) {
  json j;
  j["backbone"] = {{"input_channels", c.backbone.input_channels},
                   {"stem_channels", c.backbone.stem_channels},
                   {"stage_channels", c.backbone.stage_channels},
                   {"stage_strides", c.backbone.stage_strides},
                   {"decoder_channels", c.backbone.decoder_channels},
                   {"k_neighbors", c.backbone.k_neighbors},
                   {"sigma_mode", c.backbone.sigma_mode},
                   {"affine_eps", c.backbone.affine_eps}};
  j["head"] = {{"num_queries", c.head.num_queries},
               {"query_dim", c.head.query_dim},
               {"num_decoder_layers", c.head.num_decoder_layers},
               {"num_tooth_classes", c.head.num_tooth_classes},
               {"objectness_floor", c.head.objectness_floor},
               {"class_floor", c.head.class_floor},
               {"nms_iou", c.head.nms_iou},
               {"gingiva_floor", c.head.gingiva_floor}};
  j["loss"] = {{"lambda_cls", c.loss.lambda_cls},
               {"lambda_mask", c.loss.lambda_mask},
               {"lambda_obj", c.loss.lambda_obj},
               {"lambda_ibl", c.loss.lambda_ibl},
               {"gamma", c.loss.gamma},
               {"no_object_weight", c.loss.no_object_weight},
               {"dice_smooth", c.loss.dice_smooth},
               {"prob_floor", c.loss.prob_floor},
               {"boundary_k", c.loss.boundary_k}};
  j["graphcut"] = {{"k", c.graphcut.k},
                   {"lambda_smooth", c.graphcut.lambda_smooth},
                   {"unary_eps", c.graphcut.unary_eps},
                   {"optimizer", c.graphcut.optimizer}};
  j["metrics"] = {{"ap_thresholds", c.metrics.ap_thresholds},
                  {"pr_interpolation", c.metrics.pr_interpolation}};
  j["data"] = {{"target_points", c.data.target_points},
               {"mirror_categories", c.data.mirror_categories},
               {"normalize_features", c.data.normalize_features}};
  j["trainer"] = {{"batch_size", c.trainer.batch_size},
                  {"epochs", c.trainer.epochs},
                  {"learning_rate", c.trainer.learning_rate},
                  {"seed", c.trainer.seed},
                  {"checkpoint_every", c.trainer.checkpoint_every},
                  {"grad_clip", c.trainer.grad_clip},
                  {"cosine_decay", c.trainer.cosine_decay}};
  j["synth"] = {{"n_teeth", c.synth.n_teeth},
                {"missing", c.synth.missing},
                {"jitter", c.synth.jitter},
                {"points_per_scan", c.synth.points_per_scan},
                {"seed", c.synth.seed},
                {"num_scans", c.synth.num_scans}};
  return j;
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

PipelineConfig from_json(const json& j) {
  PipelineConfig c;
  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    get_if(b, "input_channels", c.backbone.input_channels);
    get_if(b, "stem_channels", c.backbone.stem_channels);
    get_if(b, "stage_channels", c.backbone.stage_channels);
    get_if(b, "stage_strides", c.backbone.stage_strides);
    get_if(b, "decoder_channels", c.backbone.decoder_channels);
    get_if(b, "k_neighbors", c.backbone.k_neighbors);
    get_if(b, "sigma_mode", c.backbone.sigma_mode);
    get_if(b, "affine_eps", c.backbone.affine_eps);
  }
  if (j.contains("head")) {
    const json& h = j["head"];
    get_if(h, "num_queries", c.head.num_queries);
    get_if(h, "query_dim", c.head.query_dim);
    get_if(h, "num_decoder_layers", c.head.num_decoder_layers);
    get_if(h, "num_tooth_classes", c.head.num_tooth_classes);
    get_if(h, "objectness_floor", c.head.objectness_floor);
    get_if(h, "class_floor", c.head.class_floor);
    get_if(h, "nms_iou", c.head.nms_iou);
    get_if(h, "gingiva_floor", c.head.gingiva_floor);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    get_if(l, "lambda_cls", c.loss.lambda_cls);
    get_if(l, "lambda_mask", c.loss.lambda_mask);
    get_if(l, "lambda_obj", c.loss.lambda_obj);
    get_if(l, "lambda_ibl", c.loss.lambda_ibl);
    get_if(l, "gamma", c.loss.gamma);
    get_if(l, "no_object_weight", c.loss.no_object_weight);
    get_if(l, "dice_smooth", c.loss.dice_smooth);
    get_if(l, "prob_floor", c.loss.prob_floor);
    get_if(l, "boundary_k", c.loss.boundary_k);
  }
  if (j.contains("graphcut")) {
    const json& g = j["graphcut"];
    get_if(g, "k", c.graphcut.k);
    get_if(g, "lambda_smooth", c.graphcut.lambda_smooth);
    get_if(g, "unary_eps", c.graphcut.unary_eps);
    get_if(g, "optimizer", c.graphcut.optimizer);
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    get_if(m, "ap_thresholds", c.metrics.ap_thresholds);
    get_if(m, "pr_interpolation", c.metrics.pr_interpolation);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    get_if(d, "target_points", c.data.target_points);
    get_if(d, "mirror_categories", c.data.mirror_categories);
    get_if(d, "normalize_features", c.data.normalize_features);
  }
  if (j.contains("trainer")) {
    const json& t = j["trainer"];
    get_if(t, "batch_size", c.trainer.batch_size);
    get_if(t, "epochs", c.trainer.epochs);
    get_if(t, "learning_rate", c.trainer.learning_rate);
    get_if(t, "seed", c.trainer.seed);
    get_if(t, "checkpoint_every", c.trainer.checkpoint_every);
    get_if(t, "grad_clip", c.trainer.grad_clip);
    get_if(t, "cosine_decay", c.trainer.cosine_decay);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    get_if(s, "n_teeth", c.synth.n_teeth);
    get_if(s, "missing", c.synth.missing);
    get_if(s, "jitter", c.synth.jitter);
    get_if(s, "points_per_scan", c.synth.points_per_scan);
    get_if(s, "seed", c.synth.seed);
    get_if(s, "num_scans", c.synth.num_scans);
  }
  return c;
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) { return to_json(cfg).dump(2); }

PipelineConfig config_from_json(const std::string& text) {
  return from_json(json::parse(text));
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config_file(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write config file: " + path);
  out << config_to_json(cfg) << "\n";
}

}  // namespace toothseg
