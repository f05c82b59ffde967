#include "chain/config.hpp"

#include <fstream>

#include "chain/errors.hpp"

using nlohmann::json;

namespace chain {

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  try {
    cfg.corpus = j.value("corpus", cfg.corpus);
    cfg.out = j.value("out", cfg.out);
    TrainConfig& t = cfg.train;
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.base_lr = j.value("base_lr", t.base_lr);
    t.min_lr = j.value("min_lr", t.min_lr);
    t.lr_decay = j.value("lr_decay", t.lr_decay);
    t.lr_decay_every = j.value("lr_decay_every", t.lr_decay_every);
    t.seed = j.value("seed", t.seed);
    t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
    t.temporal_aug = j.value("temporal_aug", t.temporal_aug);
    t.spatial_aug = j.value("spatial_aug", t.spatial_aug);

    t.loss.temperature = j.value("temperature", t.loss.temperature);
    t.loss.scene_temperature = j.value("scene_temperature", t.loss.scene_temperature);
    t.loss.loss_on_binary = j.value("loss_on_binary", t.loss.loss_on_binary);
    t.loss.enable_order = j.value("enable_order", t.loss.enable_order);
    t.loss.enable_scene = j.value("enable_scene", t.loss.enable_scene);

    t.encoder.frame_dim = j.value("frame_dim", t.encoder.frame_dim);
    t.encoder.model_dim = j.value("model_dim", t.encoder.model_dim);
    t.encoder.num_layers = j.value("num_layers", t.encoder.num_layers);
    t.encoder.num_heads = j.value("num_heads", t.encoder.num_heads);
    t.encoder.clip_length = j.value("frames", t.encoder.clip_length);
    t.encoder.code_bits = j.value("bits", t.encoder.code_bits);

    if (j.contains("augment")) {
      const json& a = j.at("augment");
      t.aug.crop_scale_min = a.value("crop_scale_min", t.aug.crop_scale_min);
      t.aug.crop_scale_max = a.value("crop_scale_max", t.aug.crop_scale_max);
      t.aug.jitter_strength = a.value("jitter_strength", t.aug.jitter_strength);
      t.aug.grayscale_prob = a.value("grayscale_prob", t.aug.grayscale_prob);
      t.aug.feature_noise_sigma = a.value("feature_noise_sigma", t.aug.feature_noise_sigma);
    }
    if (j.contains("ap")) {
      const json& a = j.at("ap");
      t.ap.damping = a.value("damping", t.ap.damping);
      t.ap.max_iter = a.value("max_iter", t.ap.max_iter);
      t.ap.convergence_iter = a.value("convergence_iter", t.ap.convergence_iter);
      if (a.contains("preference")) t.ap.preference = a.at("preference").get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json j{{"corpus", cfg.corpus},
         {"out", cfg.out},
         {"batch_size", t.batch_size},
         {"epochs", t.epochs},
         {"base_lr", t.base_lr},
         {"min_lr", t.min_lr},
         {"lr_decay", t.lr_decay},
         {"lr_decay_every", t.lr_decay_every},
         {"seed", t.seed},
         {"checkpoint_every", t.checkpoint_every},
         {"temporal_aug", t.temporal_aug},
         {"spatial_aug", t.spatial_aug},
         {"temperature", t.loss.temperature},
         {"scene_temperature", t.loss.scene_temperature},
         {"loss_on_binary", t.loss.loss_on_binary},
         {"enable_order", t.loss.enable_order},
         {"enable_scene", t.loss.enable_scene},
         {"frame_dim", t.encoder.frame_dim},
         {"model_dim", t.encoder.model_dim},
         {"num_layers", t.encoder.num_layers},
         {"num_heads", t.encoder.num_heads},
         {"frames", t.encoder.clip_length},
         {"bits", t.encoder.code_bits}};
  j["augment"] = {{"crop_scale_min", t.aug.crop_scale_min},
                  {"crop_scale_max", t.aug.crop_scale_max},
                  {"jitter_strength", t.aug.jitter_strength},
                  {"grayscale_prob", t.aug.grayscale_prob},
                  {"feature_noise_sigma", t.aug.feature_noise_sigma}};
  j["ap"] = {{"damping", t.ap.damping},
             {"max_iter", t.ap.max_iter},
             {"convergence_iter", t.ap.convergence_iter}};
  return j;
}

}  // namespace chain
