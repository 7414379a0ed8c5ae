// SPDX-License-Identifier: Apache-2.0
#include "lpn/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace lpn {

namespace {

using json = nlohmann::ordered_json;

void reject_unknown(const json& obj, const std::string& scope, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("unknown config key: " + (scope.empty() ? key : scope + "." + key));
  }
}

template <typename T>
void get_to(const json& obj, const std::string& scope, const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception&) {
    throw ConfigError("bad value for config key: " + (scope.empty() ? key : scope + "." + key));
  }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");

  RunConfig cfg;
  reject_unknown(root, "", {"dataset_root", "out_dir", "seed", "train", "optimizer", "augment", "preprocess"});
  get_to(root, "", "dataset_root", cfg.dataset_root);
  get_to(root, "", "out_dir", cfg.out_dir);
  get_to(root, "", "seed", cfg.seed);

  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown(t, "train",
                   {"max_epochs", "batch_size", "patience", "class_weights", "loss_normalization"});
    get_to(t, "train", "max_epochs", cfg.train.max_epochs);
    get_to(t, "train", "batch_size", cfg.train.batch_size);
    get_to(t, "train", "patience", cfg.train.patience);
    get_to(t, "train", "class_weights", cfg.train.class_weights);
    if (t.contains("loss_normalization")) {
      const std::string v = t.at("loss_normalization").get<std::string>();
      if (v == "weight_sum")
        cfg.train.loss_normalization = LossNormalization::weight_sum;
      else if (v == "batch_size")
        cfg.train.loss_normalization = LossNormalization::batch_size;
      else
        throw ConfigError("train.loss_normalization must be \"weight_sum\" or \"batch_size\"");
    }
  }
  if (root.contains("optimizer")) {
    const json& o = root.at("optimizer");
    reject_unknown(o, "optimizer",
                   {"learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "decoupled_decay"});
    get_to(o, "optimizer", "learning_rate", cfg.optimizer.lr);
    get_to(o, "optimizer", "beta1", cfg.optimizer.beta1);
    get_to(o, "optimizer", "beta2", cfg.optimizer.beta2);
    get_to(o, "optimizer", "epsilon", cfg.optimizer.epsilon);
    get_to(o, "optimizer", "weight_decay", cfg.optimizer.weight_decay);
    get_to(o, "optimizer", "decoupled_decay", cfg.optimizer.decoupled_decay);
  }
  if (root.contains("augment")) {
    const json& a = root.at("augment");
    reject_unknown(a, "augment",
                   {"rotation_range", "zoom_range", "width_shift", "height_shift", "shear_range",
                    "shear_in_degrees", "horizontal_flip", "fill_mode"});
    get_to(a, "augment", "rotation_range", cfg.augment.rotation_range);
    get_to(a, "augment", "zoom_range", cfg.augment.zoom_range);
    get_to(a, "augment", "width_shift", cfg.augment.width_shift);
    get_to(a, "augment", "height_shift", cfg.augment.height_shift);
    get_to(a, "augment", "shear_range", cfg.augment.shear_range);
    get_to(a, "augment", "shear_in_degrees", cfg.augment.shear_in_degrees);
    get_to(a, "augment", "horizontal_flip", cfg.augment.horizontal_flip);
    if (a.contains("fill_mode") && a.at("fill_mode").get<std::string>() != "nearest")
      throw ConfigError("augment.fill_mode: only \"nearest\" is supported");
  }
  if (root.contains("preprocess")) {
    const json& p = root.at("preprocess");
    reject_unknown(p, "preprocess", {"target_height", "target_width"});
    get_to(p, "preprocess", "target_height", cfg.preprocess.target_h);
    get_to(p, "preprocess", "target_width", cfg.preprocess.target_w);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
  json root;
  root["dataset_root"] = dataset_root;
  root["out_dir"] = out_dir;
  root["seed"] = seed;
  root["train"] = {
      {"max_epochs", train.max_epochs},
      {"batch_size", train.batch_size},
      {"patience", train.patience},
      {"class_weights", train.class_weights},
      {"loss_normalization",
       train.loss_normalization == LossNormalization::weight_sum ? "weight_sum" : "batch_size"},
  };
  root["optimizer"] = {
      {"learning_rate", optimizer.lr},   {"beta1", optimizer.beta1},
      {"beta2", optimizer.beta2},        {"epsilon", optimizer.epsilon},
      {"weight_decay", optimizer.weight_decay}, {"decoupled_decay", optimizer.decoupled_decay},
  };
  root["augment"] = {
      {"rotation_range", augment.rotation_range},
      {"zoom_range", augment.zoom_range},
      {"width_shift", augment.width_shift},
      {"height_shift", augment.height_shift},
      {"shear_range", augment.shear_range},
      {"shear_in_degrees", augment.shear_in_degrees},
      {"horizontal_flip", augment.horizontal_flip},
      {"fill_mode", "nearest"},
  };
  root["preprocess"] = {
      {"target_height", preprocess.target_h},
      {"target_width", preprocess.target_w},
  };
  return root.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (train.class_weights.size() != 2) throw ConfigError("train.class_weights must list two classes");
  for (double w : train.class_weights)
    if (!(w > 0)) throw ConfigError("train.class_weights entries must be > 0");
  if (!(optimizer.lr > 0)) throw ConfigError("optimizer.learning_rate must be > 0");
  if (optimizer.beta1 < 0 || optimizer.beta1 >= 1) throw ConfigError("optimizer.beta1 must be in [0,1)");
  if (optimizer.beta2 < 0 || optimizer.beta2 >= 1) throw ConfigError("optimizer.beta2 must be in [0,1)");
  if (!(optimizer.epsilon > 0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (optimizer.weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (augment.horizontal_flip)
    throw ConfigError("augment.horizontal_flip: flipping is not supported (fixed false)");
  if (augment.rotation_range < 0) throw ConfigError("augment.rotation_range must be >= 0");
  if (augment.zoom_range < 0 || augment.zoom_range >= 1)
    throw ConfigError("augment.zoom_range must be in [0,1)");
  if (augment.width_shift < 0 || augment.height_shift < 0)
    throw ConfigError("augment shifts must be >= 0");
  if (augment.shear_range < 0) throw ConfigError("augment.shear_range must be >= 0");
  if (preprocess.target_h < 1 || preprocess.target_w < 1)
    throw ConfigError("preprocess target size must be >= 1");
}

}  // namespace lpn
