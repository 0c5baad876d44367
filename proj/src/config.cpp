#include "patchmil/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "patchmil/error.hpp"

namespace patchmil {

using Json = nlohmann::ordered_json;

namespace {

Json model_json(const ModelConfig& m) {
  return Json{{"grid_size", m.grid_size},
              {"num_classes", m.num_classes},
              {"input_side", m.input_side},
              {"input_channels", m.input_channels},
              {"backbone", m.backbone},
              {"backbone_channels", m.backbone_channels},
              {"head_channels", m.head_channels},
              {"head_bias_init", m.head_bias_init}};
}

Json loss_json(const LossConfig& l) {
  return Json{{"lambda_bbox", l.lambda_bbox},       {"smooth_low", l.smooth_low},
              {"smooth_high", l.smooth_high},       {"l2_coefficient", l.l2_coefficient},
              {"smooth_annotated", l.smooth_annotated}, {"class_weights", l.class_weights}};
}

Json optimizer_json(const OptimizerConfig& o) {
  return Json{{"type", o.type},
              {"learning_rate", o.learning_rate},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"epsilon", o.epsilon},
              {"decay_factor", o.decay_factor},
              {"decay_interval_epochs", o.decay_interval_epochs}};
}

Json data_json(const DataConfig& d) {
  return Json{{"manifest", d.manifest},
              {"fold", d.fold},
              {"fold_count", d.fold_count},
              {"annotated_fraction", d.annotated_fraction},
              {"unannotated_fraction", d.unannotated_fraction},
              {"split_seed", d.split_seed}};
}

Json run_json(const RunConfig& c) {
  return Json{{"model", model_json(c.model)},
              {"loss", loss_json(c.loss)},
              {"optimizer", optimizer_json(c.optimizer)},
              {"data", data_json(c.data)},
              {"batch_size", c.batch_size},
              {"iterations", c.iterations},
              {"seed", c.seed},
              {"activation_threshold", c.activation_threshold},
              {"checkpoint_interval", c.checkpoint_interval},
              {"log_interval", c.log_interval},
              {"freeze_backbone", c.freeze_backbone}};
}

// Absent keys keep the field's current value.
template <typename T>
void read(const Json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: " + where + key + " has the wrong type");
  }
}

void reject_unknown(const Json& j, const Json& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + (where.empty() ? std::string("root") : where) + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + where + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  try {
    loss.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (!loss.class_weights.empty() && static_cast<int>(loss.class_weights.size()) != model.num_classes)
    throw ConfigError("config: loss.class_weights needs one entry per class");
  if (optimizer.type != "adam") throw ConfigError("config: optimizer.type must be 'adam'");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("config: optimizer.learning_rate must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("config: optimizer betas must be in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("config: optimizer.epsilon must be > 0");
  if (!(optimizer.decay_factor > 0.0 && optimizer.decay_factor <= 1.0))
    throw ConfigError("config: optimizer.decay_factor must be in (0, 1]");
  if (!(optimizer.decay_interval_epochs > 0.0))
    throw ConfigError("config: optimizer.decay_interval_epochs must be > 0");
  if (data.fold_count < 2) throw ConfigError("config: data.fold_count must be >= 2");
  if (data.fold < 0 || data.fold >= data.fold_count) throw ConfigError("config: data.fold out of range");
  for (double f : {data.annotated_fraction, data.unannotated_fraction})
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("config: data fractions must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (!(activation_threshold > 0.0 && activation_threshold < 1.0))
    throw ConfigError("config: activation_threshold must be in (0, 1)");
  if (checkpoint_interval < 0) throw ConfigError("config: checkpoint_interval must be >= 0");
  if (log_interval < 1) throw ConfigError("config: log_interval must be >= 1");
}

std::string RunConfig::to_json() const { return run_json(*this).dump(); }

RunConfig RunConfig::from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  const Json known = run_json(c);
  reject_unknown(j, known, "");

  if (j.contains("model")) {
    const Json& m = j["model"];
    reject_unknown(m, known["model"], "model.");
    read(m, "grid_size", c.model.grid_size, "model.");
    read(m, "num_classes", c.model.num_classes, "model.");
    read(m, "input_side", c.model.input_side, "model.");
    read(m, "input_channels", c.model.input_channels, "model.");
    read(m, "backbone", c.model.backbone, "model.");
    read(m, "backbone_channels", c.model.backbone_channels, "model.");
    read(m, "head_channels", c.model.head_channels, "model.");
    read(m, "head_bias_init", c.model.head_bias_init, "model.");
  }
  if (j.contains("loss")) {
    const Json& l = j["loss"];
    reject_unknown(l, known["loss"], "loss.");
    read(l, "lambda_bbox", c.loss.lambda_bbox, "loss.");
    read(l, "smooth_low", c.loss.smooth_low, "loss.");
    read(l, "smooth_high", c.loss.smooth_high, "loss.");
    read(l, "l2_coefficient", c.loss.l2_coefficient, "loss.");
    read(l, "smooth_annotated", c.loss.smooth_annotated, "loss.");
    read(l, "class_weights", c.loss.class_weights, "loss.");
  }
  if (j.contains("optimizer")) {
    const Json& o = j["optimizer"];
    reject_unknown(o, known["optimizer"], "optimizer.");
    read(o, "type", c.optimizer.type, "optimizer.");
    read(o, "learning_rate", c.optimizer.learning_rate, "optimizer.");
    read(o, "beta1", c.optimizer.beta1, "optimizer.");
    read(o, "beta2", c.optimizer.beta2, "optimizer.");
    read(o, "epsilon", c.optimizer.epsilon, "optimizer.");
    read(o, "decay_factor", c.optimizer.decay_factor, "optimizer.");
    read(o, "decay_interval_epochs", c.optimizer.decay_interval_epochs, "optimizer.");
  }
  if (j.contains("data")) {
    const Json& d = j["data"];
    reject_unknown(d, known["data"], "data.");
    read(d, "manifest", c.data.manifest, "data.");
    read(d, "fold", c.data.fold, "data.");
    read(d, "fold_count", c.data.fold_count, "data.");
    read(d, "annotated_fraction", c.data.annotated_fraction, "data.");
    read(d, "unannotated_fraction", c.data.unannotated_fraction, "data.");
    read(d, "split_seed", c.data.split_seed, "data.");
  }
  read(j, "batch_size", c.batch_size, "");
  read(j, "iterations", c.iterations, "");
  read(j, "seed", c.seed, "");
  read(j, "activation_threshold", c.activation_threshold, "");
  read(j, "checkpoint_interval", c.checkpoint_interval, "");
  read(j, "log_interval", c.log_interval, "");
  read(j, "freeze_backbone", c.freeze_backbone, "");
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path);
  out << run_json(*this).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  Json j = run_json(*this);
  std::string pointer = "/" + key;
  for (auto& ch : pointer)
    if (ch == '.') ch = '/';
  const Json::json_pointer ptr(pointer);
  if (!j.contains(ptr)) throw ConfigError("override: unknown key '" + key + "'");
  // A bare word like `adam` must stay a string even where JSON would choke.
  if (j[ptr].is_string() && !value.is_string()) value = raw;
  j[ptr] = value;
  *this = from_json(j.dump());
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace patchmil
