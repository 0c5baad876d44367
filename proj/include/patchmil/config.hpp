#pragma once
// Run configuration. Stored as JSON with key paths mirroring the structs
// below; `key.path=value` overrides are applied on top. Defaults are the desk
// profile (64 x 64 inputs, P = 8, K = 4, batch 16).

#include <cstdint>
#include <string>
#include <vector>

#include "patchmil/mil_loss.hpp"
#include "patchmil/model.hpp"

namespace patchmil {

struct OptimizerConfig {
  std::string type = "adam";
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_factor = 0.1;
  double decay_interval_epochs = 10.0;  // an epoch is one pass over the training split
  bool operator==(const OptimizerConfig&) const = default;
};

struct DataConfig {
  std::string manifest;
  int fold = 0;
  int fold_count = 5;
  // Share of each pool's non-held-out part used for training.
  double annotated_fraction = 1.0;
  double unannotated_fraction = 1.0;
  std::uint64_t split_seed = 0;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  DataConfig data;
  int batch_size = 16;
  int iterations = 2000;
  std::uint64_t seed = 0;
  double activation_threshold = 0.5;  // T_s
  int checkpoint_interval = 0;        // 0: final checkpoint only
  int log_interval = 50;
  bool freeze_backbone = false;

  void validate() const;  // throws ConfigError

  std::string to_json() const;  // canonical: fixed key order, compact
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
  void apply_override(const std::string& assignment);

  // FNV-1a 64 of to_json(), as 16 hex digits.
  std::string hash() const;
  bool operator==(const RunConfig&) const = default;
};

}  // namespace patchmil
