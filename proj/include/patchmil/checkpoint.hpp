#pragma once
// Self-describing binary checkpoints:
//   "PMILCKP1" | u32 version | u64 iteration | str config_hash | str config_json
//   | u32 array_count | { str name | u64 length | f32[length] }...
// where str is a u64 byte length followed by the bytes. Little-endian.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "patchmil/config.hpp"
#include "patchmil/model.hpp"

namespace patchmil {

struct Checkpoint {
  RunConfig config;
  std::string config_hash;
  std::uint64_t iteration = 0;
  std::vector<std::pair<std::string, std::vector<float>>> arrays;
};

// Written to a temporary sibling and renamed into place. Throws IoError.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, PatchModel& model,
                     std::uint64_t iteration);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies the arrays into a model. Throws ConfigError when the model's grid,
// class count or channel widths differ from the checkpoint's, or when any
// array is missing or mis-sized.
void restore(PatchModel& model, const Checkpoint& ckpt);

// Builds a model from the checkpoint's own config and restores it.
std::unique_ptr<PatchModel> load_model(const Checkpoint& ckpt);

}  // namespace patchmil
