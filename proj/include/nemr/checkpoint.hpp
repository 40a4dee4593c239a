#pragma once

#include "nemr/model.hpp"

#include <filesystem>

namespace nemr {

struct Checkpoint {
  TrainConfig config;
  ModelState state;
  int epoch = 0;
};

// Little-endian binary container:
//   "NEMRCKPT" u32 version
//   u64 config_json_length, config JSON bytes
//   i32 epoch, i64 adam_step, u32 tensor_count
//   per tensor: u32 name_length, name, i64 rows, i64 cols, f64 values (column-major),
//               u8 has_moments [, f64 first moment, f64 second moment]
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const ModelState& state,
                     int epoch);
// Throws Error on malformed files and ConfigError when the stored config is invalid.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nemr
