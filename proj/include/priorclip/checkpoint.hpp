#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "priorclip/model.hpp"

namespace priorclip {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout on disk:
///   8 bytes  magic "PCLPCKPT"
///   4 bytes  format version (little-endian uint32)
///   8 bytes  header length H (little-endian uint64)
///   H bytes  JSON header: config, data_shape, step, rng, tensor table
///   blobs    little-endian float64 values at the offsets named in the table
struct Checkpoint {
  struct Blob {
    std::string name;
    Shape shape;
    bool trainable = true;
    std::vector<double> values;
  };

  nlohmann::json config;  // TrainConfig snapshot
  DataShape shape;
  std::size_t step = 0;
  std::string rng_state;
  std::vector<Blob> params;
  std::vector<Blob> velocity;  // optimizer state; empty when unused

  const Blob* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws InputError on a bad magic, version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter of `model` (values and trainable flags).
std::vector<Checkpoint::Blob> snapshot_parameters(const PriorClipModel& model);

/// Overwrites model parameters by name. With `require_all`, every model
/// parameter must be present. Shapes must agree (ConfigError otherwise).
/// Trainable flags are left to the caller.
void restore_parameters(PriorClipModel& model, const std::vector<Checkpoint::Blob>& params, bool require_all);

}  // namespace priorclip
