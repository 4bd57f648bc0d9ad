#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "priorclip/belief.hpp"
#include "priorclip/encoders.hpp"
#include "priorclip/losses.hpp"
#include "priorclip/tensor.hpp"

namespace priorclip {

inline constexpr int kConfigSchemaVersion = 1;

enum class Stage { closed_domain, stage1_pretrain, stage2_finetune };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);
std::string to_string(Precision p);
Precision precision_from_string(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t pae_heads = 2;
  std::size_t pae_ffn_mult = 2;
  std::size_t spatial_layers = 2;   // n_v
  std::size_t temporal_layers = 3;  // n_t
  double dropout = 0.0;
  bool spatial_pae = true;
  bool temporal_pae = true;
  RefineMode belief = RefineMode::soft_sequence;
  /// Tokens kept by the hard strategy; 0 keeps all m+1.
  std::size_t filter_size = 0;
  InstructionSource instruction = InstructionSource::frozen_scene_table;
  std::size_t instruction_pretrain_steps = 200;
  double instruction_pretrain_lr = 0.5;
};

struct OptimConfig {
  double learning_rate = 0.02;
  double momentum = 0.0;
  std::size_t steps = 500;
  std::size_t batch_size = 32;
  /// Validation interval in steps; 0 validates once per epoch.
  std::size_t eval_every = 0;
};

struct DataPaths {
  std::string train;
  std::string val;
  std::string test;
};

struct TrainConfig {
  Stage stage = Stage::closed_domain;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  DataPaths data;
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  /// Stage-2 initialization (parameters only).
  std::string init_checkpoint;
  /// Full-state resume (parameters, optimizer, step, RNG).
  std::string resume_checkpoint;

  /// Throws ConfigError on non-positive counts or inconsistent settings.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Strict: unknown keys and mistyped values raise ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Merges `patch` into `base`. Every key of `patch` must exist in `base` with
/// the same JSON type (an integer may stand where a float is expected).
void merge_checked(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Applies "a.b.c=value". The value is parsed as JSON when possible and as a
/// bare string otherwise, then type-checked against the existing entry.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if non-empty), then overrides.
TrainConfig load_train_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace priorclip
