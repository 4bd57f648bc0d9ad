#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "priorclip/checkpoint.hpp"
#include "priorclip/config.hpp"
#include "priorclip/data.hpp"
#include "priorclip/model.hpp"
#include "priorclip/retrieval.hpp"

namespace priorclip {

struct HistoryRow {
  std::size_t step = 0;
  double loss = 0.0;
  double l_c = 0.0;
  double l_a = 0.0;
  std::optional<RecallReport> eval;
};

/// step,loss,l_c,l_a,i2t_r1,...,t2i_r10,mr; recall cells are empty on rows
/// without a validation pass.
std::string history_csv(const std::vector<HistoryRow>& rows);

struct TrainData {
  Dataset train;
  std::optional<Dataset> val;
  std::optional<Dataset> test;

  static TrainData load(const DataPaths& paths);
};

/// Stage rules applied to a configuration, with the warnings they raise.
struct StagePlan {
  TrainConfig config;
  std::vector<std::string> warnings;
};

/// closed-domain: flags as given. stage1-pretrain: contrastive loss only, no
/// belief or PAE. stage2-finetune: soft belief + spatial PAE + full loss,
/// no temporal PAE, instruction encoder frozen.
StagePlan plan_stage(const TrainConfig& config, const Dataset& train);

struct TrainOptions {
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  Checkpoint best;  // highest validation mR (last state when never validated)
  Checkpoint last;
  std::vector<HistoryRow> history;
  std::optional<RecallReport> best_validation;
  /// Best checkpoint on test, else validation, else training data.
  RecallReport final_metrics;
  ActiveModules active;
  std::vector<std::string> warnings;
};

/// Builds the model for `config`, optionally initialized from `init`
/// (parameters only) or resumed from `resume` (full state), and trains it.
TrainResult train_model(const TrainConfig& config, const TrainData& data, const Checkpoint* init = nullptr,
                        const Checkpoint* resume = nullptr, const TrainOptions& options = {});

TrainResult train_closed_domain(const TrainConfig& config, const TrainData& data, const TrainOptions& options = {});

struct OpenDomainResult {
  TrainResult stage1;
  TrainResult stage2;
};

OpenDomainResult train_open_domain(const TrainConfig& stage1, const TrainData& stage1_data, const TrainConfig& stage2,
                                   const TrainData& stage2_data, const TrainOptions& options = {});

/// Rebuilds a model from a checkpoint's config snapshot and parameters.
std::unique_ptr<PriorClipModel> model_from_checkpoint(const Checkpoint& checkpoint);

RecallReport evaluate_model(const PriorClipModel& model, const Dataset& dataset);

enum class SweepAxis { filter_size, lambda_cs };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepPoint {
  double value = 0.0;
  RecallReport report;
};

/// One full train + eval per value with a shared seed. A filter_size sweep
/// switches the belief strategy to hard.
std::vector<SweepPoint> sweep(const TrainConfig& config, const TrainData& data, SweepAxis axis,
                              const std::vector<double>& values, const TrainOptions& options = {});

std::string sweep_csv(SweepAxis axis, const std::vector<SweepPoint>& points);

/// Writes checkpoint.bin (best), last.bin, history.csv, metrics.json and
/// config.json into `dir`.
void write_training_artifacts(const TrainResult& result, const TrainConfig& config, const std::filesystem::path& dir);

/// File-level driver behind `priorclip train`: loads data and the stage-2 or
/// resume checkpoint named in the config, trains, writes artifacts.
TrainResult run_training(const TrainConfig& config, const std::filesystem::path& out_dir,
                         const TrainOptions& options = {});

}  // namespace priorclip
