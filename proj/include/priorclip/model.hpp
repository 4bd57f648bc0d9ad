#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "priorclip/belief.hpp"
#include "priorclip/config.hpp"
#include "priorclip/data.hpp"
#include "priorclip/encoders.hpp"
#include "priorclip/layers.hpp"
#include "priorclip/losses.hpp"
#include "priorclip/pae.hpp"

namespace priorclip {

/// Dataset-dependent sizes the model is built for.
struct DataShape {
  std::size_t num_classes = 8;
  std::size_t vocab_size = 64;
  std::size_t max_caption_len = 8;
  ImageGeometry geometry;

  static DataShape of(const Dataset& dataset);
  nlohmann::ordered_json to_json() const;
  static DataShape from_json(const nlohmann::json& j);
  bool operator==(const DataShape& o) const;
};

/// Which components take part in the forward pass and the objective.
struct ActiveModules {
  bool spatial_pae = false;
  bool temporal_pae = false;
  bool affiliation_loss = false;
  RefineMode belief = RefineMode::soft_sequence;
  std::size_t filter_size = 0;

  bool operator==(const ActiveModules&) const = default;
  std::string describe() const;
};

struct LossBreakdown {
  Tensor total;
  double l_c = 0.0;
  double l_a = 0.0;  // 0 when the affiliation term is inactive
};

/// Dual encoder with instruction-guided visual refinement. Every component
/// is always instantiated (so checkpoints of all stages share one parameter
/// set); the configuration decides which of them run.
class PriorClipModel {
 public:
  PriorClipModel(const ModelConfig& model, const LossConfig& loss, const DataShape& shape, std::uint64_t seed);
  PriorClipModel(const PriorClipModel&) = delete;
  PriorClipModel& operator=(const PriorClipModel&) = delete;

  /// B x d visual embeddings v_emb.
  Tensor embed_images(const Tensor& pixels, std::span<const std::size_t> labels, const ForwardContext& ctx = {}) const;
  /// B x d text embeddings t_emb.
  Tensor embed_texts(const std::vector<std::vector<std::size_t>>& captions, const ForwardContext& ctx = {}) const;

  LossBreakdown loss(const PairBatch& batch, const ForwardContext& ctx = {}) const;

  /// exp(t_logit) as a 1-element tensor.
  Tensor logit_scale() const;

  ParameterStore& params() { return *store_; }
  const ParameterStore& params() const { return *store_; }
  const ModelConfig& model_config() const { return model_; }
  const LossConfig& loss_config() const { return loss_; }
  const DataShape& data_shape() const { return shape_; }
  ActiveModules active() const;
  /// Number of visual tokens m+1 entering the belief step.
  std::size_t visual_length() const { return shape_.geometry.num_patches() + 1; }

  /// Runs the instruction pre-phase when the source needs one.
  InstructionEncoder::PretrainResult prepare_instruction(const Dataset& train, std::uint64_t seed);
  void freeze_instruction();
  const InstructionEncoder& instruction() const { return *instruction_; }

 private:
  ModelConfig model_;
  LossConfig loss_;
  DataShape shape_;
  std::unique_ptr<ParameterStore> store_;
  std::unique_ptr<ImageEncoder> image_;
  std::unique_ptr<TextEncoder> text_;
  std::unique_ptr<InstructionEncoder> instruction_;
  SpatialPae spatial_;
  TemporalPae temporal_;
  Tensor t_logit_;
};

/// Chunked, gradient-free embedding of a whole dataset: one image row per
/// record and one text row per caption, with the caption -> image map.
struct DatasetEmbeddings {
  Tensor images;
  Tensor texts;
  std::vector<std::size_t> txt2img;
};

DatasetEmbeddings embed_dataset(const PriorClipModel& model, const Dataset& dataset, std::size_t chunk = 64);

}  // namespace priorclip
