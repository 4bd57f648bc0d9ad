#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "priorclip/layers.hpp"

namespace priorclip {

/// Settings shared by the toy image and text encoders. Tokens are built at an
/// internal width `hidden_dim` and mapped to the common `embed_dim` by one
/// linear layer at the end.
struct EncoderConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t heads = 2;
  std::size_t blocks = 2;
  std::size_t ffn_mult = 2;
  bool position_encoding = true;
};

struct ImageGeometry {
  std::size_t channels = 3;
  std::size_t size = 16;  // H == W
  std::size_t patch = 4;

  std::size_t patches_per_side() const { return size / patch; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  std::size_t pixel_count() const { return channels * size * size; }
  std::size_t patch_dim() const { return channels * patch * patch; }
  /// Throws ConfigError when the patch size does not tile the image.
  void validate() const;
};

/// 3 x H x W grid in [0, 1], channel-major.
struct SyntheticImage {
  std::vector<double> pixels;
  std::size_t scene_label = 0;
};

struct ImageEncoderOutput {
  Tensor f_cls;   // 1 x d
  Tensor tokens;  // m x d (one token per row)
};

struct TextEncoderOutput {
  Tensor t_cls;   // 1 x d
  Tensor tokens;  // n x d, head token excluded
};

/// Rearranges B flattened images into (B*m) x (C*p*p) patch rows, patches in
/// row-major grid order. No gradient: pixels are data.
Tensor patchify(std::span<const double> pixels, std::size_t batch, const ImageGeometry& geometry);

/// Patch embedding + learned head token + optional learned positions +
/// transformer blocks + final projection to `embed_dim`.
class ImageEncoder {
 public:
  ImageEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config,
               const ImageGeometry& geometry);

  /// pixels: B x (C*H*W). Returns B sequences of m+1 tokens, head token first.
  Sequences encode(const Tensor& pixels, const ForwardContext& ctx = {}) const;
  ImageEncoderOutput encode(const SyntheticImage& image) const;

  const EncoderConfig& config() const { return config_; }
  const ImageGeometry& geometry() const { return geometry_; }
  std::size_t num_tokens() const { return geometry_.num_patches(); }

 private:
  EncoderConfig config_;
  ImageGeometry geometry_;
  Linear patch_embed_;
  Tensor cls_;
  Tensor positions_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear projection_;
};

/// Token embedding table + learned head token + optional learned positions +
/// transformer blocks (padding keys masked) + final projection.
class TextEncoder {
 public:
  TextEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config,
              std::size_t vocab_size, std::size_t max_len);

  /// Returns sequences of n_b+1 tokens (head first), padded to the longest.
  Sequences encode(const std::vector<std::vector<std::size_t>>& captions, const ForwardContext& ctx = {}) const;
  TextEncoderOutput encode(const std::vector<std::size_t>& tokens) const;

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t max_len() const { return max_len_; }

 private:
  EncoderConfig config_;
  std::size_t vocab_size_;
  std::size_t max_len_;
  Tensor table_;
  Tensor cls_;
  Tensor positions_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear projection_;
};

enum class InstructionSource { learned_scene_table, frozen_scene_table, toy_conv_encoder };

std::string to_string(InstructionSource source);
InstructionSource instruction_source_from_string(const std::string& name);

struct InstructionEmbedding {
  Tensor f_ins;  // 1 x d
  InstructionSource source;
};

/// Scene prior f_ins. Scene tables look up a per-class vector; the toy
/// convolutional encoder computes it from pixels and is frozen after its
/// classification pre-phase.
class InstructionEncoder {
 public:
  InstructionEncoder(ParameterStore& store, const std::string& name, InstructionSource source,
                     std::size_t num_classes, std::size_t embed_dim, const ImageGeometry& geometry,
                     std::size_t conv_hidden = 32);

  /// B x d. `labels` are used by table sources, `pixels` (B x C*H*W) by the
  /// convolutional one.
  Tensor encode(std::span<const std::size_t> labels, const Tensor& pixels) const;
  InstructionEmbedding encode(std::size_t scene_label) const;
  InstructionEmbedding encode(const SyntheticImage& image) const;

  /// Scene-classification logits from the convolutional stack (B x C).
  Tensor classify(const Tensor& pixels) const;

  struct PretrainResult {
    std::vector<double> loss_history;
    double train_accuracy = 0.0;
  };
  /// Trains the convolutional stack and its classifier head with SGD on scene
  /// labels, then freezes it. No-op for table sources.
  PretrainResult pretrain(ParameterStore& store, const Tensor& pixels, std::span<const std::size_t> labels,
                          std::size_t steps, double learning_rate, std::size_t batch_size, std::uint64_t seed);

  InstructionSource source() const { return source_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  InstructionSource source_;
  std::size_t num_classes_;
  std::size_t embed_dim_;
  ImageGeometry geometry_;
  Tensor table_;
  Linear conv_;
  Linear conv_out_;
  Linear classifier_;
};

}  // namespace priorclip
