#include "priorclip/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "priorclip/errors.hpp"

namespace priorclip {

void ImageGeometry::validate() const {
  if (channels == 0 || size == 0 || patch == 0) throw ConfigError("image geometry: sizes must be positive");
  if (size % patch != 0) {
    throw ConfigError("image geometry: patch size " + std::to_string(patch) + " does not divide image size " +
                      std::to_string(size));
  }
}

Tensor patchify(std::span<const double> pixels, std::size_t batch, const ImageGeometry& g) {
  g.validate();
  if (pixels.size() != batch * g.pixel_count()) {
    throw InputError("patchify: expected " + std::to_string(batch * g.pixel_count()) + " pixel values, got " +
                     std::to_string(pixels.size()));
  }
  const std::size_t side = g.patches_per_side(), m = g.num_patches(), pd = g.patch_dim();
  std::vector<double> out(batch * m * pd);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* img = pixels.data() + b * g.pixel_count();
    for (std::size_t py = 0; py < side; ++py) {
      for (std::size_t px = 0; px < side; ++px) {
        double* row = out.data() + (b * m + py * side + px) * pd;
        std::size_t t = 0;
        for (std::size_t c = 0; c < g.channels; ++c)
          for (std::size_t dy = 0; dy < g.patch; ++dy)
            for (std::size_t dx = 0; dx < g.patch; ++dx)
              row[t++] = img[(c * g.size + py * g.patch + dy) * g.size + px * g.patch + dx];
      }
    }
  }
  return Tensor({batch * m, pd}, std::move(out));
}

namespace {

void validate_encoder(const EncoderConfig& c) {
  if (c.embed_dim == 0 || c.hidden_dim == 0) throw ConfigError("encoder: widths must be positive");
  if (c.hidden_dim < c.embed_dim) throw ConfigError("encoder: internal width must be >= embedding width");
  if (c.ffn_mult == 0) throw ConfigError("encoder: ffn_mult must be positive");
}

// Index rows so that sample b's sequence is [head, items of b...]; row 0 of
// the source holds the head token, rows 1.. hold the items.
std::vector<std::size_t> head_first_index(std::size_t batch, std::size_t items) {
  std::vector<std::size_t> idx;
  idx.reserve(batch * (items + 1));
  for (std::size_t b = 0; b < batch; ++b) {
    idx.push_back(0);
    for (std::size_t i = 0; i < items; ++i) idx.push_back(1 + b * items + i);
  }
  return idx;
}

Tensor tile_positions(const Tensor& positions, std::size_t batch, std::size_t length) {
  std::vector<std::size_t> idx(batch * length);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % length;
  return ops::gather_rows(positions, idx);
}

}  // namespace

ImageEncoder::ImageEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config,
                           const ImageGeometry& geometry)
    : config_(config), geometry_(geometry) {
  validate_encoder(config_);
  geometry_.validate();
  const std::size_t w = config_.hidden_dim;
  patch_embed_ = Linear(store, name + ".patch_embed", geometry_.patch_dim(), w);
  cls_ = store.normal(name + ".cls", {1, w}, 0.02);
  positions_ = store.normal(name + ".positions", {geometry_.num_patches() + 1, w}, 0.02);
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(i), w, config_.heads, w * config_.ffn_mult);
  }
  final_norm_ = LayerNorm(store, name + ".final_norm", w);
  projection_ = Linear(store, name + ".projection", w, config_.embed_dim);
}

Sequences ImageEncoder::encode(const Tensor& pixels, const ForwardContext& ctx) const {
  if (pixels.ndim() != 2 || pixels.cols() != geometry_.pixel_count()) {
    throw InputError("image encoder: expected B x " + std::to_string(geometry_.pixel_count()) + " pixels, got " +
                     shape_str(pixels.shape()));
  }
  const std::size_t batch = pixels.rows(), m = geometry_.num_patches();
  Tensor patches = patch_embed_(patchify(pixels.values(), batch, geometry_));
  std::vector<Tensor> parts{cls_, patches};
  Tensor tokens = ops::gather_rows(ops::concat_rows(parts), head_first_index(batch, m));
  if (config_.position_encoding) tokens = ops::add(tokens, tile_positions(positions_, batch, m + 1));
  Sequences seq{tokens, batch, m + 1, {}};
  for (const auto& block : blocks_) seq = block(seq, ctx);
  seq.tokens = projection_(final_norm_(seq.tokens));
  return seq;
}

ImageEncoderOutput ImageEncoder::encode(const SyntheticImage& image) const {
  Tensor pixels({1, image.pixels.size()}, image.pixels);
  Sequences seq = encode(pixels);
  const std::size_t m = geometry_.num_patches();
  std::vector<std::size_t> rest(m);
  std::iota(rest.begin(), rest.end(), 1);
  return {seq.token(0), ops::gather_rows(seq.tokens, rest)};
}

TextEncoder::TextEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config,
                         std::size_t vocab_size, std::size_t max_len)
    : config_(config), vocab_size_(vocab_size), max_len_(max_len) {
  validate_encoder(config_);
  if (vocab_size_ == 0 || max_len_ == 0) throw ConfigError("text encoder: vocab size and max length must be positive");
  const std::size_t w = config_.hidden_dim;
  table_ = store.normal(name + ".token_embed", {vocab_size_, w}, 1.0);
  cls_ = store.normal(name + ".cls", {1, w}, 0.02);
  positions_ = store.normal(name + ".positions", {max_len_ + 1, w}, 0.02);
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(i), w, config_.heads, w * config_.ffn_mult);
  }
  final_norm_ = LayerNorm(store, name + ".final_norm", w);
  projection_ = Linear(store, name + ".projection", w, config_.embed_dim);
}

Sequences TextEncoder::encode(const std::vector<std::vector<std::size_t>>& captions, const ForwardContext& ctx) const {
  if (captions.empty()) throw InputError("text encoder: empty batch");
  std::size_t longest = 0;
  for (const auto& c : captions) {
    if (c.empty() || c.size() > max_len_) {
      throw InputError("text encoder: caption length " + std::to_string(c.size()) + " outside [1, " +
                       std::to_string(max_len_) + "]");
    }
    for (auto id : c) {
      if (id >= vocab_size_) throw InputError("text encoder: token id " + std::to_string(id) + " is out of vocabulary");
    }
    longest = std::max(longest, c.size());
  }
  const std::size_t batch = captions.size(), length = longest + 1;
  // Embedding rows come from [cls; table]; padding reuses token 0 and is masked.
  std::vector<std::size_t> idx;
  idx.reserve(batch * length);
  std::vector<std::size_t> lengths(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    idx.push_back(0);
    for (std::size_t i = 0; i < longest; ++i) idx.push_back(1 + (i < captions[b].size() ? captions[b][i] : 0));
    lengths[b] = captions[b].size() + 1;
  }
  std::vector<Tensor> parts{cls_, table_};
  Tensor tokens = ops::gather_rows(ops::concat_rows(parts), idx);
  if (config_.position_encoding) tokens = ops::add(tokens, tile_positions(positions_, batch, length));
  Sequences seq{tokens, batch, length, lengths};
  for (const auto& block : blocks_) seq = block(seq, ctx);
  seq.tokens = projection_(final_norm_(seq.tokens));
  return seq;
}

TextEncoderOutput TextEncoder::encode(const std::vector<std::size_t>& tokens) const {
  Sequences seq = encode(std::vector<std::vector<std::size_t>>{tokens});
  std::vector<std::size_t> rest(tokens.size());
  std::iota(rest.begin(), rest.end(), 1);
  return {seq.token(0), ops::gather_rows(seq.tokens, rest)};
}

std::string to_string(InstructionSource source) {
  switch (source) {
    case InstructionSource::learned_scene_table: return "learned-scene-table";
    case InstructionSource::frozen_scene_table: return "frozen-scene-table";
    case InstructionSource::toy_conv_encoder: return "toy-conv-encoder";
  }
  return "unknown";
}

InstructionSource instruction_source_from_string(const std::string& name) {
  if (name == "learned-scene-table") return InstructionSource::learned_scene_table;
  if (name == "frozen-scene-table") return InstructionSource::frozen_scene_table;
  if (name == "toy-conv-encoder") return InstructionSource::toy_conv_encoder;
  throw ConfigError("unknown instruction source '" + name + "'");
}

namespace {

// Rows of a Gaussian matrix made orthonormal by Gram-Schmidt; rows beyond the
// width fall back to random unit vectors.
std::vector<double> orthonormal_rows(std::size_t rows, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    double* v = out.data() + r * width;
    for (int attempt = 0; attempt < 8; ++attempt) {
      for (std::size_t j = 0; j < width; ++j) v[j] = rng.normal();
      if (r < width) {
        for (int pass = 0; pass < 2; ++pass) {
          for (std::size_t p = 0; p < r; ++p) {
            const double* u = out.data() + p * width;
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += v[j] * u[j];
            for (std::size_t j = 0; j < width; ++j) v[j] -= dot * u[j];
          }
        }
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < width; ++j) norm += v[j] * v[j];
      norm = std::sqrt(norm);
      if (norm > 1e-6) {
        for (std::size_t j = 0; j < width; ++j) v[j] /= norm;
        break;
      }
    }
  }
  return out;
}

}  // namespace

InstructionEncoder::InstructionEncoder(ParameterStore& store, const std::string& name, InstructionSource source,
                                       std::size_t num_classes, std::size_t embed_dim, const ImageGeometry& geometry,
                                       std::size_t conv_hidden)
    : name_(name), source_(source), num_classes_(num_classes), embed_dim_(embed_dim), geometry_(geometry) {
  if (num_classes_ == 0 || embed_dim_ == 0) throw ConfigError("instruction encoder: sizes must be positive");
  switch (source_) {
    case InstructionSource::learned_scene_table:
      table_ = store.normal(name + ".table", {num_classes_, embed_dim_}, 1.0 / std::sqrt(double(embed_dim_)));
      break;
    case InstructionSource::frozen_scene_table:
      table_ = store.add(name + ".table",
                         Tensor({num_classes_, embed_dim_},
                                orthonormal_rows(num_classes_, embed_dim_, mix_seed(store.seed(), name + ".table"))),
                         false);
      break;
    case InstructionSource::toy_conv_encoder:
      geometry_.validate();
      conv_ = Linear(store, name + ".conv", geometry_.patch_dim(), conv_hidden);
      conv_out_ = Linear(store, name + ".conv_out", conv_hidden, embed_dim_);
      classifier_ = Linear(store, name + ".classifier", embed_dim_, num_classes_);
      break;
  }
}

Tensor InstructionEncoder::encode(std::span<const std::size_t> labels, const Tensor& pixels) const {
  if (source_ == InstructionSource::toy_conv_encoder) {
    if (!pixels.defined()) throw InputError("instruction encoder: convolutional source needs pixels");
    const std::size_t batch = pixels.rows(), m = geometry_.num_patches();
    Tensor features = ops::gelu(conv_(patchify(pixels.values(), batch, geometry_)));
    Tensor pooled = ops::scale(ops::segment_sum(features, m), 1.0 / static_cast<double>(m));
    return conv_out_(pooled);
  }
  for (auto l : labels) {
    if (l >= num_classes_) throw InputError("instruction encoder: unknown scene label " + std::to_string(l));
  }
  std::vector<std::size_t> idx(labels.begin(), labels.end());
  return ops::gather_rows(table_, idx);
}

InstructionEmbedding InstructionEncoder::encode(std::size_t scene_label) const {
  if (source_ == InstructionSource::toy_conv_encoder) {
    throw InputError("instruction encoder: convolutional source needs an image, not a label");
  }
  std::size_t label = scene_label;
  return {encode(std::span<const std::size_t>(&label, 1), Tensor()), source_};
}

InstructionEmbedding InstructionEncoder::encode(const SyntheticImage& image) const {
  std::size_t label = image.scene_label;
  Tensor pixels({1, image.pixels.size()}, image.pixels);
  return {encode(std::span<const std::size_t>(&label, 1), pixels), source_};
}

Tensor InstructionEncoder::classify(const Tensor& pixels) const {
  if (source_ != InstructionSource::toy_conv_encoder) throw ContractError("classify: only the convolutional source");
  return classifier_(encode({}, pixels));
}

InstructionEncoder::PretrainResult InstructionEncoder::pretrain(ParameterStore& store, const Tensor& pixels,
                                                                std::span<const std::size_t> labels,
                                                                std::size_t steps, double learning_rate,
                                                                std::size_t batch_size, std::uint64_t seed) {
  PretrainResult result;
  if (source_ != InstructionSource::toy_conv_encoder) return result;
  const std::size_t n = pixels.rows(), width = pixels.cols();
  if (labels.size() != n) throw InputError("pretrain: label count does not match images");
  if (batch_size == 0) throw ConfigError("pretrain: batch size must be positive");
  Rng rng(seed);
  auto px = pixels.values();
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t bs = std::min(batch_size, n);
    std::vector<double> batch_pixels(bs * width);
    std::vector<std::size_t> batch_labels(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(n));
      std::copy_n(px.data() + j * width, width, batch_pixels.data() + i * width);
      batch_labels[i] = labels[j];
    }
    Tensor loss = ops::cross_entropy(classify(Tensor({bs, width}, std::move(batch_pixels))), batch_labels);
    store.zero_grad();
    loss.backward();
    for (auto& e : store.entries()) {
      if (e.name.compare(0, name_.size() + 1, name_ + ".") != 0 || !e.tensor.has_grad()) continue;
      auto values = e.tensor.mutable_values();
      auto grad = e.tensor.grad();
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= learning_rate * grad[i];
    }
    result.loss_history.push_back(loss.item());
  }
  store.zero_grad();
  {
    NoGradGuard no_grad;
    Tensor logits = classify(pixels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < num_classes_; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      correct += best == labels[i];
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  store.set_trainable(name_ + ".", false);
  return result;
}

}  // namespace priorclip
