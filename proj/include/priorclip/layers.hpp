#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "priorclip/ops.hpp"
#include "priorclip/rng.hpp"
#include "priorclip/tensor.hpp"

namespace priorclip {

/// Named, ordered collection of model parameters. Initial values are drawn
/// from a stream seeded by (store seed, parameter name), so a parameter's
/// initialization does not depend on what else was registered or in which
/// order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Tensor normal(const std::string& name, Shape shape, double stddev);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor add(const std::string& name, Tensor tensor, bool trainable = true);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);
  void zero_grad();
  std::size_t total_size() const;

 private:
  std::uint64_t seed_;
  std::vector<Entry> entries_;
};

/// Per-forward options. Dropout is applied only when `rng` is set and the
/// rate is positive.
struct ForwardContext {
  Rng* rng = nullptr;
  double dropout = 0.0;
};

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx);

/// A batch of token sequences padded to a common length, stacked as
/// (batch*length) x d. `lengths[b]` counts the valid tokens of sample b;
/// empty means every sample is full length.
struct Sequences {
  Tensor tokens;
  std::size_t batch = 1;
  std::size_t length = 1;
  std::vector<std::size_t> lengths;

  std::size_t width() const { return tokens.cols(); }
  /// Rows holding token `position` of every sample, shape batch x d.
  Tensor token(std::size_t position) const;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads);

  /// Every query attends over the valid keys of its own sample.
  Tensor operator()(const Sequences& query, const Sequences& context) const;

  Linear q, k, v, o;
  std::size_t heads = 1;
};

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
};

/// Pre-norm encoder block: x + Attn(LN(x)), then x + FFN(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                   std::size_t hidden);
  Sequences operator()(const Sequences& x, const ForwardContext& ctx) const;

  LayerNorm norm_attn, norm_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;
};

/// Pre-norm cross-attention block: queries from `x`, keys/values from
/// `context`, then a position-wise FFN. Shapes follow `x`.
class CrossAttentionBlock {
 public:
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                      std::size_t hidden);
  Sequences operator()(const Sequences& x, const Sequences& context, const ForwardContext& ctx) const;

  LayerNorm norm_query, norm_context, norm_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;
};

}  // namespace priorclip
