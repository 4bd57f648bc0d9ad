#include "priorclip/layers.hpp"

#include <cmath>

#include "priorclip/errors.hpp"

namespace priorclip {

Tensor ParameterStore::normal(const std::string& name, Shape shape, double stddev) {
  Rng rng(mix_seed(seed_, name));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return add(name, Tensor(std::move(shape), std::move(values), true));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value, true));
}

Tensor ParameterStore::add(const std::string& name, Tensor tensor, bool trainable) {
  if (contains(name)) throw ContractError("ParameterStore: duplicate parameter '" + name + "'");
  if (!tensor.is_leaf()) throw ContractError("ParameterStore: parameter '" + name + "' is not a leaf");
  tensor.set_requires_grad(trainable);
  entries_.push_back({name, tensor, trainable});
  return tensor;
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw InputError("ParameterStore: no parameter named '" + name + "'");
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) == 0) {
      e.trainable = trainable;
      e.tensor.set_requires_grad(trainable);
    }
  }
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx) {
  if (ctx.rng == nullptr || ctx.dropout <= 0.0) return x;
  return ops::dropout(x, ctx.dropout, *ctx.rng);
}

Tensor Sequences::token(std::size_t position) const {
  if (position >= length) throw DimensionError("Sequences::token: position out of range");
  std::vector<std::size_t> idx(batch);
  for (std::size_t b = 0; b < batch; ++b) idx[b] = b * length + position;
  return ops::gather_rows(tokens, idx);
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, bool with_bias) {
  weight = store.normal(name + ".weight", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  if (with_bias) bias = store.constant(name + ".bias", {out}, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ops::matmul(x, weight);
  return bias.defined() ? ops::add_bias(y, bias) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width) {
  gamma = store.constant(name + ".gamma", {width}, 1.0);
  beta = store.constant(name + ".beta", {width}, 0.0);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width,
                                       std::size_t heads_)
    : heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  q = Linear(store, name + ".q", width, width);
  k = Linear(store, name + ".k", width, width);
  v = Linear(store, name + ".v", width, width);
  o = Linear(store, name + ".o", width, width);
}

Tensor MultiHeadAttention::operator()(const Sequences& query, const Sequences& context) const {
  if (query.batch != context.batch) throw DimensionError("attention: batch mismatch");
  if (query.width() != context.width()) throw DimensionError("attention: width mismatch");
  ops::AttentionLayout layout;
  layout.batch = query.batch;
  layout.query_len = query.length;
  layout.key_len = context.length;
  layout.heads = heads;
  layout.key_lengths = context.lengths;
  Tensor mixed = ops::attention(q(query.tokens), k(context.tokens), v(context.tokens), layout);
  return o(mixed);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden) {
  up = Linear(store, name + ".up", width, hidden);
  down = Linear(store, name + ".down", hidden, width);
}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  return down(maybe_dropout(ops::gelu(up(x)), ctx));
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name, std::size_t width,
                                   std::size_t heads, std::size_t hidden)
    : norm_attn(store, name + ".norm_attn", width),
      norm_ffn(store, name + ".norm_ffn", width),
      attn(store, name + ".attn", width, heads),
      ffn(store, name + ".ffn", width, hidden) {}

Sequences TransformerBlock::operator()(const Sequences& x, const ForwardContext& ctx) const {
  Sequences normed = x;
  normed.tokens = norm_attn(x.tokens);
  Sequences out = x;
  out.tokens = ops::add(x.tokens, maybe_dropout(attn(normed, normed), ctx));
  out.tokens = ops::add(out.tokens, maybe_dropout(ffn(norm_ffn(out.tokens), ctx), ctx));
  return out;
}

CrossAttentionBlock::CrossAttentionBlock(ParameterStore& store, const std::string& name, std::size_t width,
                                         std::size_t heads, std::size_t hidden)
    : norm_query(store, name + ".norm_query", width),
      norm_context(store, name + ".norm_context", width),
      norm_ffn(store, name + ".norm_ffn", width),
      attn(store, name + ".attn", width, heads),
      ffn(store, name + ".ffn", width, hidden) {}

Sequences CrossAttentionBlock::operator()(const Sequences& x, const Sequences& context,
                                          const ForwardContext& ctx) const {
  Sequences q = x;
  q.tokens = norm_query(x.tokens);
  Sequences kv = context;
  kv.tokens = norm_context(context.tokens);
  Sequences out = x;
  out.tokens = ops::add(x.tokens, maybe_dropout(attn(q, kv), ctx));
  out.tokens = ops::add(out.tokens, maybe_dropout(ffn(norm_ffn(out.tokens), ctx), ctx));
  return out;
}

}  // namespace priorclip
