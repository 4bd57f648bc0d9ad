#include "priorclip/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "priorclip/errors.hpp"
#include "priorclip/ops.hpp"

namespace priorclip {

std::string to_string(RefineMode mode) {
  switch (mode) {
    case RefineMode::hard: return "hard";
    case RefineMode::soft_sequence: return "soft-sequence";
    case RefineMode::soft_aggregate: return "soft-aggregate";
  }
  return "unknown";
}

RefineMode refine_mode_from_string(const std::string& name) {
  if (name == "hard") return RefineMode::hard;
  if (name == "soft-sequence" || name == "soft") return RefineMode::soft_sequence;
  if (name == "soft-aggregate") return RefineMode::soft_aggregate;
  throw ConfigError("unknown belief mode '" + name + "'");
}

Tensor batch_belief(const Tensor& f_ins, const Tensor& tokens, std::size_t length) {
  if (f_ins.ndim() != 2 || tokens.ndim() != 2) throw DimensionError("belief: expected matrices");
  if (f_ins.cols() != tokens.cols()) {
    throw DimensionError("belief: instruction width " + std::to_string(f_ins.cols()) +
                         " does not match token width " + std::to_string(tokens.cols()));
  }
  const std::size_t batch = f_ins.rows();
  if (length == 0 || tokens.rows() != batch * length) throw DimensionError("belief: token rows do not match batch");
  std::vector<std::size_t> rep(batch * length);
  for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = i / length;
  Tensor scores = ops::row_sum(ops::mul(tokens, ops::gather_rows(f_ins, rep)));
  return ops::softmax(ops::reshape(scores, {batch, length}), 1);
}

BeliefMatrix belief_matrix(const Tensor& f_ins, const Tensor& tokens) {
  Tensor f = f_ins.ndim() == 1 ? ops::reshape(f_ins, {1, f_ins.numel()}) : f_ins;
  if (f.rows() != 1) throw DimensionError("belief_matrix: expected a single instruction vector");
  if (tokens.ndim() != 2) throw DimensionError("belief_matrix: tokens must be a matrix");
  return {batch_belief(f, tokens, tokens.rows())};
}

RankVector ranks(std::span<const double> belief) {
  const std::size_t n = belief.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return belief[a] < belief[b]; });
  RankVector r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && belief[order[j]] == belief[order[i]]) ++j;
    // i entries are strictly smaller than this tie group.
    for (std::size_t t = i; t < j; ++t) r[order[t]] = i + 1;
    i = j;
  }
  return r;
}

RankVector ranks(const BeliefMatrix& belief) {
  auto v = belief.values();
  return ranks(std::span<const double>(v));
}

std::vector<std::size_t> top_k_indices(std::span<const double> belief, std::size_t k) {
  std::vector<std::size_t> order(belief.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return belief[a] > belief[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

namespace {

void check_k(std::size_t k, std::size_t length) {
  if (k < 1 || k > length) {
    throw ConfigError("filter size " + std::to_string(k) + " outside [1, " + std::to_string(length) + "]");
  }
}

}  // namespace

BatchRefined batch_refine(const Tensor& tokens, const Tensor& belief, std::size_t length, RefineMode mode,
                          std::size_t k) {
  const std::size_t batch = belief.rows();
  if (belief.cols() != length || tokens.rows() != batch * length) {
    throw DimensionError("refine: belief shape does not match tokens");
  }
  auto bv = belief.values();
  BatchRefined out;
  if (mode == RefineMode::hard) {
    check_k(k, length);
    std::vector<std::size_t> rows;
    rows.reserve(batch * k);
    for (std::size_t b = 0; b < batch; ++b) {
      auto kept = top_k_indices(bv.subspan(b * length, length), k);
      for (auto i : kept) rows.push_back(b * length + i);
      out.kept_indices.push_back(std::move(kept));
    }
    out.tokens = ops::gather_rows(tokens, rows);
    out.length = k;
    return out;
  }
  // Ranks are piecewise constant in the beliefs: held fixed as data.
  std::vector<double> inv_sqrt_rank(batch * length);
  for (std::size_t b = 0; b < batch; ++b) {
    auto r = ranks(bv.subspan(b * length, length));
    for (std::size_t i = 0; i < length; ++i) inv_sqrt_rank[b * length + i] = 1.0 / std::sqrt(static_cast<double>(r[i]));
  }
  Tensor weights = ops::add(ops::reshape(belief, {batch * length}), Tensor({batch * length}, std::move(inv_sqrt_rank)));
  Tensor weighted = ops::scale_rows(tokens, weights);
  if (mode == RefineMode::soft_sequence) {
    out.tokens = weighted;
    out.length = length;
  } else {
    out.tokens = ops::segment_sum(weighted, length);
    out.length = 1;
  }
  return out;
}

RefinedFeatures hard_filter(const Tensor& tokens, const BeliefMatrix& belief, std::size_t k) {
  if (tokens.ndim() != 2 || tokens.rows() != belief.size()) throw DimensionError("hard_filter: token/belief mismatch");
  BatchRefined r = batch_refine(tokens, belief.weights, tokens.rows(), RefineMode::hard, k);
  return {RefineMode::hard, r.tokens, std::move(r.kept_indices.front())};
}

RefinedFeatures soft_reweight(const Tensor& tokens, const BeliefMatrix& belief, RefineMode mode) {
  if (mode == RefineMode::hard) throw ConfigError("soft_reweight: mode must be soft-sequence or soft-aggregate");
  if (tokens.ndim() != 2 || tokens.rows() != belief.size()) throw DimensionError("soft_reweight: token/belief mismatch");
  BatchRefined r = batch_refine(tokens, belief.weights, tokens.rows(), mode, 0);
  return {mode, r.tokens, {}};
}

}  // namespace priorclip
