#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "priorclip/tensor.hpp"

namespace priorclip {

/// Probability vector over the m+1 visual tokens [f_cls, F_v].
struct BeliefMatrix {
  Tensor weights;  // 1 x (m+1), differentiable

  std::size_t size() const { return weights.numel(); }
  std::vector<double> values() const { return weights.to_vector(); }
};

using RankVector = std::vector<std::size_t>;

enum class RefineMode { hard, soft_sequence, soft_aggregate };

std::string to_string(RefineMode mode);
RefineMode refine_mode_from_string(const std::string& name);

struct RefinedFeatures {
  RefineMode mode = RefineMode::soft_sequence;
  Tensor tokens;                          // k x d
  std::vector<std::size_t> kept_indices;  // hard mode only, descending belief
};

/// softmax over f_ins . token_l for each of the m+1 token rows.
BeliefMatrix belief_matrix(const Tensor& f_ins, const Tensor& tokens);

/// rank_j = 1 + #{k : belief_k < belief_j}; ties share a rank.
RankVector ranks(std::span<const double> belief);
RankVector ranks(const BeliefMatrix& belief);

/// Keeps the k highest-belief tokens, highest first. Equal beliefs keep the
/// lower original index first. Throws ConfigError unless 1 <= k <= m+1.
RefinedFeatures hard_filter(const Tensor& tokens, const BeliefMatrix& belief, std::size_t k);

/// Weights token l by belief_l + 1/sqrt(rank_l). Ranks are treated as
/// constants for differentiation; gradients reach the beliefs. soft_sequence
/// keeps every weighted token, soft_aggregate sums them into one row.
RefinedFeatures soft_reweight(const Tensor& tokens, const BeliefMatrix& belief, RefineMode mode);

/// Indices of the k largest entries, stable (lower index first on ties).
std::vector<std::size_t> top_k_indices(std::span<const double> belief, std::size_t k);

// Batched forms used in training. `tokens` holds `batch` sequences of
// `length` rows each, `f_ins` is batch x d.

/// batch x length belief weights.
Tensor batch_belief(const Tensor& f_ins, const Tensor& tokens, std::size_t length);

struct BatchRefined {
  Tensor tokens;           // batch*k x d
  std::size_t length = 1;  // k
  std::vector<std::vector<std::size_t>> kept_indices;
};

BatchRefined batch_refine(const Tensor& tokens, const Tensor& belief, std::size_t length, RefineMode mode,
                          std::size_t k);

}  // namespace priorclip
