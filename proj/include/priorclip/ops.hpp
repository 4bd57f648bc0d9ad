#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "priorclip/rng.hpp"
#include "priorclip/tensor.hpp"

// Differentiable tensor operations. Matrices are row-major; a token sequence
// of L tokens with width d is an L x d matrix (one token per row), and a batch
// of B equal-length sequences is stacked as a (B*L) x d matrix.
namespace priorclip::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// a * s where s holds exactly one element (differentiable in both).
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// x (N x D) + b (D) broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor exp(const Tensor& a);
/// tanh-approximated GELU.
Tensor gelu(const Tensor& a);

/// A (m x k) * B (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Per-row sums of an N x D matrix, shape {N}.
Tensor row_sum(const Tensor& x);

/// Stabilized softmax along `axis` (0 or 1 for matrices, 0 for vectors).
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma/beta (shape = last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Scales each row to unit Euclidean norm. Throws DegenerateInputError on a
/// zero-norm row. Vectors are treated as a single row.
Tensor l2_normalize(const Tensor& x);

/// out[i] = x[indices[i]]; repeated indices accumulate in backward.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor concat_rows(std::span<const Tensor> parts);
/// Row i of x multiplied by w[i]; w has x.rows() elements.
Tensor scale_rows(const Tensor& x, const Tensor& w);
/// Sums consecutive groups of `group` rows: (B*group) x D -> B x D.
Tensor segment_sum(const Tensor& x, std::size_t group);

/// Mean cross-entropy of row-wise softmax(logits) against class targets.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Inverted dropout with a mask drawn from `rng`; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
  std::size_t heads = 1;
  /// Optional per-sample count of valid keys (<= key_len); keys past it are
  /// masked out. Empty means all keys valid.
  std::vector<std::size_t> key_lengths;
};

/// Multi-head scaled dot-product attention core, softmax(Q K^T / sqrt(dh)) V
/// per sample and head. Q is (batch*query_len) x d, K and V are
/// (batch*key_len) x d; heads split d into equal contiguous slices.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout);

}  // namespace priorclip::ops
