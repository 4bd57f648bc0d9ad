#pragma once

#include <cmath>
#include <span>

#include "priorclip/tensor.hpp"

namespace priorclip {

struct LossConfig {
  double tau = 0.07;
  /// Logit scale of the affiliation loss is exp(t_logit); default exp(t) = 1/tau.
  double t_logit = std::log(1.0 / 0.07);
  bool trainable_t = false;
  double lambda_cs = 1.0;
  double epsilon = 1e-12;

  /// Throws ConfigError when tau or epsilon is not positive or lambda_cs < 0.
  void validate() const;
};

/// Symmetric InfoNCE over cosine similarities of matched rows:
///   -(1/N) sum_i [log softmax_row(S/tau)_ii + log softmax_col(S/tau)_ii].
/// Rows are l2-normalized internally.
Tensor contrastive_loss(const Tensor& image, const Tensor& text, double tau);

/// Cluster-based symmetric contrastive loss. Each sample is scored against
/// the batch prototype of every other sample's class in the opposite
/// modality; returns (CE_i2t + CE_t2i) / 2. `logit_scale` is exp(t) and may
/// be a trainable scalar.
Tensor affiliation_loss(const Tensor& image, const Tensor& text, std::span<const std::size_t> labels,
                        std::size_t num_classes, const Tensor& logit_scale, double epsilon = 1e-12);
Tensor affiliation_loss(const Tensor& image, const Tensor& text, std::span<const std::size_t> labels,
                        std::size_t num_classes, double logit_scale, double epsilon = 1e-12);

/// L_c + lambda_cs * L_a.
Tensor total_loss(const Tensor& l_c, const Tensor& l_a, double lambda_cs);
double total_loss(double l_c, double l_a, double lambda_cs);

}  // namespace priorclip
