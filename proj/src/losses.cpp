#include "priorclip/losses.hpp"

#include <numeric>
#include <vector>

#include "priorclip/errors.hpp"
#include "priorclip/ops.hpp"

namespace priorclip {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("loss: tau must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("loss: epsilon must be positive");
  if (lambda_cs < 0.0) throw ConfigError("loss: lambda_cs must be nonnegative");
}

namespace {

void check_pair(const Tensor& image, const Tensor& text, const char* name) {
  if (image.ndim() != 2 || text.ndim() != 2) throw DimensionError(std::string(name) + ": embeddings must be matrices");
  if (image.rows() == 0) throw InputError(std::string(name) + ": empty batch");
  if (image.shape() != text.shape()) {
    throw DimensionError(std::string(name) + ": image " + shape_str(image.shape()) + " vs text " +
                         shape_str(text.shape()));
  }
}

std::vector<std::size_t> diagonal_targets(std::size_t n) {
  std::vector<std::size_t> y(n);
  std::iota(y.begin(), y.end(), 0);
  return y;
}

}  // namespace

Tensor contrastive_loss(const Tensor& image, const Tensor& text, double tau) {
  check_pair(image, text, "contrastive_loss");
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be positive");
  Tensor v = ops::l2_normalize(image);
  Tensor t = ops::l2_normalize(text);
  Tensor logits = ops::scale(ops::matmul(v, ops::transpose(t)), 1.0 / tau);
  auto y = diagonal_targets(image.rows());
  // Row CE covers image->text, column CE (transposed logits) text->image;
  // each CE is a mean, so their sum equals the 1/N-weighted two-term sum.
  return ops::add(ops::cross_entropy(logits, y), ops::cross_entropy(ops::transpose(logits), y));
}

Tensor affiliation_loss(const Tensor& image, const Tensor& text, std::span<const std::size_t> labels,
                        std::size_t num_classes, const Tensor& logit_scale, double epsilon) {
  check_pair(image, text, "affiliation_loss");
  const std::size_t batch = image.rows();
  if (labels.size() != batch) throw InputError("affiliation_loss: label count does not match batch");
  if (!(epsilon > 0.0)) throw ConfigError("affiliation_loss: epsilon must be positive");
  for (auto c : labels) {
    if (c >= num_classes) throw InputError("affiliation_loss: label " + std::to_string(c) + " >= class count");
  }
  // Step 1: l2 normalization.
  Tensor img = ops::l2_normalize(image);
  Tensor txt = ops::l2_normalize(text);
  // Step 2: one-hot Y and class counts s = Y^T 1 + eps.
  std::vector<double> y(batch * num_classes, 0.0);
  std::vector<double> counts(num_classes, epsilon);
  for (std::size_t i = 0; i < batch; ++i) {
    y[i * num_classes + labels[i]] = 1.0;
    counts[labels[i]] += 1.0;
  }
  Tensor onehot({batch, num_classes}, y);
  // Step 3: prototypes diag(s)^-1 Y^T X, folded into a C x B constant.
  std::vector<double> avg(num_classes * batch, 0.0);
  for (std::size_t i = 0; i < batch; ++i) avg[labels[i] * batch + i] = 1.0 / counts[labels[i]];
  Tensor averaging({num_classes, batch}, std::move(avg));
  Tensor img_proto = ops::matmul(averaging, img);
  Tensor txt_proto = ops::matmul(averaging, txt);
  // Step 4: sample-aligned centers.
  Tensor img_centers = ops::matmul(onehot, img_proto);
  Tensor txt_centers = ops::matmul(onehot, txt_proto);
  // Step 5: scaled cosine similarities.
  Tensor z_i2t = ops::mul_scalar(ops::matmul(img, ops::transpose(txt_centers)), logit_scale);
  Tensor z_t2i = ops::mul_scalar(ops::matmul(txt, ops::transpose(img_centers)), logit_scale);
  // Step 6: symmetric cross-entropy against diagonal targets.
  auto targets = diagonal_targets(batch);
  return ops::scale(ops::add(ops::cross_entropy(z_i2t, targets), ops::cross_entropy(z_t2i, targets)), 0.5);
}

Tensor affiliation_loss(const Tensor& image, const Tensor& text, std::span<const std::size_t> labels,
                        std::size_t num_classes, double logit_scale, double epsilon) {
  return affiliation_loss(image, text, labels, num_classes, Tensor::scalar(logit_scale), epsilon);
}

Tensor total_loss(const Tensor& l_c, const Tensor& l_a, double lambda_cs) {
  if (lambda_cs == 0.0) return l_c;
  return ops::add(l_c, ops::scale(l_a, lambda_cs));
}

double total_loss(double l_c, double l_a, double lambda_cs) { return l_c + lambda_cs * l_a; }

}  // namespace priorclip
