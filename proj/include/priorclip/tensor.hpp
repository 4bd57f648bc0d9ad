#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace priorclip {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Precision { f64, f32 };

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array with optional reverse-mode gradient tracking.
///
/// Tensor is a handle: copies share storage and graph position. Values are
/// fixed once an op has produced them; only leaves may be mutated in place
/// (parameter updates), and only gradient accumulators change during
/// backward().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  /// rows()/cols() require a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::vector<double> to_vector() const;
  /// In-place access for leaf tensors only.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  /// Accumulated gradient; empty span when nothing has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar; accumulates into every reachable
  /// requires_grad leaf.
  void backward() const;

  /// Same values, no graph history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Internal: used by op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch: while disabled, ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Thread-local storage precision of op outputs. In f32 mode every op result
/// is rounded to single precision; arithmetic itself stays 64-bit.
class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision p);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision previous_;
};

Precision current_precision();

namespace detail {

/// Builds an op result. `backward` is stored only when gradients are enabled
/// and some parent requires grad. Throws NumericError on non-finite output.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward,
                   const char* op_name);

}  // namespace detail

}  // namespace priorclip
