#include "priorclip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "priorclip/errors.hpp"

namespace priorclip {

namespace {
thread_local bool g_grad_enabled = true;
thread_local Precision g_precision = Precision::f64;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto s : shape) {
    if (s == 0) throw DimensionError("Tensor: zero-length axis in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) throw DimensionError("Tensor::matrix: no rows");
  const std::size_t c = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw DimensionError("Tensor::matrix: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), c}, std::move(flat), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("Tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("Tensor::dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return defined() ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw DimensionError("Tensor::rows: expected 2-D tensor, got " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw DimensionError("Tensor::cols: expected 2-D tensor, got " + shape_str(shape()));
  return node_->shape[1];
}

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("Tensor: use of undefined tensor");
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("Tensor::mutable_values: only leaf tensors may be modified");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw DimensionError("Tensor::at: index out of range");
  return node_->value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw DimensionError("Tensor::at: index out of range");
  return node_->value[r * node_->shape[1] + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("Tensor::set_requires_grad: only leaf tensors");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("Tensor: use of undefined tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward: undefined tensor");
  if (node_->value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(node_->shape));
  }
  // Iterative post-order DFS for the topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->value, false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

PrecisionGuard::PrecisionGuard(Precision p) : previous_(g_precision) { g_precision = p; }
PrecisionGuard::~PrecisionGuard() { g_precision = previous_; }
Precision current_precision() { return g_precision; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward, const char* op_name) {
  if (g_precision == Precision::f32) {
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op_name) + ": non-finite value produced");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace priorclip
