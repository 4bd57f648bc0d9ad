#include "priorclip/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "priorclip/errors.hpp"

namespace priorclip::ops {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.ndim() != 2) throw DimensionError(std::string(op) + ": expected matrix, got " + shape_str(a.shape()));
}

// Views a 1-D tensor as one row.
std::pair<std::size_t, std::size_t> as_rows(const Tensor& a) {
  if (a.ndim() == 1) return {1, a.dim(0)};
  if (a.ndim() == 2) return {a.dim(0), a.dim(1)};
  throw DimensionError("expected vector or matrix, got " + shape_str(a.shape()));
}

template <typename F>
Tensor unary(const Tensor& a, const char* name, F forward_fn, std::function<void(Node&)> back) {
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward_fn(in[i]);
  return detail::make_result(a.shape(), std::move(out), {a}, std::move(back), name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& in = parent(self, p);
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& in = parent(self, p);
      if (!in.requires_grad) continue;
      const double sign = p == 0 ? 1.0 : -1.0;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& l = parent(self, 0);
    Node& r = parent(self, 1);
    if (l.requires_grad) {
      auto& g = l.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * r.value[i];
    }
    if (r.requires_grad) {
      auto& g = r.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * l.value[i];
    }
  }, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double v) { return v * factor; }, [factor](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, "add_scalar", [value](double v) { return v + value; }, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("mul_scalar: factor must have one element");
  const double f = s.values()[0];
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  return detail::make_result(a.shape(), std::move(out), {a, s}, [](Node& self) {
    Node& in = parent(self, 0);
    Node& sc = parent(self, 1);
    if (in.requires_grad) {
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sc.value[0];
    }
    if (sc.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * in.value[i];
      sc.ensure_grad()[0] += acc;
    }
  }, "mul_scalar");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const auto [n, d] = as_rows(x);
  if (b.numel() != d) throw DimensionError("add_bias: bias length " + std::to_string(b.numel()) +
                                           " does not match width " + std::to_string(d));
  auto xv = x.values(), bv = b.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
  return detail::make_result(x.shape(), std::move(out), {x, b}, [n = n, d = d](Node& self) {
    Node& in = parent(self, 0);
    Node& bias = parent(self, 1);
    if (in.requires_grad) {
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bias.requires_grad) {
      auto& g = bias.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
    }
  }, "add_bias");
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double v) { return std::exp(v); }, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  return unary(a, "gelu", [](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }, [](Node& self) {
    Node& in = parent(self, 0);
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i];
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      g[i] += self.grad[i] * d;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
  return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& l = parent(self, 0);
    Node& r = parent(self, 1);
    ConstMapMat dc(self.grad.data(), m, n);
    if (l.requires_grad) {
      MapMat(l.ensure_grad().data(), m, k).noalias() += dc * ConstMapMat(r.value.data(), k, n).transpose();
    }
    if (r.requires_grad) {
      MapMat(r.ensure_grad().data(), k, n).noalias() += ConstMapMat(l.value.data(), m, k).transpose() * dc;
    }
  }, "matmul");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return detail::make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  }, "transpose");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return detail::make_result(std::move(shape), a.to_vector(), {a}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  }, "reshape");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return detail::make_result({1}, {s}, {a}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (auto& v : g) v += self.grad[0];
  }, "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor row_sum(const Tensor& x) {
  const auto [n, d] = as_rows(x);
  auto xv = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += xv[i * d + j];
  return detail::make_result({n}, std::move(out), {x}, [d = d](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i];
  }, "row_sum");
}

namespace {

// Row-wise softmax / log-softmax on an n x d view.
Tensor softmax_rows(const Tensor& x, bool log_space) {
  const auto [n, d] = as_rows(x);
  if (d == 0) throw DimensionError("softmax: empty axis");
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    const double mx = *std::max_element(row, row + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < d; ++j) {
      const double s = row[j] - mx - log_z;
      out[i * d + j] = log_space ? s : std::exp(s);
    }
  }
  if (log_space) {
    return detail::make_result(x.shape(), std::move(out), {x}, [n = n, d = d](Node& self) {
      auto& g = parent(self, 0).ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < d; ++j) gs += self.grad[i * d + j];
        for (std::size_t j = 0; j < d; ++j)
          g[i * d + j] += self.grad[i * d + j] - std::exp(self.value[i * d + j]) * gs;
      }
    }, "log_softmax");
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [n = n, d = d](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        g[i * d + j] += self.value[i * d + j] * (self.grad[i * d + j] - dot);
    }
  }, "softmax");
}

Tensor softmax_axis(const Tensor& x, std::size_t axis, bool log_space) {
  if (x.ndim() == 1) {
    if (axis != 0) throw DimensionError("softmax: axis out of range for vector");
    return softmax_rows(x, log_space);
  }
  require_matrix(x, "softmax");
  if (axis == 1) return softmax_rows(x, log_space);
  if (axis == 0) return transpose(softmax_rows(transpose(x), log_space));
  throw DimensionError("softmax: axis out of range");
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) { return softmax_axis(x, axis, false); }
Tensor log_softmax(const Tensor& x, std::size_t axis) { return softmax_axis(x, axis, true); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  const std::size_t n = x.numel() / d;
  if (gamma.numel() != d || beta.numel() != d) throw DimensionError("layer_norm: affine parameter width mismatch");
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> out(xv.size());
  // Saved normalized values and inverse std for backward.
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  return detail::make_result(x.shape(), std::move(out), {x, gamma, beta}, [n, d, xhat, inv_std](Node& self) {
    Node& in = parent(self, 0);
    Node& ga = parent(self, 1);
    Node& be = parent(self, 2);
    if (ga.requires_grad) {
      auto& g = ga.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j] * (*xhat)[i * d + j];
    }
    if (be.requires_grad) {
      auto& g = be.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
    }
    if (in.requires_grad) {
      auto& g = in.ensure_grad();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t i = 0; i < n; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = self.grad[i * d + j] * ga.value[j];
          s1 += dh;
          s2 += dh * (*xhat)[i * d + j];
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = self.grad[i * d + j] * ga.value[j];
          g[i * d + j] += (*inv_std)[i] * (dh - inv_d * s1 - (*xhat)[i * d + j] * inv_d * s2);
        }
      }
    }
  }, "layer_norm");
}

Tensor l2_normalize(const Tensor& x) {
  const auto [n, d] = as_rows(x);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  auto norms = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv[i * d + j] * xv[i * d + j];
    const double nrm = std::sqrt(s);
    if (!(nrm > 0.0)) throw DegenerateInputError("l2_normalize: row " + std::to_string(i) + " has zero norm");
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] / nrm;
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [n = n, d = d, norms](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        g[i * d + j] += (self.grad[i * d + j] - self.value[i * d + j] * dot) / (*norms)[i];
    }
  }, "l2_normalize");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const auto [n, d] = as_rows(x);
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  auto xv = x.values();
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) throw DimensionError("gather_rows: index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(xv.data() + indices[r] * d, d, out.data() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return detail::make_result({idx.size(), d}, std::move(out), {x}, [idx, d = d](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
  }, "gather_rows");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = as_rows(parts.front()).second;
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto [n, w] = as_rows(p);
    if (w != d) throw DimensionError("concat_rows: width mismatch");
    offsets.push_back(out.size());
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
    total += n;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return detail::make_result({total, d}, std::move(out), std::move(parents), [offsets](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      Node& in = parent(self, p);
      if (!in.requires_grad) continue;
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[p] + i];
    }
  }, "concat_rows");
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  const auto [n, d] = as_rows(x);
  if (w.numel() != n) throw DimensionError("scale_rows: weight count does not match row count");
  auto xv = x.values(), wv = w.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] * wv[i];
  return detail::make_result(x.shape(), std::move(out), {x, w}, [n = n, d = d](Node& self) {
    Node& in = parent(self, 0);
    Node& wt = parent(self, 1);
    if (in.requires_grad) {
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i * d + j] * wt.value[i];
    }
    if (wt.requires_grad) {
      auto& g = wt.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i] += self.grad[i * d + j] * in.value[i * d + j];
    }
  }, "scale_rows");
}

Tensor segment_sum(const Tensor& x, std::size_t group) {
  const auto [n, d] = as_rows(x);
  if (group == 0 || n % group != 0) throw DimensionError("segment_sum: rows not divisible by group size");
  const std::size_t b = n / group;
  auto xv = x.values();
  std::vector<double> out(b * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[(i / group) * d + j] += xv[i * d + j];
  return detail::make_result({b, d}, std::move(out), {x}, [n = n, d = d, group](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[(i / group) * d + j];
  }, "segment_sum");
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: target count does not match rows");
  for (auto t : targets) {
    if (t >= c) throw InputError("cross_entropy: target class out of range");
  }
  auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * c;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    const double mx = row[arg];
    // log(1 + rest) keeps precision when the row is nearly one-hot.
    double rest = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j != arg) rest += std::exp(row[j] - mx);
    }
    const double log_z = std::log1p(rest) + mx;
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - log_z);
    loss += (mx - row[targets[i]]) + std::log1p(rest);
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::make_result({1}, {loss}, {logits}, [n, c, probs, tgt](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    const double s = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += s * (*probs)[i * c + j];
      g[i * c + tgt[i]] -= s;
    }
  }, "cross_entropy");
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep = 1.0 - p;
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (auto& m : *mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (*mask)[i];
  return detail::make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  }, "dropout");
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const std::size_t B = layout.batch, Lq = layout.query_len, Lk = layout.key_len, H = layout.heads;
  const std::size_t d = q.cols();
  if (H == 0 || d % H != 0) throw DimensionError("attention: width not divisible by head count");
  if (q.rows() != B * Lq || k.rows() != B * Lk || v.rows() != B * Lk) {
    throw DimensionError("attention: row counts do not match batch layout");
  }
  if (k.cols() != d || v.cols() != d) throw DimensionError("attention: width mismatch");
  std::vector<std::size_t> valid(B, Lk);
  if (!layout.key_lengths.empty()) {
    if (layout.key_lengths.size() != B) throw DimensionError("attention: key_lengths size mismatch");
    for (std::size_t b = 0; b < B; ++b) {
      if (layout.key_lengths[b] == 0 || layout.key_lengths[b] > Lk) throw DimensionError("attention: bad key length");
      valid[b] = layout.key_lengths[b];
    }
  }
  const std::size_t dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto qv = q.values(), kv = k.values(), vv = v.values();
  // probs[b][h][i][j], masked entries stay 0.
  auto probs = std::make_shared<std::vector<double>>(B * H * Lq * Lk, 0.0);
  std::vector<double> out(B * Lq * d, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t nk = valid[b];
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const double* qi = qv.data() + (b * Lq + i) * d + h * dh;
        double* p = probs->data() + ((b * H + h) * Lq + i) * Lk;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          const double* kj = kv.data() + (b * Lk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        double* oi = out.data() + (b * Lq + i) * d + h * dh;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] /= z;
          const double* vj = vv.data() + (b * Lk + j) * d + h * dh;
          for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
  return detail::make_result({B * Lq, d}, std::move(out), {q, k, v},
      [B, Lq, Lk, H, d, dh, inv_sqrt, valid, probs](Node& self) {
    Node& qn = parent(self, 0);
    Node& kn = parent(self, 1);
    Node& vn = parent(self, 2);
    std::vector<double>* gq = qn.requires_grad ? &qn.ensure_grad() : nullptr;
    std::vector<double>* gk = kn.requires_grad ? &kn.ensure_grad() : nullptr;
    std::vector<double>* gv = vn.requires_grad ? &vn.ensure_grad() : nullptr;
    std::vector<double> dp(Lk);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t nk = valid[b];
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < Lq; ++i) {
          const double* p = probs->data() + ((b * H + h) * Lq + i) * Lk;
          const double* go = self.grad.data() + (b * Lq + i) * d + h * dh;
          double dot = 0.0;
          for (std::size_t j = 0; j < nk; ++j) {
            const double* vj = vn.value.data() + (b * Lk + j) * d + h * dh;
            double s = 0.0;
            for (std::size_t t = 0; t < dh; ++t) s += go[t] * vj[t];
            dp[j] = s;
            dot += s * p[j];
            if (gv) {
              double* gvj = gv->data() + (b * Lk + j) * d + h * dh;
              for (std::size_t t = 0; t < dh; ++t) gvj[t] += p[j] * go[t];
            }
          }
          const double* qi = qn.value.data() + (b * Lq + i) * d + h * dh;
          for (std::size_t j = 0; j < nk; ++j) {
            const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
            const double* kj = kn.value.data() + (b * Lk + j) * d + h * dh;
            if (gq) {
              double* gqi = gq->data() + (b * Lq + i) * d + h * dh;
              for (std::size_t t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
            }
            if (gk) {
              double* gkj = gk->data() + (b * Lk + j) * d + h * dh;
              for (std::size_t t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
            }
          }
        }
      }
    }
  }, "attention");
}

}  // namespace priorclip::ops
