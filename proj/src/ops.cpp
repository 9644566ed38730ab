#include "pico/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pico/errors.hpp"

namespace pico::ops {

namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void record(const char* op, std::function<void()> fn) { Tape::active()->record(op, std::move(fn)); }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t k,
             std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      double* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

template <typename Fn, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fn fn, Deriv deriv) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(xv[i]);
  const bool track = tracking({&x});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record(name, [x, y, deriv]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto xv = x.values();
      auto yv = y.values();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values(), b.values(), out, m, k, n);
  const bool track = tracking({&a, &b});
  Tensor c({m, n}, std::move(out), track);
  if (track) {
    record("matmul", [a, b, c, m, k, n]() mutable {
      auto g = c.grad();
      if (g.empty()) return;
      if (a.requires_grad()) gemm_nt(g, b.values(), a.grad_buffer(), m, n, k);
      if (b.requires_grad()) gemm_tn(a.values(), g, b.grad_buffer(), m, k, n);
    });
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.values(), b.values(), out, m, k, n);
  const bool track = tracking({&a, &b});
  Tensor c({m, n}, std::move(out), track);
  if (track) {
    record("matmul_nt", [a, b, c, m, k, n]() mutable {
      auto g = c.grad();
      if (g.empty()) return;
      if (a.requires_grad()) gemm_nn(g, b.values(), a.grad_buffer(), m, n, k);
      if (b.requires_grad()) gemm_tn(g, a.values(), b.grad_buffer(), m, n, k);
    });
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const bool track = tracking({&a});
  Tensor t({n, m}, std::move(out), track);
  if (track) {
    record("transpose", [a, t, m, n]() mutable {
      auto g = t.grad();
      if (g.empty()) return;
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const bool track = tracking({&a, &b});
  Tensor c(a.shape(), std::move(out), track);
  if (track) {
    record("add", [a, b, c]() mutable {
      auto g = c.grad();
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const bool track = tracking({&a, &b});
  Tensor c(a.shape(), std::move(out), track);
  if (track) {
    record("sub", [a, b, c]() mutable {
      auto g = c.grad();
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const bool track = tracking({&a, &b});
  Tensor c(a.shape(), std::move(out), track);
  if (track) {
    record("mul", [a, b, c]() mutable {
      auto g = c.grad();
      if (g.empty()) return;
      auto av = a.values(), bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return c;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  std::vector<double> out(m * n);
  auto xv = x.values(), bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  const bool track = tracking({&x, &bias});
  Tensor y({m, n}, std::move(out), track);
  if (track) {
    record("add_bias", [x, bias, y, m, n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_constant(const Tensor& x, double c) {
  return unary(
      x, "add_constant", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& x) {
  return unary(
      x, "one_minus", [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw DimensionError("mul_scalar: expected a one-element factor, got " + shape_string(s.shape()));
  const double f = s.item();
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f * xv[i];
  const bool track = tracking({&x, &s});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record("mul_scalar", [x, s, y, f]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto xv = x.values();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        s.grad_buffer()[0] += acc;
      }
    });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(c * (v + k * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor clamped_log(const Tensor& x, double floor) {
  return unary(
      x, "clamped_log", [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() < 1 || x.rank() > 2 || axis >= x.rank())
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_string(x.shape()));
  // View as [outer × len × inner] with the reduced axis in the middle.
  const std::size_t len = x.dim(axis);
  const std::size_t outer = (x.rank() == 2 && axis == 1) ? x.dim(0) : 1;
  const std::size_t inner = (x.rank() == 2 && axis == 0) ? x.dim(1) : 1;
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  const bool track = tracking({&x});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record("softmax", [x, y, len, outer, inner]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto yv = y.values();
      auto gx = x.grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * yv[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t idx = base + i * inner;
            gx[idx] += yv[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1 || x.rank() > 2) throw DimensionError("layer_norm: rank must be 1 or 2");
  const std::size_t n = x.shape().back();
  const std::size_t m = x.size() / n;
  if (gain.size() != n || bias.size() != n)
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match last dimension of " +
                         shape_string(x.shape()));
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * inv;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  const bool track = tracking({&x, &gain, &bias});
  Tensor y(x.shape(), std::move(out), track);
  if (track) {
    record("layer_norm", [x, gain, bias, y, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                          n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = gain.grad_buffer();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < n; ++j) gg[j] += g[r * n + j] * xhat[r * n + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const double nd = static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[r * n + j] * gv[j];
            sum_d += d;
            sum_dx += d * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[r * n + j] * gv[j];
            gx[r * n + j] += inv_std[r] / nd * (nd * d - sum_d - xhat[r * n + j] * sum_dx);
          }
        }
      }
    });
  }
  return y;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                           std::to_string(vocab) + " rows");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const bool track = tracking({&table});
  Tensor y({ids.size(), d}, std::move(out), track);
  if (track) {
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    record("embedding", [table, y, idv = std::move(idv), d]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(idv[i]) * d + j] += g[i * d + j];
    });
  }
  return y;
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(n, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  for (auto& v : out) v /= static_cast<double>(m);
  const bool track = tracking({&x});
  Tensor y({n}, std::move(out), track);
  if (track) {
    record("mean_rows", [x, y, m, n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j] * inv;
    });
  }
  return y;
}

Tensor row(const Tensor& x, std::size_t index) {
  require_matrix(x, "row");
  const std::size_t m = x.rows(), n = x.cols();
  if (index >= m) throw DimensionError("row: index " + std::to_string(index) + " out of range");
  auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(index * n),
                          xv.begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  const bool track = tracking({&x});
  Tensor y({n}, std::move(out), track);
  if (track) {
    record("row", [x, y, index, n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      for (std::size_t j = 0; j < n; ++j) gx[index * n + j] += g[j];
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const bool track = tracking({&x});
  Tensor y({1}, {total}, track);
  if (track) {
    record("sum", [x, y]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      for (auto& gx : x.grad_buffer()) gx += g[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor reshape(const Tensor& x, Shape shape) {
  auto xv = x.values();
  const bool track = tracking({&x});
  Tensor y(std::move(shape), std::vector<double>(xv.begin(), xv.end()), track);
  if (track) {
    record("reshape", [x, y]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n)
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * n + begin + j];
  const bool track = tracking({&x});
  Tensor y({m, w}, std::move(out), track);
  if (track) {
    record("slice_cols", [x, y, m, n, w, begin]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > m)
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * n));
  const bool track = tracking({&x});
  Tensor y({end - begin, n}, std::move(out), track);
  if (track) {
    record("slice_rows", [x, y, begin, n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
  }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = pv[i * w + j];
    offset += w;
  }
  const bool track = Tape::active() != nullptr && any_grad;
  Tensor y({m, total}, std::move(out), track);
  if (track) {
    record("concat_cols", [parts, y, m, total]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offset + j];
        }
        offset += w;
      }
    });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len)
    throw DimensionError("cross_entropy: " + std::to_string(t_len) + " logit rows vs " +
                         std::to_string(targets.size()) + " targets");
  std::vector<double> probs(t_len * v);
  double total = 0.0;
  auto lv = logits.values();
  for (std::size_t t = 0; t < t_len; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= v)
      throw DimensionError("cross_entropy: target " + std::to_string(targets[t]) + " out of range");
    const double* row = lv.data() + t * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t j = 0; j < v; ++j) probs[t * v + j] = std::exp(row[j] - log_z);
    total += log_z - row[static_cast<std::size_t>(targets[t])];
  }
  const bool track = tracking({&logits});
  Tensor y({1}, {total / static_cast<double>(t_len)}, track);
  if (track) {
    std::vector<std::int32_t> tv(targets.begin(), targets.end());
    record("cross_entropy", [logits, y, probs = std::move(probs), tv = std::move(tv), t_len,
                             v]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gl = logits.grad_buffer();
      const double s = g[0] / static_cast<double>(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < v; ++j) gl[t * v + j] += s * probs[t * v + j];
        gl[t * v + static_cast<std::size_t>(tv[t])] -= s;
      }
    });
  }
  return y;
}

Tensor select_cols_sum(const Tensor& x, std::span<const std::int32_t> cols) {
  require_matrix(x, "select_cols_sum");
  const std::size_t m = x.rows(), n = x.cols();
  for (auto c : cols)
    if (c < 0 || static_cast<std::size_t>(c) >= n)
      throw DimensionError("select_cols_sum: column " + std::to_string(c) + " out of range");
  std::vector<double> out(m, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (auto c : cols) out[i] += xv[i * n + static_cast<std::size_t>(c)];
  const bool track = tracking({&x});
  Tensor y({m}, std::move(out), track);
  if (track) {
    std::vector<std::int32_t> cv(cols.begin(), cols.end());
    record("select_cols_sum", [x, y, cv = std::move(cv), m, n]() mutable {
      auto g = y.grad();
      if (g.empty()) return;
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (auto c : cv) gx[i * n + static_cast<std::size_t>(c)] += g[i];
    });
  }
  return y;
}

Tensor maximum(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw DimensionError("maximum: no arguments");
  std::size_t best = 0;
  bool any_grad = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].size() != 1)
      throw DimensionError("maximum: arguments must have one element, got " +
                           shape_string(scalars[i].shape()));
    if (scalars[i].item() > scalars[best].item()) best = i;
    any_grad = any_grad || scalars[i].requires_grad();
  }
  const bool track = Tape::active() != nullptr && any_grad;
  Tensor y({1}, {scalars[best].item()}, track);
  if (track) {
    Tensor winner = scalars[best];
    record("maximum", [winner, y]() mutable {
      auto g = y.grad();
      if (g.empty() || !winner.requires_grad()) return;
      winner.grad_buffer()[0] += g[0];
    });
  }
  return y;
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[i * n + j] = -std::numeric_limits<double>::infinity();
  return Tensor({n, n}, std::move(out), false);
}

}  // namespace pico::ops
