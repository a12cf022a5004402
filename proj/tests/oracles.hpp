#pragma once

// Test-only oracles, independent of the library's gradient path: central
// finite differences and a plain dense matmul.

#include <cmath>
#include <functional>
#include <vector>

#include "tsa/tensor.hpp"

namespace oracles {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

// Central finite differences of f at x: g_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
inline std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h) {
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x[i];
    x[i] = original + h;
    const double up = f(x);
    x[i] = original - h;
    const double down = f(x);
    x[i] = original;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Finite differences directly against a tensor's storage; f() re-runs the
// forward pass and returns the scalar loss.
inline std::vector<double> finite_diff_tensor(const std::function<double()>& f,
                                              const tsa::Tensor& x, double h) {
  std::vector<double> grad(x.size(), 0.0);
  auto& values = x.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double up = f();
    values[i] = original - h;
    const double down = f();
    values[i] = original;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Worst relative error between an analytic gradient and its FD estimate.
inline double worst_rel_err(const std::vector<double>& analytic,
                            const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

// Plain dense [M x K] * [K x N] with no library machinery.
inline std::vector<double> dense_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

}  // namespace oracles
