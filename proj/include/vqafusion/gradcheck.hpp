#pragma once

#include <cmath>
#include <functional>

#include "vqafusion/tensor.hpp"

namespace vqaf {

// Central-difference gradient of a scalar-valued function, coordinate by
// coordinate: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
// f must be pure; it is evaluated 2*numel(x) times.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, const Tensor<T>& x, T eps) {
  if (!(eps > T{0})) throw ConfigError("finite_diff_grad: eps must be > 0");
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const double fp = static_cast<double>(f(probe));
    probe[i] = orig - eps;
    const double fm = static_cast<double>(f(probe));
    probe[i] = orig;
    grad[i] = static_cast<T>((fp - fm) / (2.0 * static_cast<double>(eps)));
  }
  return grad;
}

// ||a - b||_2 / (||a||_2 + ||b||_2), with an absolute floor so that
// near-zero gradient pairs compare cleanly.
template <typename T>
double grad_rel_err(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "grad_rel_err");
  double d2 = 0, a2 = 0, b2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i], db = b[i];
    d2 += (da - db) * (da - db);
    a2 += da * da;
    b2 += db * db;
  }
  const double denom = std::sqrt(a2) + std::sqrt(b2);
  if (denom < 1e-12) return std::sqrt(d2);
  return std::sqrt(d2) / denom;
}

}  // namespace vqaf
