#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "vqafusion/tensor.hpp"

namespace vqaf {

// 1-D DFT with the e^{-2*pi*i*k*n/N} forward convention and a 1/N-scaled
// inverse. Smooth lengths go through recursive mixed-radix Cooley-Tukey
// (naive combine for prime radixes up to 61); lengths with a larger prime
// factor fall back to Bluestein's chirp-z algorithm on a power-of-two
// convolution. All internal arithmetic is double precision regardless of
// the tensor scalar type.

namespace fftdetail {

using cd = std::complex<double>;

// Full twiddle table for root size N: table[j] = exp(-2*pi*i*j/N).
// Shared and cached; transforms are called concurrently from sweeps.
inline std::shared_ptr<const std::vector<cd>> twiddle_table(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const std::vector<cd>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto table = std::make_shared<std::vector<cd>>(n);
  const double step = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j)
    (*table)[j] = std::polar(1.0, step * static_cast<double>(j));
  cache.emplace(n, table);
  return table;
}

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline std::size_t largest_prime_factor(std::size_t n) {
  std::size_t best = 1;
  for (std::size_t p = 2; p * p <= n; ++p)
    while (n % p == 0) {
      best = std::max(best, p);
      n /= p;
    }
  return std::max(best, n > 1 ? n : best);
}

// Iterative radix-2, in place; table must have size n.
inline void fft_pow2(cd* x, std::size_t n, const std::vector<cd>& table) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len >> 1, step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const cd w = table[step * j];
        const cd u = x[i + j];
        const cd v = x[i + j + half] * w;
        x[i + j] = u + v;
        x[i + j + half] = u - v;
      }
    }
  }
}

inline std::size_t smallest_factor(std::size_t n) {
  for (std::size_t p = 2; p * p <= n; ++p)
    if (n % p == 0) return p;
  return n;
}

// Recursive decimation-in-time for arbitrary factorizations.
// x is a strided view; out receives the contiguous length-n transform.
// table is the root-size table, indexed with table_stride = N_root/n.
inline void fft_rec(const cd* x, std::size_t n, std::size_t stride, cd* out,
                    const std::vector<cd>& table, std::size_t table_stride,
                    cd* scratch) {
  if (n == 1) {
    out[0] = x[0];
    return;
  }
  const std::size_t r = smallest_factor(n);
  if (r == n) {
    // prime length: naive DFT
    for (std::size_t k = 0; k < n; ++k) {
      cd acc{0.0, 0.0};
      for (std::size_t t = 0; t < n; ++t)
        acc += x[t * stride] * table[((k * t) % n) * table_stride];
      out[k] = acc;
    }
    return;
  }
  const std::size_t m = n / r;
  for (std::size_t p = 0; p < r; ++p)
    fft_rec(x + p * stride, m, stride * r, out + p * m, table,
            table_stride * r, scratch);
  // combine: X[q + s*m] = sum_p W_n^{p*(q+s*m)} Y_p[q]
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t s = 0; s < r; ++s) {
      const std::size_t k = q + s * m;
      cd acc{0.0, 0.0};
      for (std::size_t p = 0; p < r; ++p)
        acc += out[p * m + q] * table[((p * k) % n) * table_stride];
      scratch[k] = acc;
    }
  }
  std::copy(scratch, scratch + n, out);
}

struct BluesteinPlan {
  std::size_t conv_len = 0;
  std::vector<cd> chirp;     // exp(-i*pi*k^2/n), length n
  std::vector<cd> fft_b;     // FFT of the wrapped conjugate chirp, length M
  std::shared_ptr<const std::vector<cd>> table_m;
};

inline std::shared_ptr<const BluesteinPlan> bluestein_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  auto plan = std::make_shared<BluesteinPlan>();
  const std::size_t m = next_pow2(2 * n - 1);
  plan->conv_len = m;
  plan->table_m = twiddle_table(m);
  plan->chirp.resize(n);
  const double pi = 3.14159265358979323846;
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 reduced mod 2n keeps the sin/cos argument small and exact
    const std::size_t k2 = (k * k) % (2 * n);
    plan->chirp[k] =
        std::polar(1.0, -pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  plan->fft_b.assign(m, cd{0.0, 0.0});
  plan->fft_b[0] = cd{1.0, 0.0};
  for (std::size_t k = 1; k < n; ++k) {
    const cd b = std::conj(plan->chirp[k]);
    plan->fft_b[k] = b;
    plan->fft_b[m - k] = b;
  }
  fft_pow2(plan->fft_b.data(), m, *plan->table_m);
  cache.emplace(n, plan);
  return plan;
}

inline void bluestein(cd* x, std::size_t n) {
  const auto plan = bluestein_plan(n);
  const std::size_t m = plan->conv_len;
  std::vector<cd> a(m, cd{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * plan->chirp[k];
  fft_pow2(a.data(), m, *plan->table_m);
  for (std::size_t j = 0; j < m; ++j) a[j] *= plan->fft_b[j];
  // inverse length-m transform via the conjugation identity
  for (auto& v : a) v = std::conj(v);
  fft_pow2(a.data(), m, *plan->table_m);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = std::conj(a[k]) * inv_m * plan->chirp[k];
}

// In-place transform of a contiguous complex buffer.
inline void transform(cd* x, std::size_t n, bool inverse) {
  if (n <= 1) return;
  if (inverse) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::conj(x[i]);
    transform(x, n, false);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::conj(x[i]) * inv_n;
    return;
  }
  if (is_pow2(n)) {
    fft_pow2(x, n, *twiddle_table(n));
  } else if (largest_prime_factor(n) <= 61) {
    const auto table = twiddle_table(n);
    std::vector<cd> out(n), scratch(n);
    fft_rec(x, n, 1, out.data(), *table, 1, scratch.data());
    std::copy(out.begin(), out.end(), x);
  } else {
    bluestein(x, n);
  }
}

}  // namespace fftdetail

template <typename T>
ComplexTensor<T> fft(const Tensor<T>& a) {
  if (a.rank() != 1) throw DimensionError("fft expects a rank-1 tensor");
  const std::size_t n = a.size();
  std::vector<fftdetail::cd> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = fftdetail::cd(a[i], 0.0);
  fftdetail::transform(buf.data(), n, false);
  ComplexTensor<T> out(a.shape());
  for (std::size_t i = 0; i < n; ++i) {
    out.re[i] = static_cast<T>(buf[i].real());
    out.im[i] = static_cast<T>(buf[i].imag());
  }
  return out;
}

// Inverse transform; returns the real part. For conjugate-symmetric
// spectra the imaginary residue is at rounding level and is dropped.
template <typename T>
Tensor<T> ifft(const ComplexTensor<T>& a) {
  if (a.shape.size() != 1) throw DimensionError("ifft expects rank 1");
  const std::size_t n = a.size();
  std::vector<fftdetail::cd> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = fftdetail::cd(a.re[i], a.im[i]);
  fftdetail::transform(buf.data(), n, true);
  Tensor<T> out(a.shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(buf[i].real());
  return out;
}

}  // namespace vqaf
