#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "vqafusion/fft.hpp"

using namespace vqaf;

namespace {

// O(N^2) reference DFT
ComplexTensor<double> dft_naive(const Tensor<double>& x) {
  const std::size_t n = x.size();
  ComplexTensor<double> out(x.shape());
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0, 0};
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * 3.14159265358979323846 *
                           static_cast<double>(k) * static_cast<double>(t) /
                           static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out.re[k] = acc.real();
    out.im[k] = acc.imag();
  }
  return out;
}

// O(N^2) direct circular convolution
Tensor<double> circ_conv_naive(const Tensor<double>& a,
                               const Tensor<double>& b) {
  const std::size_t n = a.size();
  Tensor<double> out({n});
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0;
    for (std::size_t t = 0; t < n; ++t) acc += a[t] * b[(k + n - t) % n];
    out[k] = acc;
  }
  return out;
}

double spectrum_diff(const ComplexTensor<double>& a,
                     const ComplexTensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.re[i] - b.re[i]));
    m = std::max(m, std::abs(a.im[i] - b.im[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("fft of an impulse is flat") {
  ComplexTensor<double> s = fft(vec<double>({1, 0, 0, 0}));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s.re[i] == Catch::Approx(1.0).margin(1e-14));
    CHECK(s.im[i] == Catch::Approx(0.0).margin(1e-14));
  }
}

TEST_CASE("fft matches the direct DFT on assorted lengths") {
  // 101 exercises the chirp-z fallback; 14 and 39 the prime-radix leaves
  for (std::size_t n : {1u, 2u, 5u, 8u, 12u, 14u, 39u, 100u, 101u, 360u}) {
    Rng rng(n);
    Tensor<double> x = normal_tensor<double>({n}, rng);
    CHECK(spectrum_diff(fft(x), dft_naive(x)) < 1e-9);
  }
}

TEST_CASE("ifft inverts fft at N=16000") {
  Rng rng(99);
  Tensor<double> x = normal_tensor<double>({16000}, rng);
  Tensor<double> back = ifft(fft(x));
  CHECK(max_abs_diff(back, x) < 1e-9);
}

TEST_CASE("fft-based circular convolution matches the direct oracle") {
  Tensor<double> a = vec<double>({1, 2, 0, 0});
  Tensor<double> b = vec<double>({3, 4, 0, 0});
  ComplexTensor<double> fa = fft(a), fb = fft(b);
  ComplexTensor<double> prod(fa.shape);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::complex<double> v{fa.re[i], fa.im[i]};
    const std::complex<double> w{fb.re[i], fb.im[i]};
    const auto p = v * w;
    prod.re[i] = p.real();
    prod.im[i] = p.imag();
  }
  Tensor<double> conv = ifft(prod);
  const Tensor<double> expected = vec<double>({3, 10, 8, 0});
  CHECK(max_abs_diff(conv, expected) < 1e-12);
  CHECK(max_abs_diff(conv, circ_conv_naive(a, b)) < 1e-12);

  // random non-power-of-two length against the O(N^2) oracle
  Rng rng(4);
  Tensor<double> ra = normal_tensor<double>({30}, rng);
  Tensor<double> rb = normal_tensor<double>({30}, rng);
  ComplexTensor<double> fra = fft(ra), frb = fft(rb);
  ComplexTensor<double> rprod(fra.shape);
  for (std::size_t i = 0; i < 30; ++i) {
    const std::complex<double> v{fra.re[i], fra.im[i]};
    const std::complex<double> w{frb.re[i], frb.im[i]};
    const auto p = v * w;
    rprod.re[i] = p.real();
    rprod.im[i] = p.imag();
  }
  CHECK(max_abs_diff(ifft(rprod), circ_conv_naive(ra, rb)) < 1e-9);
}

TEST_CASE("fft linearity and Parseval at N in {4, 100, 16000}") {
  for (std::size_t n : {4u, 100u, 16000u}) {
    Rng rng(n + 1);
    Tensor<double> x = normal_tensor<double>({n}, rng);
    Tensor<double> y = normal_tensor<double>({n}, rng);
    Tensor<double> xy(x.shape());
    for (std::size_t i = 0; i < n; ++i) xy[i] = 2.0 * x[i] + 3.0 * y[i];

    ComplexTensor<double> fx = fft(x), fy = fft(y), fxy = fft(xy);
    double lin_err = 0, fx_norm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      lin_err = std::max(lin_err,
                         std::abs(fxy.re[i] - 2.0 * fx.re[i] - 3.0 * fy.re[i]));
      lin_err = std::max(lin_err,
                         std::abs(fxy.im[i] - 2.0 * fx.im[i] - 3.0 * fy.im[i]));
      fx_norm = std::max(fx_norm, std::abs(fxy.re[i]));
    }
    CHECK(lin_err / std::max(fx_norm, 1.0) < 1e-9);

    double time_energy = 0, freq_energy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      time_energy += x[i] * x[i];
      freq_energy += fx.re[i] * fx.re[i] + fx.im[i] * fx.im[i];
    }
    freq_energy /= static_cast<double>(n);
    CHECK(std::abs(time_energy - freq_energy) / time_energy < 1e-9);
  }
}
