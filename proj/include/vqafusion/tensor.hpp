#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "vqafusion/errors.hpp"
#include "vqafusion/rng.hpp"

namespace vqaf {

using Shape = std::vector<std::size_t>;

template <typename T>
const char* dtype_name() {
  static_assert(std::is_floating_point_v<T>);
  return sizeof(T) == 8 ? "f64" : "f32";
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

// Row-major flatten of a multi-index.
inline std::size_t row_major_offset(const Shape& shape,
                                    const std::vector<std::size_t>& idx) {
  std::size_t off = 0;
  for (std::size_t d = 0; d < shape.size(); ++d) off = off * shape[d] + idx[d];
  return off;
}

inline std::vector<std::size_t> row_major_unflatten(const Shape& shape,
                                                    std::size_t off) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t d = shape.size(); d-- > 0;) {
    idx[d] = off % shape[d];
    off /= shape[d];
  }
  return idx;
}

// Dense n-dimensional array, row-major, value semantics. Extent 0 is
// permitted so that empty batches (B = 0) stay representable.
template <typename T>
class Tensor {
 public:
  static_assert(std::is_floating_point_v<T>);

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}) {
    if (shape_.empty()) throw DimensionError("tensor rank must be >= 1");
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw DimensionError("tensor rank must be >= 1");
    if (shape_numel(shape_) != data_.size())
      throw DimensionError("data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t d) const { return shape_[d]; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  T& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  T& at(const std::vector<std::size_t>& idx) {
    return data_[row_major_offset(shape_, idx)];
  }
  const T& at(const std::vector<std::size_t>& idx) const {
    return data_[row_major_offset(shape_, idx)];
  }

  // Same data, new shape; element count must match.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                           shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Complex-valued counterpart used by the spectral pathway. Real and
// imaginary parts are stored as separate buffers of equal length.
template <typename T>
struct ComplexTensor {
  Shape shape;
  std::vector<T> re, im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape s)
      : shape(std::move(s)),
        re(shape_numel(shape), T{0}),
        im(shape_numel(shape), T{0}) {}

  std::size_t size() const { return re.size(); }
};

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations. Binary ops require exact shape equality; there is
// no broadcasting anywhere in this library, tiling is always explicit.
// ---------------------------------------------------------------------------

enum class EwOp { Add, Mul, Tanh, Sigmoid, Relu, SignedSqrt };

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = T{1} / (T{1} + std::exp(-a[i]));
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > T{0} ? a[i] : T{0};
  return out;
}

// signed_sqrt(x) = sign(x) * sqrt(|x|)
template <typename T>
Tensor<T> signed_sqrt(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    T v = std::sqrt(std::abs(a[i]));
    out[i] = a[i] < T{0} ? -v : v;
  }
  return out;
}

template <typename T>
Tensor<T> elementwise(EwOp op, const Tensor<T>& a,
                      const Tensor<T>* b = nullptr) {
  switch (op) {
    case EwOp::Add:
      if (!b) throw DimensionError("add requires two operands");
      return add(a, *b);
    case EwOp::Mul:
      if (!b) throw DimensionError("mul requires two operands");
      return mul(a, *b);
    case EwOp::Tanh:
      return tanh(a);
    case EwOp::Sigmoid:
      return sigmoid(a);
    case EwOp::Relu:
      return relu(a);
    case EwOp::SignedSqrt:
      return signed_sqrt(a);
  }
  throw ConfigError("unknown elementwise op");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

template <typename T>
T sum(const Tensor<T>& a) {
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

// ---------------------------------------------------------------------------
// matmul: c[i,j] = sum_k a[i,k] * b[k,j]
//
// Row tiles are sized so the running output block stays cache-resident;
// the inner j loop is contiguous and vectorizes.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul requires rank-2 tensors, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.extent(1) != b.extent(0))
    throw DimensionError("matmul: inner extents differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  if (m == 0 || n == 0 || k == 0) return c;

  const std::size_t tile =
      std::clamp<std::size_t>((1u << 19) / (n * sizeof(T) + 1), 4, 128);
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  for (std::size_t i0 = 0; i0 < m; i0 += tile) {
    const std::size_t i1 = std::min(i0 + tile, m);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* brow = pb + kk * n;
      for (std::size_t i = i0; i < i1; ++i) {
        const T aik = pa[i * k + kk];
        T* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  return c;
}

// c = a^T * b for a[k x m], b[k x n]. Used by backward passes.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0))
    throw DimensionError("matmul_tn: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* brow = b.data() + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aik = a(kk, i);
      T* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// c = a * b^T for a[m x k], b[n x k]. Used by backward passes.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
    throw DimensionError("matmul_nt: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc{0};
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c(i, j) = acc;
    }
  }
  return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose2d requires rank 2");
  Tensor<T> out({a.extent(1), a.extent(0)});
  for (std::size_t i = 0; i < a.extent(0); ++i)
    for (std::size_t j = 0; j < a.extent(1); ++j) out(j, i) = a(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// softmax along one axis, max-subtracted for stability. NaN inputs propagate.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank())
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(a.rank()));
  const std::size_t len = a.extent(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.extent(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.extent(d);

  Tensor<T> out(a.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = a[base];
      for (std::size_t t = 1; t < len; ++t)
        mx = std::max(mx, a[base + t * inner]);
      T denom{0};
      for (std::size_t t = 0; t < len; ++t) {
        T e = std::exp(a[base + t * inner] - mx);
        out[base + t * inner] = e;
        denom += e;
      }
      for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= denom;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// sum_pool_1d: non-overlapping windows of size k over the last axis.
// out[..., j] = sum_{t<k} a[..., j*k + t]
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_pool_1d(const Tensor<T>& a, std::size_t k) {
  if (k == 0) throw DimensionError("sum_pool_1d: window must be >= 1");
  const std::size_t last = a.extent(a.rank() - 1);
  if (last % k != 0)
    throw DimensionError("sum_pool_1d: last extent " + std::to_string(last) +
                         " not divisible by window " + std::to_string(k));
  Shape out_shape = a.shape();
  out_shape.back() = last / k;
  Tensor<T> out(out_shape);
  const std::size_t rows = a.size() / std::max<std::size_t>(last, 1);
  const std::size_t d = last / k;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = a.data() + r * last;
    T* o = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      T acc{0};
      for (std::size_t t = 0; t < k; ++t) acc += in[j * k + t];
      o[j] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction helpers.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>(std::move(shape));
}

// 1-D literal, e.g. vec<double>({1, 2, 3})
template <typename T>
Tensor<T> vec(std::initializer_list<T> values) {
  return Tensor<T>(Shape{values.size()}, std::vector<T>(values));
}

template <typename T>
Tensor<T> full(Shape shape, T v) {
  Tensor<T> t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

template <typename T>
Tensor<T> identity(std::size_t n) {
  Tensor<T> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
  return t;
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.normal());
  return t;
}

// Concatenate rank-2 tensors along columns; all parts share the row count.
template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0]->extent(0);
  std::size_t cols = 0;
  for (const auto* p : parts) {
    if (p->rank() != 2 || p->extent(0) != rows)
      throw DimensionError("concat_cols: row mismatch");
    cols += p->extent(1);
  }
  Tensor<T> out({rows, cols});
  std::size_t off = 0;
  for (const auto* p : parts) {
    const std::size_t w = p->extent(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p->data() + r * w, w, out.data() + r * cols + off);
    off += w;
  }
  return out;
}

// Column slice [from, to) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t from, std::size_t to) {
  if (a.rank() != 2 || to > a.extent(1) || from > to)
    throw DimensionError("slice_cols: bad range");
  const std::size_t rows = a.extent(0), cols = a.extent(1), w = to - from;
  Tensor<T> out({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.data() + r * cols + from, w, out.data() + r * w);
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "max_abs_diff");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace vqaf
