#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vqafusion/fft.hpp"
#include "vqafusion/flops.hpp"
#include "vqafusion/rng.hpp"
#include "vqafusion/tensor.hpp"

namespace vqaf {

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

enum class FusionKind { Linear, CMLP, MCB, MLB, MFB, MFH, Mutan, Block };

inline const std::vector<FusionKind>& all_fusion_kinds() {
  static const std::vector<FusionKind> kinds = {
      FusionKind::Linear, FusionKind::CMLP, FusionKind::MCB,
      FusionKind::MLB,    FusionKind::MFB,  FusionKind::MFH,
      FusionKind::Mutan,  FusionKind::Block};
  return kinds;
}

inline std::string fusion_kind_name(FusionKind k) {
  switch (k) {
    case FusionKind::Linear: return "Linear";
    case FusionKind::CMLP: return "C-MLP";
    case FusionKind::MCB: return "MCB";
    case FusionKind::MLB: return "MLB";
    case FusionKind::MFB: return "MFB";
    case FusionKind::MFH: return "MFH";
    case FusionKind::Mutan: return "Mutan";
    case FusionKind::Block: return "Block";
  }
  return "?";
}

inline FusionKind parse_fusion_kind(const std::string& name) {
  for (FusionKind k : all_fusion_kinds())
    if (fusion_kind_name(k) == name) return k;
  if (name == "CMLP") return FusionKind::CMLP;  // accepted alias
  std::string valid;
  for (FusionKind k : all_fusion_kinds())
    valid += (valid.empty() ? "" : ", ") + fusion_kind_name(k);
  throw ConfigError("unknown fusion kind '" + name + "' (valid: " + valid +
                    ")");
}

// Kind-specific knobs. Zero means "use the documented default".
struct FusionHyper {
  std::size_t intermediate = 0;  // Linear projection width
  std::size_t hidden = 0;        // C-MLP hidden width
  std::size_t sketch_dim = 0;    // MCB joint embedding size D
  std::size_t d_z = 0;           // joint width for MLB/MFB/MFH/Mutan/Block
  std::size_t pool_k = 0;        // MFB/MFH pooling window
  std::size_t cascade_m = 0;     // MFH cascade length
  std::size_t rank = 0;          // Mutan/Block core rank
  std::size_t blocks_n = 0;      // Block chunk count
  std::size_t d_pv = 0;          // Mutan/Block projected visual width
  std::size_t d_pq = 0;          // Mutan/Block projected question width
  // signed sqrt + L2 after the spectral product; -1 = kind default (on
  // for MCB only). The operator definition itself leaves this open.
  int mcb_normalize = -1;
};

struct FusionSpec {
  FusionKind kind = FusionKind::MLB;
  std::size_t d_v = 1;
  std::size_t d_q = 1;
  // Final width for Linear/C-MLP (they project to the answer space
  // themselves). Bilinear kinds derive their output width from hyper.
  std::size_t d_out = 1;
  FusionHyper hyper;
  std::uint64_t seed = 1;
};

// First (total mod n) chunks get the ceiling size, the rest the floor.
inline std::vector<std::size_t> chunk_sizes(std::size_t total, std::size_t n) {
  if (n == 0 || n > total)
    throw ConfigError("chunk count " + std::to_string(n) +
                      " exceeds width " + std::to_string(total));
  std::vector<std::size_t> sizes(n, total / n);
  for (std::size_t i = 0; i < total % n; ++i) ++sizes[i];
  return sizes;
}

// Spec with every default applied; the single source of truth for shapes
// and counts.
struct ResolvedFusion {
  FusionKind kind;
  std::size_t d_v, d_q, d_out;
  std::size_t intermediate = 0;
  std::size_t hidden = 0;
  std::size_t sketch_dim = 0;
  bool mcb_normalize = false;
  std::size_t d_z = 0, pool_k = 0, cascade_m = 0, rank = 0, blocks_n = 0;
  std::size_t d_pv = 0, d_pq = 0;
  std::vector<std::size_t> chunks_v, chunks_q, chunks_z;
  std::size_t output_width = 0;
};

inline ResolvedFusion resolve_fusion(const FusionSpec& spec) {
  if (spec.d_v < 1 || spec.d_q < 1)
    throw ConfigError("fusion spec requires d_v, d_q >= 1");
  ResolvedFusion r;
  r.kind = spec.kind;
  r.d_v = spec.d_v;
  r.d_q = spec.d_q;
  r.d_out = spec.d_out;
  const FusionHyper& h = spec.hyper;
  auto pick = [](std::size_t v, std::size_t dflt) { return v ? v : dflt; };
  switch (spec.kind) {
    case FusionKind::Linear:
      if (spec.d_out < 1) throw ConfigError("Linear requires d_out >= 1");
      r.intermediate = pick(h.intermediate, 1000);
      r.output_width = r.d_out;
      break;
    case FusionKind::CMLP:
      if (spec.d_out < 1) throw ConfigError("C-MLP requires d_out >= 1");
      r.hidden = pick(h.hidden, 1600);
      r.output_width = r.d_out;
      break;
    case FusionKind::MCB:
      r.sketch_dim = pick(h.sketch_dim, 16000);
      r.mcb_normalize = h.mcb_normalize != 0;
      r.output_width = r.sketch_dim;
      r.d_out = r.sketch_dim;
      break;
    case FusionKind::MLB:
      r.d_z = pick(h.d_z, 1200);
      r.output_width = r.d_z;
      r.d_out = r.d_z;
      break;
    case FusionKind::MFB:
      r.d_z = pick(h.d_z, 1000);
      r.pool_k = pick(h.pool_k, 5);
      r.output_width = r.d_z;
      r.d_out = r.d_z;
      break;
    case FusionKind::MFH:
      r.d_z = pick(h.d_z, 1000);
      r.pool_k = pick(h.pool_k, 5);
      r.cascade_m = pick(h.cascade_m, 2);
      r.output_width = r.d_z * r.cascade_m;
      r.d_out = r.output_width;
      break;
    case FusionKind::Mutan:
      r.d_z = pick(h.d_z, 700);
      r.rank = pick(h.rank, 10);
      r.d_pv = pick(h.d_pv, 300);
      r.d_pq = pick(h.d_pq, 300);
      r.output_width = r.d_z;
      r.d_out = r.d_z;
      break;
    case FusionKind::Block:
      r.d_z = pick(h.d_z, 1600);
      r.rank = pick(h.rank, 15);
      r.blocks_n = pick(h.blocks_n, 18);
      r.d_pv = pick(h.d_pv, r.d_z);
      r.d_pq = pick(h.d_pq, r.d_z);
      r.chunks_v = chunk_sizes(r.d_pv, r.blocks_n);
      r.chunks_q = chunk_sizes(r.d_pq, r.blocks_n);
      r.chunks_z = chunk_sizes(r.d_z, r.blocks_n);
      r.output_width = r.d_z;
      r.d_out = r.d_z;
      break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Module
// ---------------------------------------------------------------------------

// Frozen count-sketch tables: bucket and sign per input coordinate.
// Sampled once at build time, never trained.
struct SketchTable {
  std::vector<std::uint32_t> h;
  std::vector<std::int8_t> s;
  bool empty() const { return h.empty(); }
};

template <typename T>
struct FusionModule {
  FusionSpec spec;
  ResolvedFusion resolved;
  // Trainable tensors, keyed by role. Iteration order (lexicographic) is
  // the serialization order; initialization order is fixed in build().
  std::map<std::string, Tensor<T>> params;
  SketchTable sketch_v, sketch_q;
  std::uint64_t build_id = 0;

  std::size_t output_width() const { return resolved.output_width; }

  std::uint64_t param_count() const {
    std::uint64_t total = 0;
    for (const auto& [name, t] : params) total += t.size();
    return total;
  }

  const Tensor<T>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
      throw ConfigError("no parameter named '" + name + "'");
    return it->second;
  }
  Tensor<T>& param(const std::string& name) {
    return const_cast<Tensor<T>&>(
        static_cast<const FusionModule*>(this)->param(name));
  }
};

namespace detail {

inline std::uint64_t next_build_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

// Uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], drawn in row-major order.
template <typename T>
Tensor<T> init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_tensor<T>(std::move(shape), rng, -bound, bound);
}

inline SketchTable make_sketch_table(std::size_t d, std::size_t dim,
                                     Rng& rng) {
  SketchTable t;
  t.h.resize(d);
  t.s.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    t.h[i] = static_cast<std::uint32_t>(rng.uniform_index(dim));
  for (std::size_t i = 0; i < d; ++i)
    t.s[i] = rng.uniform01() < 0.5 ? std::int8_t{-1} : std::int8_t{1};
  return t;
}

template <typename T>
void add_row_bias(Tensor<T>& a, const Tensor<T>& bias) {
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  if (bias.size() != cols) throw DimensionError("bias width mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = a.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += bias[j];
  }
}

template <typename T>
Tensor<T> col_sum(const Tensor<T>& a) {
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  Tensor<T> out({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[j] += a(r, j);
  return out;
}

// Adjoint of sum_pool_1d: replicate each pooled gradient across its window.
template <typename T>
Tensor<T> pool_upsample(const Tensor<T>& g, std::size_t k) {
  const std::size_t rows = g.extent(0), d = g.extent(1);
  Tensor<T> out({rows, d * k});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < k; ++t) out(r, j * k + t) = g(r, j);
  return out;
}

// Contiguous slice r of a [R, a, b] stack, viewed as an a x b matrix.
template <typename T>
Tensor<T> core_slice(const Tensor<T>& stack, std::size_t r) {
  const std::size_t a = stack.extent(1), b = stack.extent(2);
  Tensor<T> out({a, b});
  std::copy_n(stack.data() + r * a * b, a * b, out.data());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

template <typename T = double>
FusionModule<T> build(const FusionSpec& spec) {
  FusionModule<T> m;
  m.spec = spec;
  m.resolved = resolve_fusion(spec);
  m.build_id = detail::next_build_id();
  const ResolvedFusion& r = m.resolved;
  Rng rng(spec.seed);
  auto& p = m.params;

  switch (r.kind) {
    case FusionKind::Linear:
      p.emplace("W_v", detail::init_weight<T>({r.d_v, r.intermediate}, r.d_v,
                                              rng));
      p.emplace("W_q", detail::init_weight<T>({r.d_q, r.intermediate}, r.d_q,
                                              rng));
      p.emplace("W_o", detail::init_weight<T>({r.intermediate, r.d_out},
                                              r.intermediate, rng));
      p.emplace("b_v", zeros<T>({r.intermediate}));
      p.emplace("b_q", zeros<T>({r.intermediate}));
      p.emplace("b_o", zeros<T>({r.d_out}));
      break;
    case FusionKind::CMLP: {
      const std::size_t in = r.d_v + r.d_q;
      p.emplace("W1", detail::init_weight<T>({in, r.hidden}, in, rng));
      p.emplace("W2",
                detail::init_weight<T>({r.hidden, r.hidden}, r.hidden, rng));
      p.emplace("W3",
                detail::init_weight<T>({r.hidden, r.d_out}, r.hidden, rng));
      p.emplace("b1", zeros<T>({r.hidden}));
      p.emplace("b2", zeros<T>({r.hidden}));
      p.emplace("b3", zeros<T>({r.d_out}));
      break;
    }
    case FusionKind::MCB:
      m.sketch_v = detail::make_sketch_table(r.d_v, r.sketch_dim, rng);
      m.sketch_q = detail::make_sketch_table(r.d_q, r.sketch_dim, rng);
      break;
    case FusionKind::MLB:
      p.emplace("P_v", detail::init_weight<T>({r.d_v, r.d_z}, r.d_v, rng));
      p.emplace("P_q", detail::init_weight<T>({r.d_q, r.d_z}, r.d_q, rng));
      break;
    case FusionKind::MFB:
      p.emplace("P_v", detail::init_weight<T>({r.d_v, r.pool_k * r.d_z},
                                              r.d_v, rng));
      p.emplace("P_q", detail::init_weight<T>({r.d_q, r.pool_k * r.d_z},
                                              r.d_q, rng));
      break;
    case FusionKind::MFH:
      for (std::size_t i = 1; i <= r.cascade_m; ++i) {
        const std::string tag = "stage" + std::to_string(i);
        p.emplace(tag + ".P_v", detail::init_weight<T>(
                                    {r.d_v, r.pool_k * r.d_z}, r.d_v, rng));
        p.emplace(tag + ".P_q", detail::init_weight<T>(
                                    {r.d_q, r.pool_k * r.d_z}, r.d_q, rng));
      }
      break;
    case FusionKind::Mutan:
      p.emplace("F_v", detail::init_weight<T>({r.d_v, r.d_pv}, r.d_v, rng));
      p.emplace("F_q", detail::init_weight<T>({r.d_q, r.d_pq}, r.d_q, rng));
      p.emplace("core_v", detail::init_weight<T>({r.rank, r.d_pv, r.d_z},
                                                 r.d_pv, rng));
      p.emplace("core_q", detail::init_weight<T>({r.rank, r.d_pq, r.d_z},
                                                 r.d_pq, rng));
      break;
    case FusionKind::Block: {
      p.emplace("F_v", detail::init_weight<T>({r.d_v, r.d_pv}, r.d_v, rng));
      p.emplace("F_q", detail::init_weight<T>({r.d_q, r.d_pq}, r.d_q, rng));
      char name[32];
      for (std::size_t i = 0; i < r.blocks_n; ++i) {
        std::snprintf(name, sizeof(name), "block%02zu", i);
        p.emplace(std::string(name) + ".core_v",
                  detail::init_weight<T>({r.rank, r.chunks_v[i], r.chunks_z[i]},
                                         r.chunks_v[i], rng));
        p.emplace(std::string(name) + ".core_q",
                  detail::init_weight<T>({r.rank, r.chunks_q[i], r.chunks_z[i]},
                                         r.chunks_q[i], rng));
      }
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardCache {
  std::uint64_t build_id = 0;
  Tensor<T> v, q;
  std::map<std::string, Tensor<T>> t;  // intermediates by role
  ComplexTensor<T> spec_v, spec_q;     // MCB row spectra
};

namespace detail {

template <typename T>
Tensor<T> count_sketch(const Tensor<T>& x, const SketchTable& table,
                       std::size_t dim) {
  const std::size_t rows = x.extent(0), d = x.extent(1);
  Tensor<T> out({rows, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * d;
    T* o = out.data() + r * dim;
    for (std::size_t i = 0; i < d; ++i)
      o[table.h[i]] += static_cast<T>(table.s[i]) * in[i];
  }
  return out;
}

template <typename T>
Tensor<T> count_sketch_adjoint(const Tensor<T>& g, const SketchTable& table,
                               std::size_t d) {
  const std::size_t rows = g.extent(0), dim = g.extent(1);
  Tensor<T> out({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = g.data() + r * dim;
    T* o = out.data() + r * d;
    for (std::size_t i = 0; i < d; ++i)
      o[i] = static_cast<T>(table.s[i]) * in[table.h[i]];
  }
  return out;
}

template <typename T>
ComplexTensor<T> fft_rows(const Tensor<T>& a) {
  const std::size_t rows = a.extent(0), n = a.extent(1);
  ComplexTensor<T> out(a.shape());
  std::vector<fftdetail::cd> buf(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j)
      buf[j] = fftdetail::cd(a(r, j), 0.0);
    fftdetail::transform(buf.data(), n, false);
    for (std::size_t j = 0; j < n; ++j) {
      out.re[r * n + j] = static_cast<T>(buf[j].real());
      out.im[r * n + j] = static_cast<T>(buf[j].imag());
    }
  }
  return out;
}

// real part of the row-wise inverse transform of (a ⊙ b), with optional
// conjugation of b (the adjoint path correlates instead of convolving)
template <typename T>
Tensor<T> ifft_rows_product(const ComplexTensor<T>& a, const ComplexTensor<T>& b,
                            bool conjugate_b) {
  const std::size_t rows = a.shape[0], n = a.shape[1];
  Tensor<T> out({rows, n});
  std::vector<fftdetail::cd> buf(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = r * n + j;
      const fftdetail::cd av(a.re[k], a.im[k]);
      const fftdetail::cd bv(b.re[k], conjugate_b ? -b.im[k] : b.im[k]);
      buf[j] = av * bv;
    }
    fftdetail::transform(buf.data(), n, true);
    for (std::size_t j = 0; j < n; ++j)
      out(r, j) = static_cast<T>(buf[j].real());
  }
  return out;
}

// Row-wise x / ||x||; zero rows stay zero.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, Tensor<T>* norms_out) {
  const std::size_t rows = a.extent(0), n = a.extent(1);
  Tensor<T> out(a.shape());
  Tensor<T> norms({std::max<std::size_t>(rows, 1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double s2 = 0;
    for (std::size_t j = 0; j < n; ++j)
      s2 += static_cast<double>(a(r, j)) * a(r, j);
    const T norm = static_cast<T>(std::sqrt(s2));
    norms[r] = norm;
    if (norm > T{0})
      for (std::size_t j = 0; j < n; ++j) out(r, j) = a(r, j) / norm;
  }
  if (norms_out) *norms_out = norms;
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> forward(const FusionModule<T>& m, const Tensor<T>& v,
                  const Tensor<T>& q, ForwardCache<T>* cache = nullptr) {
  const ResolvedFusion& r = m.resolved;
  if (v.rank() != 2 || q.rank() != 2)
    throw DimensionError("fusion forward expects rank-2 [batch x width]");
  if (v.extent(0) != q.extent(0))
    throw DimensionError("fusion forward: batch sizes differ, " +
                         shape_str(v.shape()) + " vs " + shape_str(q.shape()));
  if (v.extent(1) != r.d_v || q.extent(1) != r.d_q)
    throw DimensionError("fusion forward: feature widths " +
                         shape_str(v.shape()) + "/" + shape_str(q.shape()) +
                         " do not match spec (" + std::to_string(r.d_v) + ", " +
                         std::to_string(r.d_q) + ")");
  if (cache) {
    cache->build_id = m.build_id;
    cache->v = v;
    cache->q = q;
    cache->t.clear();
  }
  auto keep = [&](const std::string& name, const Tensor<T>& t) {
    if (cache) cache->t.emplace(name, t);
  };

  switch (r.kind) {
    case FusionKind::Linear: {
      Tensor<T> s = matmul(v, m.param("W_v"));
      detail::add_row_bias(s, m.param("b_v"));
      Tensor<T> sq = matmul(q, m.param("W_q"));
      detail::add_row_bias(sq, m.param("b_q"));
      s = add(s, sq);
      keep("s", s);
      Tensor<T> out = matmul(s, m.param("W_o"));
      detail::add_row_bias(out, m.param("b_o"));
      return out;
    }
    case FusionKind::CMLP: {
      Tensor<T> x = concat_cols<T>({&v, &q});
      Tensor<T> h1 = matmul(x, m.param("W1"));
      detail::add_row_bias(h1, m.param("b1"));
      h1 = relu(h1);
      Tensor<T> h2 = matmul(h1, m.param("W2"));
      detail::add_row_bias(h2, m.param("b2"));
      h2 = relu(h2);
      keep("x", x);
      keep("h1", h1);
      keep("h2", h2);
      Tensor<T> out = matmul(h2, m.param("W3"));
      detail::add_row_bias(out, m.param("b3"));
      return out;
    }
    case FusionKind::MCB: {
      Tensor<T> vs = detail::count_sketch(v, m.sketch_v, r.sketch_dim);
      Tensor<T> qs = detail::count_sketch(q, m.sketch_q, r.sketch_dim);
      ComplexTensor<T> fv = detail::fft_rows(vs);
      ComplexTensor<T> fq = detail::fft_rows(qs);
      Tensor<T> y = detail::ifft_rows_product(fv, fq, false);
      if (cache) {
        cache->spec_v = fv;
        cache->spec_q = fq;
      }
      if (!r.mcb_normalize) return y;
      keep("y", y);
      Tensor<T> s = signed_sqrt(y);
      keep("s", s);
      Tensor<T> norms;
      Tensor<T> out = detail::l2_normalize_rows(s, &norms);
      keep("norms", norms);
      return out;
    }
    case FusionKind::MLB: {
      Tensor<T> a = matmul(v, m.param("P_v"));
      Tensor<T> b = matmul(q, m.param("P_q"));
      keep("a", a);
      keep("b", b);
      return mul(a, b);
    }
    case FusionKind::MFB: {
      Tensor<T> a = matmul(v, m.param("P_v"));
      Tensor<T> b = matmul(q, m.param("P_q"));
      keep("a", a);
      keep("b", b);
      return sum_pool_1d(mul(a, b), r.pool_k);
    }
    case FusionKind::MFH: {
      std::vector<Tensor<T>> pooled;
      Tensor<T> z_int;
      for (std::size_t i = 1; i <= r.cascade_m; ++i) {
        const std::string tag = "stage" + std::to_string(i);
        Tensor<T> a = matmul(v, m.param(tag + ".P_v"));
        Tensor<T> b = matmul(q, m.param(tag + ".P_q"));
        keep(tag + ".a", a);
        keep(tag + ".b", b);
        Tensor<T> h = mul(a, b);
        z_int = (i == 1) ? h : mul(z_int, h);
        keep(tag + ".z_int", z_int);
        pooled.push_back(sum_pool_1d(z_int, r.pool_k));
      }
      std::vector<const Tensor<T>*> parts;
      for (const auto& t : pooled) parts.push_back(&t);
      return concat_cols(parts);
    }
    case FusionKind::Mutan: {
      Tensor<T> vt = matmul(v, m.param("F_v"));
      Tensor<T> qt = matmul(q, m.param("F_q"));
      keep("vt", vt);
      keep("qt", qt);
      const Tensor<T>& cv = m.param("core_v");
      const Tensor<T>& cq = m.param("core_q");
      Tensor<T> out({v.extent(0), r.d_z});
      for (std::size_t rr = 0; rr < r.rank; ++rr) {
        Tensor<T> pv = matmul(vt, detail::core_slice(cv, rr));
        Tensor<T> pq = matmul(qt, detail::core_slice(cq, rr));
        keep("pv" + std::to_string(rr), pv);
        keep("pq" + std::to_string(rr), pq);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += pv[i] * pq[i];
      }
      return out;
    }
    case FusionKind::Block: {
      Tensor<T> vt = matmul(v, m.param("F_v"));
      Tensor<T> qt = matmul(q, m.param("F_q"));
      keep("vt", vt);
      keep("qt", qt);
      const std::size_t batch = v.extent(0);
      Tensor<T> out({batch, r.d_z});
      std::size_t ov = 0, oq = 0, oz = 0;
      char name[32];
      for (std::size_t i = 0; i < r.blocks_n; ++i) {
        std::snprintf(name, sizeof(name), "block%02zu", i);
        const Tensor<T>& cv = m.param(std::string(name) + ".core_v");
        const Tensor<T>& cq = m.param(std::string(name) + ".core_q");
        Tensor<T> vi = slice_cols(vt, ov, ov + r.chunks_v[i]);
        Tensor<T> qi = slice_cols(qt, oq, oq + r.chunks_q[i]);
        keep(std::string(name) + ".vi", vi);
        keep(std::string(name) + ".qi", qi);
        const std::size_t e = r.chunks_z[i];
        for (std::size_t rr = 0; rr < r.rank; ++rr) {
          Tensor<T> pv = matmul(vi, detail::core_slice(cv, rr));
          Tensor<T> pq = matmul(qi, detail::core_slice(cq, rr));
          keep(std::string(name) + ".pv" + std::to_string(rr), pv);
          keep(std::string(name) + ".pq" + std::to_string(rr), pq);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < e; ++j)
              out(b, oz + j) += pv(b, j) * pq(b, j);
        }
        ov += r.chunks_v[i];
        oq += r.chunks_q[i];
        oz += r.chunks_z[i];
      }
      return out;
    }
  }
  throw ConfigError("unknown fusion kind");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename T>
struct FusionGrads {
  Tensor<T> grad_v, grad_q;
  std::map<std::string, Tensor<T>> grad_params;
};

template <typename T>
FusionGrads<T> backward(const FusionModule<T>& m, const ForwardCache<T>& cache,
                        const Tensor<T>& grad_out) {
  if (cache.build_id != m.build_id)
    throw StateError("forward cache does not belong to this module build");
  const ResolvedFusion& r = m.resolved;
  if (grad_out.rank() != 2 || grad_out.extent(0) != cache.v.extent(0) ||
      grad_out.extent(1) != r.output_width)
    throw DimensionError("backward: grad_out shape " +
                         shape_str(grad_out.shape()) + " does not match " +
                         "output [B x " + std::to_string(r.output_width) +
                         "]");
  FusionGrads<T> g;
  auto saved = [&](const std::string& name) -> const Tensor<T>& {
    auto it = cache.t.find(name);
    if (it == cache.t.end())
      throw StateError("cache is missing intermediate '" + name + "'");
    return it->second;
  };
  const Tensor<T>&v = cache.v, &q = cache.q;

  switch (r.kind) {
    case FusionKind::Linear: {
      const Tensor<T>& s = saved("s");
      g.grad_params["W_o"] = matmul_tn(s, grad_out);
      g.grad_params["b_o"] = detail::col_sum(grad_out);
      Tensor<T> ds = matmul_nt(grad_out, m.param("W_o"));
      g.grad_params["W_v"] = matmul_tn(v, ds);
      g.grad_params["W_q"] = matmul_tn(q, ds);
      g.grad_params["b_v"] = detail::col_sum(ds);
      g.grad_params["b_q"] = detail::col_sum(ds);
      g.grad_v = matmul_nt(ds, m.param("W_v"));
      g.grad_q = matmul_nt(ds, m.param("W_q"));
      return g;
    }
    case FusionKind::CMLP: {
      const Tensor<T>&x = saved("x"), &h1 = saved("h1"), &h2 = saved("h2");
      g.grad_params["W3"] = matmul_tn(h2, grad_out);
      g.grad_params["b3"] = detail::col_sum(grad_out);
      Tensor<T> dh2 = matmul_nt(grad_out, m.param("W3"));
      for (std::size_t i = 0; i < dh2.size(); ++i)
        if (h2[i] <= T{0}) dh2[i] = T{0};
      g.grad_params["W2"] = matmul_tn(h1, dh2);
      g.grad_params["b2"] = detail::col_sum(dh2);
      Tensor<T> dh1 = matmul_nt(dh2, m.param("W2"));
      for (std::size_t i = 0; i < dh1.size(); ++i)
        if (h1[i] <= T{0}) dh1[i] = T{0};
      g.grad_params["W1"] = matmul_tn(x, dh1);
      g.grad_params["b1"] = detail::col_sum(dh1);
      Tensor<T> dx = matmul_nt(dh1, m.param("W1"));
      g.grad_v = slice_cols(dx, 0, r.d_v);
      g.grad_q = slice_cols(dx, r.d_v, r.d_v + r.d_q);
      return g;
    }
    case FusionKind::MCB: {
      Tensor<T> dy = grad_out;
      if (r.mcb_normalize) {
        const Tensor<T>&y = saved("y"), &s = saved("s"),
                       &norms = saved("norms");
        const std::size_t rows = s.extent(0), n = s.extent(1);
        Tensor<T> ds(s.shape());
        for (std::size_t row = 0; row < rows; ++row) {
          const T norm = norms[row];
          if (norm == T{0}) continue;
          double dot = 0;
          for (std::size_t j = 0; j < n; ++j)
            dot += static_cast<double>(grad_out(row, j)) * s(row, j);
          const double n2 = static_cast<double>(norm) * norm;
          for (std::size_t j = 0; j < n; ++j)
            ds(row, j) = static_cast<T>(
                (grad_out(row, j) - s(row, j) * (dot / n2)) / norm);
        }
        dy = Tensor<T>(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) {
          const T ay = std::abs(y[i]);
          dy[i] = ay > T{0}
                      ? static_cast<T>(ds[i] / (2 * std::sqrt(ay)))
                      : T{0};
        }
      }
      ComplexTensor<T> fd = detail::fft_rows(dy);
      // spectral product is bilinear: correlate against the other spectrum
      Tensor<T> dvs = detail::ifft_rows_product(fd, cache.spec_q, true);
      Tensor<T> dqs = detail::ifft_rows_product(fd, cache.spec_v, true);
      g.grad_v = detail::count_sketch_adjoint(dvs, m.sketch_v, r.d_v);
      g.grad_q = detail::count_sketch_adjoint(dqs, m.sketch_q, r.d_q);
      return g;
    }
    case FusionKind::MLB: {
      const Tensor<T>&a = saved("a"), &b = saved("b");
      Tensor<T> da = mul(grad_out, b);
      Tensor<T> db = mul(grad_out, a);
      g.grad_params["P_v"] = matmul_tn(v, da);
      g.grad_params["P_q"] = matmul_tn(q, db);
      g.grad_v = matmul_nt(da, m.param("P_v"));
      g.grad_q = matmul_nt(db, m.param("P_q"));
      return g;
    }
    case FusionKind::MFB: {
      const Tensor<T>&a = saved("a"), &b = saved("b");
      Tensor<T> de = detail::pool_upsample(grad_out, r.pool_k);
      Tensor<T> da = mul(de, b);
      Tensor<T> db = mul(de, a);
      g.grad_params["P_v"] = matmul_tn(v, da);
      g.grad_params["P_q"] = matmul_tn(q, db);
      g.grad_v = matmul_nt(da, m.param("P_v"));
      g.grad_q = matmul_nt(db, m.param("P_q"));
      return g;
    }
    case FusionKind::MFH: {
      const std::size_t mstages = r.cascade_m;
      const std::size_t batch = v.extent(0);
      g.grad_v = zeros<T>({batch, r.d_v});
      g.grad_q = zeros<T>({batch, r.d_q});
      // accumulated gradient flowing into z_int^i
      Tensor<T> dz_int = zeros<T>({batch, r.pool_k * r.d_z});
      for (std::size_t i = mstages; i >= 1; --i) {
        const std::string tag = "stage" + std::to_string(i);
        Tensor<T> slice = slice_cols(grad_out, (i - 1) * r.d_z, i * r.d_z);
        dz_int = add(dz_int, detail::pool_upsample(slice, r.pool_k));
        const Tensor<T>&a = saved(tag + ".a"), &b = saved(tag + ".b");
        Tensor<T> dh = dz_int;
        if (i > 1) {
          const Tensor<T>& z_prev =
              saved("stage" + std::to_string(i - 1) + ".z_int");
          dh = mul(dz_int, z_prev);
          Tensor<T> h = mul(a, b);
          dz_int = mul(dz_int, h);  // flows into z_int^{i-1}
        }
        Tensor<T> da = mul(dh, b);
        Tensor<T> db = mul(dh, a);
        g.grad_params[tag + ".P_v"] = matmul_tn(v, da);
        g.grad_params[tag + ".P_q"] = matmul_tn(q, db);
        g.grad_v = add(g.grad_v, matmul_nt(da, m.param(tag + ".P_v")));
        g.grad_q = add(g.grad_q, matmul_nt(db, m.param(tag + ".P_q")));
        if (i == 1) break;
      }
      return g;
    }
    case FusionKind::Mutan: {
      const Tensor<T>&vt = saved("vt"), &qt = saved("qt");
      const Tensor<T>& cv = m.param("core_v");
      const Tensor<T>& cq = m.param("core_q");
      const std::size_t batch = v.extent(0);
      Tensor<T> dvt = zeros<T>({batch, r.d_pv});
      Tensor<T> dqt = zeros<T>({batch, r.d_pq});
      Tensor<T> dcv(cv.shape()), dcq(cq.shape());
      for (std::size_t rr = 0; rr < r.rank; ++rr) {
        const Tensor<T>& pv = saved("pv" + std::to_string(rr));
        const Tensor<T>& pq = saved("pq" + std::to_string(rr));
        Tensor<T> dpv = mul(grad_out, pq);
        Tensor<T> dpq = mul(grad_out, pv);
        Tensor<T> av = detail::core_slice(cv, rr);
        Tensor<T> aq = detail::core_slice(cq, rr);
        dvt = add(dvt, matmul_nt(dpv, av));
        dqt = add(dqt, matmul_nt(dpq, aq));
        Tensor<T> gav = matmul_tn(vt, dpv);
        Tensor<T> gaq = matmul_tn(qt, dpq);
        std::copy_n(gav.data(), gav.size(),
                    dcv.data() + rr * r.d_pv * r.d_z);
        std::copy_n(gaq.data(), gaq.size(),
                    dcq.data() + rr * r.d_pq * r.d_z);
      }
      g.grad_params["core_v"] = std::move(dcv);
      g.grad_params["core_q"] = std::move(dcq);
      g.grad_params["F_v"] = matmul_tn(v, dvt);
      g.grad_params["F_q"] = matmul_tn(q, dqt);
      g.grad_v = matmul_nt(dvt, m.param("F_v"));
      g.grad_q = matmul_nt(dqt, m.param("F_q"));
      return g;
    }
    case FusionKind::Block: {
      const Tensor<T>&vt = saved("vt"), &qt = saved("qt");
      const std::size_t batch = v.extent(0);
      Tensor<T> dvt = zeros<T>({batch, r.d_pv});
      Tensor<T> dqt = zeros<T>({batch, r.d_pq});
      std::size_t ov = 0, oq = 0, oz = 0;
      char name[32];
      for (std::size_t i = 0; i < r.blocks_n; ++i) {
        std::snprintf(name, sizeof(name), "block%02zu", i);
        const std::string tag(name);
        const Tensor<T>& cv = m.param(tag + ".core_v");
        const Tensor<T>& cq = m.param(tag + ".core_q");
        const Tensor<T>&vi = saved(tag + ".vi"), &qi = saved(tag + ".qi");
        const std::size_t cw = r.chunks_v[i], dw = r.chunks_q[i],
                          e = r.chunks_z[i];
        Tensor<T> dout_i = slice_cols(grad_out, oz, oz + e);
        Tensor<T> dcv(cv.shape()), dcq(cq.shape());
        Tensor<T> dvi = zeros<T>({batch, cw});
        Tensor<T> dqi = zeros<T>({batch, dw});
        for (std::size_t rr = 0; rr < r.rank; ++rr) {
          const Tensor<T>& pv = saved(tag + ".pv" + std::to_string(rr));
          const Tensor<T>& pq = saved(tag + ".pq" + std::to_string(rr));
          Tensor<T> dpv = mul(dout_i, pq);
          Tensor<T> dpq = mul(dout_i, pv);
          dvi = add(dvi, matmul_nt(dpv, detail::core_slice(cv, rr)));
          dqi = add(dqi, matmul_nt(dpq, detail::core_slice(cq, rr)));
          Tensor<T> gav = matmul_tn(vi, dpv);
          Tensor<T> gaq = matmul_tn(qi, dpq);
          std::copy_n(gav.data(), gav.size(), dcv.data() + rr * cw * e);
          std::copy_n(gaq.data(), gaq.size(), dcq.data() + rr * dw * e);
        }
        g.grad_params[tag + ".core_v"] = std::move(dcv);
        g.grad_params[tag + ".core_q"] = std::move(dcq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < cw; ++j) dvt(b, ov + j) += dvi(b, j);
          for (std::size_t j = 0; j < dw; ++j) dqt(b, oq + j) += dqi(b, j);
        }
        ov += cw;
        oq += dw;
        oz += e;
      }
      g.grad_params["F_v"] = matmul_tn(v, dvt);
      g.grad_params["F_q"] = matmul_tn(q, dqt);
      g.grad_v = matmul_nt(dvt, m.param("F_v"));
      g.grad_q = matmul_nt(dqt, m.param("F_q"));
      return g;
    }
  }
  throw ConfigError("unknown fusion kind");
}

// ---------------------------------------------------------------------------
// complexity of the fusion stage, per sample
// ---------------------------------------------------------------------------

inline std::uint64_t fusion_flops(const ResolvedFusion& r,
                                  const FlopConvention& c) {
  switch (r.kind) {
    case FusionKind::Linear:
      return c.matmul(1, r.d_v, r.intermediate) + c.bias(r.intermediate) +
             c.matmul(1, r.d_q, r.intermediate) + c.bias(r.intermediate) +
             c.elementwise(r.intermediate) +
             c.matmul(1, r.intermediate, r.d_out) + c.bias(r.d_out);
    case FusionKind::CMLP: {
      const std::size_t in = r.d_v + r.d_q;
      return c.matmul(1, in, r.hidden) + c.bias(r.hidden) +
             c.elementwise(r.hidden) + c.matmul(1, r.hidden, r.hidden) +
             c.bias(r.hidden) + c.elementwise(r.hidden) +
             c.matmul(1, r.hidden, r.d_out) + c.bias(r.d_out);
    }
    case FusionKind::MCB: {
      std::uint64_t f = c.sketch(r.d_v) + c.sketch(r.d_q) +
                        3 * c.fft(r.sketch_dim) + c.complex_mul(r.sketch_dim);
      if (r.mcb_normalize)
        f += c.transcendental(r.sketch_dim) + c.l2_normalize(r.sketch_dim);
      return f;
    }
    case FusionKind::MLB:
      return c.matmul(1, r.d_v, r.d_z) + c.matmul(1, r.d_q, r.d_z) +
             c.elementwise(r.d_z);
    case FusionKind::MFB: {
      const std::size_t w = r.pool_k * r.d_z;
      return c.matmul(1, r.d_v, w) + c.matmul(1, r.d_q, w) + c.elementwise(w) +
             c.sum_pool(r.d_z, r.pool_k);
    }
    case FusionKind::MFH: {
      const std::size_t w = r.pool_k * r.d_z;
      std::uint64_t f = 0;
      for (std::size_t i = 1; i <= r.cascade_m; ++i) {
        f += c.matmul(1, r.d_v, w) + c.matmul(1, r.d_q, w) + c.elementwise(w) +
             c.sum_pool(r.d_z, r.pool_k);
        if (i > 1) f += c.elementwise(w);  // product with the previous stage
      }
      return f;
    }
    case FusionKind::Mutan:
      return c.matmul(1, r.d_v, r.d_pv) + c.matmul(1, r.d_q, r.d_pq) +
             r.rank * (c.matmul(1, r.d_pv, r.d_z) + c.matmul(1, r.d_pq, r.d_z) +
                       2 * c.elementwise(r.d_z));
    case FusionKind::Block: {
      std::uint64_t f =
          c.matmul(1, r.d_v, r.d_pv) + c.matmul(1, r.d_q, r.d_pq);
      for (std::size_t i = 0; i < r.blocks_n; ++i)
        f += r.rank * (c.matmul(1, r.chunks_v[i], r.chunks_z[i]) +
                       c.matmul(1, r.chunks_q[i], r.chunks_z[i]) +
                       2 * c.elementwise(r.chunks_z[i]));
      return f;
    }
  }
  throw ConfigError("unknown fusion kind");
}

template <typename T>
std::uint64_t flop_count(const FusionModule<T>& m, const FlopConvention& c,
                         std::uint64_t batch = 1) {
  return batch * fusion_flops(m.resolved, c);
}

}  // namespace vqaf
