#pragma once

// Dense tensor kernels: convolution (1-D direct, 2-D im2col + GEMM), activations,
// pooling, nearest upsampling and the two combine operations, each with its
// reverse-mode gradient.
//
// Layout is channel-first without a batch axis: 1-D tensors are [C, L], 2-D
// tensors are [C, H, W]. Convolution is cross-correlation with zero padding.
// Every output element accumulates bias first, then input channels in
// ascending order, then kernel taps in ascending (row-major) order.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "eegdn/error.hpp"
#include "eegdn/tensor.hpp"

namespace eegdn {

struct ConvGeometry {
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t spatial_rank() const noexcept { return kernel.size(); }

  /// Kernel `k` with pad = floor(k/2), stride 1. Only defined for odd k.
  static ConvGeometry same(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    if (k % 2 == 0) throw GeometryError("'same' padding requires an odd kernel, got " + std::to_string(k));
    return ConvGeometry{{k}, {1}, {k / 2}, in_ch, out_ch};
  }

  void validate() const {
    const auto r = kernel.size();
    if (r < 1 || r > 2 || stride.size() != r || padding.size() != r) {
      throw GeometryError("conv geometry needs 1 or 2 spatial axes with matching kernel/stride/padding");
    }
    for (std::size_t a = 0; a < r; ++a) {
      if (kernel[a] < 1) throw GeometryError("kernel size must be >= 1 on spatial axis " + std::to_string(a));
      if (stride[a] < 1) throw GeometryError("stride must be >= 1 on spatial axis " + std::to_string(a));
    }
    if (in_channels < 1 || out_channels < 1) throw GeometryError("channel counts must be positive");
  }

  /// floor((L + 2 pad - K) / stride) + 1, or GeometryError when that is < 1.
  std::size_t out_length(std::size_t axis, std::size_t length) const {
    const auto padded = length + 2 * padding[axis];
    if (padded < kernel[axis]) {
      throw GeometryError("kernel " + std::to_string(kernel[axis]) + " exceeds padded length " +
                          std::to_string(padded) + " on spatial axis " + std::to_string(axis));
    }
    return (padded - kernel[axis]) / stride[axis] + 1;
  }
};

enum class ActivationKind { relu, linear };
enum class PoolKind { max, avg };
enum class CombineKind { add, concat_channels };

template <class T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

namespace detail {

#if defined(__AVX__)
inline constexpr std::size_t kVecBytes = 32;
#else
inline constexpr std::size_t kVecBytes = 16;
#endif

template <class T>
inline constexpr bool kVectorizable = std::is_same_v<T, float> || std::is_same_v<T, double>;

template <class T>
struct Vec {
  typedef T type __attribute__((vector_size(kVecBytes)));
  static constexpr std::size_t lanes = kVecBytes / sizeof(T);
};

template <class V, class T>
inline V vload(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}
template <class V, class T>
inline void vstore(T* p, const V& v) {
  std::memcpy(p, &v, sizeof(V));
}

template <class T, std::size_t NO, std::size_t NV>
inline void nn_tile(T* const* out, std::size_t j0, const T* w, std::size_t ws, const T* const* rows,
                    std::size_t n_rows) {
  using V = typename Vec<T>::type;
  constexpr std::size_t L = Vec<T>::lanes;
  V acc[NO][NV];
#pragma GCC unroll 16
  for (std::size_t o = 0; o < NO; ++o) {
#pragma GCC unroll 16
    for (std::size_t v = 0; v < NV; ++v) acc[o][v] = vload<V>(out[o] + j0 + v * L);
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    const T* src = rows[r] + j0;
    V x[NV];
#pragma GCC unroll 16
    for (std::size_t v = 0; v < NV; ++v) x[v] = vload<V>(src + v * L);
#pragma GCC unroll 16
    for (std::size_t o = 0; o < NO; ++o) {
      const T wr = w[o * ws + r];
#pragma GCC unroll 16
      for (std::size_t v = 0; v < NV; ++v) acc[o][v] += wr * x[v];
    }
  }
#pragma GCC unroll 16
  for (std::size_t o = 0; o < NO; ++o) {
#pragma GCC unroll 16
    for (std::size_t v = 0; v < NV; ++v) vstore(out[o] + j0 + v * L, acc[o][v]);
  }
}

template <class T, std::size_t NO>
inline void nn_block(T* const* out, std::size_t n, const T* w, std::size_t ws, const T* const* rows,
                     std::size_t n_rows) {
  std::size_t j = 0;
  if constexpr (kVectorizable<T>) {
    constexpr std::size_t L = Vec<T>::lanes;
    constexpr std::size_t NV = 3;
    for (; j + NV * L <= n; j += NV * L) nn_tile<T, NO, NV>(out, j, w, ws, rows, n_rows);
    for (; j + L <= n; j += L) nn_tile<T, NO, 1>(out, j, w, ws, rows, n_rows);
  }
  for (; j < n; ++j) {
    for (std::size_t o = 0; o < NO; ++o) {
      T a = out[o][j];
      for (std::size_t r = 0; r < n_rows; ++r) a += w[o * ws + r] * rows[r][j];
      out[o][j] = a;
    }
  }
}

/// out[o][j] += sum_r w[o * ws + r] * rows[r][j] for o < n_out, j < n. Every
/// element sums its terms in ascending r, independent of the tiling.
template <class T>
void gemm_nn(T* const* out, std::size_t n_out, std::size_t n, const T* w, std::size_t ws, const T* const* rows,
             std::size_t n_rows) {
  constexpr std::size_t NO = 4;
  std::size_t o = 0;
  for (; o + NO <= n_out; o += NO) nn_block<T, NO>(out + o, n, w + o * ws, ws, rows, n_rows);
  for (; o < n_out; ++o) nn_block<T, 1>(out + o, n, w + o * ws, ws, rows, n_rows);
}

template <class T, std::size_t NA, std::size_t NB>
inline void nt_tile(T* out, std::size_t os, const T* const* a, const T* const* b, std::size_t n) {
  if constexpr (!kVectorizable<T>) {
    for (std::size_t p = 0; p < NA; ++p) {
      for (std::size_t q = 0; q < NB; ++q) {
        T s = 0;
        for (std::size_t j = 0; j < n; ++j) s += a[p][j] * b[q][j];
        out[p * os + q] = s;
      }
    }
    return;
  } else {
  using V = typename Vec<T>::type;
  constexpr std::size_t L = Vec<T>::lanes;
  V acc[NA][NB] = {};
  std::size_t j = 0;
  for (; j + L <= n; j += L) {
    V xb[NB];
#pragma GCC unroll 16
    for (std::size_t q = 0; q < NB; ++q) xb[q] = vload<V>(b[q] + j);
#pragma GCC unroll 16
    for (std::size_t p = 0; p < NA; ++p) {
      const V xa = vload<V>(a[p] + j);
#pragma GCC unroll 16
      for (std::size_t q = 0; q < NB; ++q) acc[p][q] += xa * xb[q];
    }
  }
  for (std::size_t p = 0; p < NA; ++p) {
    for (std::size_t q = 0; q < NB; ++q) {
      T s = 0;
      for (std::size_t l = 0; l < L; ++l) s += acc[p][q][l];
      for (std::size_t jj = j; jj < n; ++jj) s += a[p][jj] * b[q][jj];
      out[p * os + q] = s;
    }
  }
  }
}

template <class T, std::size_t NA>
inline void nt_block(T* out, std::size_t os, const T* const* a, const T* const* b, std::size_t n_b, std::size_t n) {
  constexpr std::size_t NB = 3;
  std::size_t q = 0;
  for (; q + NB <= n_b; q += NB) nt_tile<T, NA, NB>(out + q, os, a, b + q, n);
  for (; q < n_b; ++q) nt_tile<T, NA, 1>(out + q, os, a, b + q, n);
}

/// out[p * os + q] = sum_j a[p][j] * b[q][j]: lane-wise partial sums over j,
/// then lanes in ascending order, then the scalar tail.
template <class T>
void gemm_nt(T* out, std::size_t os, const T* const* a, std::size_t n_a, const T* const* b, std::size_t n_b,
             std::size_t n) {
  constexpr std::size_t NA = 4;
  std::size_t p = 0;
  for (; p + NA <= n_a; p += NA) nt_block<T, NA>(out + p * os, os, a + p, b, n_b, n);
  for (; p < n_a; ++p) nt_block<T, 1>(out + p * os, os, a + p, b, n_b, n);
}

template <class T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                       const ConvGeometry& g, std::size_t spatial) {
  g.validate();
  const char* op = spatial == 1 ? "conv1d" : "conv2d";
  auto fail = [&](const std::string& what, const std::string& axis) { throw ShapeError(op + (": " + what), axis); };
  auto num = [](std::size_t v) { return std::to_string(v); };
  if (g.spatial_rank() != spatial) {
    fail("geometry has " + num(g.spatial_rank()) + " spatial axes, expected " + num(spatial), "geometry");
  }
  if (input.rank() != spatial + 1) {
    fail("input must have rank " + num(spatial + 1) + ", got " + shape_str(input.shape()), "input");
  }
  if (input.dim(0) != g.in_channels) {
    fail("input channel axis is " + num(input.dim(0)) + ", geometry expects " + num(g.in_channels), "input channels");
  }
  if (weights.rank() != spatial + 2) fail("weights must have rank " + num(spatial + 2), "weights");
  if (weights.dim(0) != g.out_channels) {
    fail("weights output-channel axis is " + num(weights.dim(0)) + ", expected " + num(g.out_channels),
         "weights out_channels");
  }
  if (weights.dim(1) != g.in_channels) {
    fail("weights input-channel axis is " + num(weights.dim(1)) + ", expected " + num(g.in_channels),
         "weights in_channels");
  }
  for (std::size_t a = 0; a < spatial; ++a) {
    if (weights.dim(2 + a) != g.kernel[a]) {
      fail("weights kernel axis " + num(a) + " is " + num(weights.dim(2 + a)) + ", expected " + num(g.kernel[a]),
           "weights kernel axis " + num(a));
    }
  }
  if (bias.rank() != 1 || bias.dim(0) != g.out_channels) {
    fail("bias must be [" + num(g.out_channels) + "], got " + shape_str(bias.shape()), "bias");
  }
}

/// Zero-padded input split into `stride` phases: phase r holds padded samples
/// r, r + s, r + 2s, ... so that tap k of output j reads phase (k mod s) at
/// index j + k / s, contiguously in j.
template <class T>
struct Polyphase {
  std::size_t stride = 1, channels = 0, padded_len = 0, phase_len = 0;
  std::vector<T> buf;  // [phase][channel][phase_len]

  Polyphase(const T* in, std::size_t ch, std::size_t len, std::size_t pad, std::size_t s)
      : stride(s), channels(ch), padded_len(len + 2 * pad), phase_len((len + 2 * pad + s - 1) / s) {
    buf.assign(s * ch * phase_len, T{0});
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t r = 0; r < s; ++r) {
        // padded index t = m * s + r maps to input index t - pad
        T* dst = buf.data() + (r * ch + c) * phase_len;
        const T* src = in + c * len;
        for (std::size_t m = 0, t = r; m < phase_len; ++m, t += s) {
          if (t >= pad && t < pad + len) dst[m] = src[t - pad];
        }
      }
    }
  }
  const T* row(std::size_t phase, std::size_t c) const { return buf.data() + (phase * channels + c) * phase_len; }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// conv1d: direct kernel over a polyphase zero-padded input

template <class T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, const ConvGeometry& g) {
  detail::check_conv_shapes(input, weights, bias, g, 1);
  const std::size_t cin = g.in_channels, cout = g.out_channels, k_len = g.kernel[0];
  const std::size_t len = input.dim(1), s = g.stride[0], pad = g.padding[0];
  const std::size_t out_len = g.out_length(0, len);

  const detail::Polyphase<T> pp(input.data().data(), cin, len, pad, s);
  std::vector<const T*> rows(cin * k_len);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < k_len; ++k) rows[c * k_len + k] = pp.row(k % s, c) + k / s;
  }
  Tensor<T> out({cout, out_len});
  std::vector<T*> orows(cout);
  for (std::size_t o = 0; o < cout; ++o) {
    orows[o] = out.data().data() + o * out_len;
    std::fill(orows[o], orows[o] + out_len, bias[o]);
  }
  detail::gemm_nn(orows.data(), cout, out_len, weights.data().data(), rows.size(), rows.data(), rows.size());
  return out;
}

template <class T>
ConvGrads<T> conv1d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                             const ConvGeometry& g) {
  const std::size_t cin = g.in_channels, cout = g.out_channels, k_len = g.kernel[0];
  const std::size_t len = input.dim(1), s = g.stride[0], pad = g.padding[0];
  const std::size_t out_len = g.out_length(0, len);
  if (grad_out.shape() != Shape{cout, out_len}) {
    throw ShapeError("conv1d_backward: grad_out shape " + shape_str(grad_out.shape()) + ", expected " +
                         shape_str({cout, out_len}),
                     "grad_out");
  }
  ConvGrads<T> gr{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({cout})};
  const T* w = weights.data().data();
  const T* go = grad_out.data().data();

  // bias and weights
  const detail::Polyphase<T> pp(input.data().data(), cin, len, pad, s);
  std::vector<const T*> taps(cin * k_len);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t k = 0; k < k_len; ++k) taps[c * k_len + k] = pp.row(k % s, c) + k / s;
  }
  std::vector<const T*> gout_rows(cout);
  for (std::size_t o = 0; o < cout; ++o) {
    gout_rows[o] = go + o * out_len;
    T acc = 0;
    for (std::size_t j = 0; j < out_len; ++j) acc += gout_rows[o][j];
    gr.bias[o] = acc;
  }
  detail::gemm_nt(gr.weights.data().data(), taps.size(), gout_rows.data(), cout, taps.data(), taps.size(), out_len);

  // input: padded position m*s + r receives w[o, c, r + q*s] * gout[o, m - q]
  const std::size_t q_max = (k_len + s - 1) / s;
  const std::size_t gp_len = pp.phase_len + q_max;
  std::vector<T> gpad(cout * gp_len, T{0});
  for (std::size_t o = 0; o < cout; ++o) {
    std::copy(go + o * out_len, go + (o + 1) * out_len, gpad.begin() + static_cast<std::ptrdiff_t>(o * gp_len + q_max));
  }
  const std::size_t plen = pp.phase_len;
  std::vector<T> phase_grad(cin * plen);
  std::vector<T*> pg_rows(cin);
  for (std::size_t c = 0; c < cin; ++c) pg_rows[c] = phase_grad.data() + c * plen;
  std::vector<const T*> rows;
  std::vector<T> wv;
  T* gin = gr.input.data().data();
  for (std::size_t r = 0; r < s && r < k_len; ++r) {
    const std::size_t q_n = (k_len - r + s - 1) / s;
    rows.assign(cout * q_n, nullptr);
    wv.assign(cin * cout * q_n, T{0});
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t q = 0; q < q_n; ++q) {
        rows[o * q_n + q] = gpad.data() + o * gp_len + q_max - q;
        for (std::size_t c = 0; c < cin; ++c) wv[(c * cout + o) * q_n + q] = w[(o * cin + c) * k_len + r + q * s];
      }
    }
    std::fill(phase_grad.begin(), phase_grad.end(), T{0});
    detail::gemm_nn(pg_rows.data(), cin, plen, wv.data(), rows.size(), rows.data(), rows.size());
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t m = 0; m < plen; ++m) {
        const std::size_t t = m * s + r;
        if (t >= pad && t < pad + len) gin[c * len + t - pad] += pg_rows[c][m];
      }
    }
  }
  return gr;
}

// ---------------------------------------------------------------------------
// conv2d: im2col + GEMM

namespace detail {

struct Conv2dDims {
  std::size_t cin, cout, h, w, kh, kw, sh, sw, ph, pw, oh, ow;
  std::size_t rows() const { return cin * kh * kw; }
  std::size_t cols() const { return oh * ow; }
};

inline Conv2dDims conv2d_dims(const Shape& in, const ConvGeometry& g) {
  Conv2dDims d{};
  d.cin = g.in_channels;
  d.cout = g.out_channels;
  d.h = in[1];
  d.w = in[2];
  d.kh = g.kernel[0];
  d.kw = g.kernel[1];
  d.sh = g.stride[0];
  d.sw = g.stride[1];
  d.ph = g.padding[0];
  d.pw = g.padding[1];
  d.oh = g.out_length(0, d.h);
  d.ow = g.out_length(1, d.w);
  return d;
}

/// Output index range [lo, hi) whose input index j*stride + k - pad lies in [0, length).
inline void valid_range(std::size_t out_len, std::size_t length, std::size_t stride, std::size_t k,
                        std::size_t pad, std::size_t& lo, std::size_t& hi) {
  lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(length) - 1 + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(k);
  if (top < 0) {
    hi = lo;
    return;
  }
  hi = std::min(out_len, static_cast<std::size_t>(top) / stride + 1);
  if (hi < lo) hi = lo;
}

// col[(c, kh, kw), (i, j)] = in[c, i*sh + kh - ph, j*sw + kw - pw], zero outside.
template <class T>
void im2col(const T* in, const Conv2dDims& d, T* col) {
  const std::size_t ncols = d.cols();
  std::size_t r = 0;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t a = 0; a < d.kh; ++a) {
      for (std::size_t b = 0; b < d.kw; ++b, ++r) {
        T* crow = col + r * ncols;
        std::size_t jlo, jhi;
        valid_range(d.ow, d.w, d.sw, b, d.pw, jlo, jhi);
        for (std::size_t i = 0; i < d.oh; ++i) {
          T* dst = crow + i * d.ow;
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * d.sh + a) - static_cast<std::ptrdiff_t>(d.ph);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.h) || jhi <= jlo) {
            std::fill(dst, dst + d.ow, T{0});
            continue;
          }
          const T* src = in + (c * d.h + static_cast<std::size_t>(y)) * d.w;
          std::fill(dst, dst + jlo, T{0});
          for (std::size_t j = jlo; j < jhi; ++j) dst[j] = src[j * d.sw + b - d.pw];
          std::fill(dst + jhi, dst + d.ow, T{0});
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const Conv2dDims& d, T* in) {
  const std::size_t ncols = d.cols();
  std::size_t r = 0;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t a = 0; a < d.kh; ++a) {
      for (std::size_t b = 0; b < d.kw; ++b, ++r) {
        const T* crow = col + r * ncols;
        std::size_t jlo, jhi;
        valid_range(d.ow, d.w, d.sw, b, d.pw, jlo, jhi);
        for (std::size_t i = 0; i < d.oh; ++i) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * d.sh + a) - static_cast<std::ptrdiff_t>(d.ph);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(d.h)) continue;
          T* dst = in + (c * d.h + static_cast<std::size_t>(y)) * d.w;
          const T* src = crow + i * d.ow;
          for (std::size_t j = jlo; j < jhi; ++j) dst[j * d.sw + b - d.pw] += src[j];
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, const ConvGeometry& g) {
  detail::check_conv_shapes(input, weights, bias, g, 2);
  const auto d = detail::conv2d_dims(input.shape(), g);
  const std::size_t rows = d.rows(), cols = d.cols();
  std::vector<T> col(rows * cols);
  detail::im2col(input.data().data(), d, col.data());
  std::vector<const T*> row_ptr(rows);
  for (std::size_t r = 0; r < rows; ++r) row_ptr[r] = col.data() + r * cols;

  // GEMM: out[o, p] = bias[o] + sum_r W[o, r] * col[r, p]
  Tensor<T> out({d.cout, d.oh, d.ow});
  std::vector<T*> orows(d.cout);
  for (std::size_t o = 0; o < d.cout; ++o) {
    orows[o] = out.data().data() + o * cols;
    std::fill(orows[o], orows[o] + cols, bias[o]);
  }
  detail::gemm_nn(orows.data(), d.cout, cols, weights.data().data(), rows, row_ptr.data(), rows);
  return out;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                             const ConvGeometry& g) {
  const auto d = detail::conv2d_dims(input.shape(), g);
  if (grad_out.shape() != Shape{d.cout, d.oh, d.ow}) {
    throw ShapeError("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()) + ", expected " +
                         shape_str({d.cout, d.oh, d.ow}),
                     "grad_out");
  }
  const std::size_t rows = d.rows(), cols = d.cols();
  std::vector<T> col(rows * cols);
  detail::im2col(input.data().data(), d, col.data());

  ConvGrads<T> gr{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({d.cout})};
  const T* w = weights.data().data();
  const T* go = grad_out.data().data();
  std::vector<const T*> gout_rows(d.cout);
  for (std::size_t o = 0; o < d.cout; ++o) {
    gout_rows[o] = go + o * cols;
    T acc = 0;
    for (std::size_t p = 0; p < cols; ++p) acc += gout_rows[o][p];
    gr.bias[o] = acc;
  }
  std::vector<const T*> col_rows(rows);
  for (std::size_t r = 0; r < rows; ++r) col_rows[r] = col.data() + r * cols;
  detail::gemm_nt(gr.weights.data().data(), rows, gout_rows.data(), d.cout, col_rows.data(), rows, cols);

  // gcol[r, p] = sum_o W[o, r] * gout[o, p]
  std::vector<T> gcol(rows * cols, T{0});
  std::vector<T> wt(rows * d.cout);
  std::vector<T*> gcol_rows(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    gcol_rows[r] = gcol.data() + r * cols;
    for (std::size_t o = 0; o < d.cout; ++o) wt[r * d.cout + o] = w[o * rows + r];
  }
  detail::gemm_nn(gcol_rows.data(), rows, cols, wt.data(), d.cout, gout_rows.data(), d.cout);
  detail::col2im_add(gcol.data(), d, gr.input.data().data());
  return gr;
}

// ---------------------------------------------------------------------------
// activations

template <class T>
Tensor<T> activation(Tensor<T> x, ActivationKind kind) {
  if (kind == ActivationKind::relu) {
    for (auto& v : x.data()) v = v > T{0} ? v : T{0};
  }
  return x;
}

/// Gradient through an activation given its *output*: relu(x) > 0 iff x > 0.
template <class T>
Tensor<T> activation_backward(const Tensor<T>& output, Tensor<T> grad_out, ActivationKind kind) {
  if (kind == ActivationKind::relu) {
    auto g = grad_out.data();
    auto y = output.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > T{0} ? g[i] : T{0};
  }
  return grad_out;
}

// ---------------------------------------------------------------------------
// pooling over the trailing spatial axes ([C, L] or [C, H, W]); no padding

struct PoolGeometry {
  std::vector<std::size_t> window;
  std::vector<std::size_t> stride;

  std::size_t out_length(std::size_t axis, std::size_t length) const {
    if (window[axis] < 1 || stride[axis] < 1) throw GeometryError("pool window and stride must be >= 1");
    if (window[axis] > length) {
      throw GeometryError("pool window " + std::to_string(window[axis]) + " exceeds length " +
                          std::to_string(length) + " on spatial axis " + std::to_string(axis));
    }
    return (length - window[axis]) / stride[axis] + 1;
  }
};

namespace detail {

struct PoolDims {
  std::size_t c, h, w, wh, ww, sh, sw, oh, ow;
};

inline PoolDims pool_dims(const Shape& s, const PoolGeometry& g) {
  const std::size_t spatial = s.size() - 1;
  if ((spatial != 1 && spatial != 2) || g.window.size() != spatial || g.stride.size() != spatial) {
    throw ShapeError("pool: input " + shape_str(s) + " does not match a " + std::to_string(g.window.size()) +
                         "-axis window",
                     "input");
  }
  PoolDims d{};
  d.c = s[0];
  if (spatial == 1) {
    d.h = 1, d.wh = 1, d.sh = 1, d.oh = 1;
    d.w = s[1], d.ww = g.window[0], d.sw = g.stride[0];
    d.ow = g.out_length(0, d.w);
  } else {
    d.h = s[1], d.wh = g.window[0], d.sh = g.stride[0];
    d.w = s[2], d.ww = g.window[1], d.sw = g.stride[1];
    d.oh = g.out_length(0, d.h);
    d.ow = g.out_length(1, d.w);
  }
  return d;
}

inline Shape pooled_shape(const Shape& s, const PoolDims& d) {
  if (s.size() == 2) return {d.c, d.ow};
  return {d.c, d.oh, d.ow};
}

}  // namespace detail

template <class T>
Tensor<T> pool(const Tensor<T>& input, PoolKind kind, const PoolGeometry& g) {
  const auto d = detail::pool_dims(input.shape(), g);
  Tensor<T> out(detail::pooled_shape(input.shape(), d));
  const T* in = input.data().data();
  T* o = out.data().data();
  const T inv = T{1} / static_cast<T>(d.wh * d.ww);
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.oh; ++i) {
      for (std::size_t j = 0; j < d.ow; ++j) {
        T acc = kind == PoolKind::max ? -std::numeric_limits<T>::infinity() : T{0};
        for (std::size_t a = 0; a < d.wh; ++a) {
          const T* row = in + (c * d.h + i * d.sh + a) * d.w + j * d.sw;
          for (std::size_t b = 0; b < d.ww; ++b) {
            if (kind == PoolKind::max) {
              acc = row[b] > acc ? row[b] : acc;
            } else {
              acc += row[b];
            }
          }
        }
        o[(c * d.oh + i) * d.ow + j] = kind == PoolKind::max ? acc : acc * inv;
      }
    }
  }
  return out;
}

/// Max routes each output gradient to the first maximal input in its window.
template <class T>
Tensor<T> pool_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind, const PoolGeometry& g) {
  const auto d = detail::pool_dims(input.shape(), g);
  if (grad_out.shape() != detail::pooled_shape(input.shape(), d)) {
    throw ShapeError("pool_backward: grad_out shape mismatch", "grad_out");
  }
  Tensor<T> gin(input.shape());
  const T* in = input.data().data();
  const T* go = grad_out.data().data();
  T* gi = gin.data().data();
  const T inv = T{1} / static_cast<T>(d.wh * d.ww);
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.oh; ++i) {
      for (std::size_t j = 0; j < d.ow; ++j) {
        const T gval = go[(c * d.oh + i) * d.ow + j];
        if (kind == PoolKind::avg) {
          for (std::size_t a = 0; a < d.wh; ++a) {
            T* row = gi + (c * d.h + i * d.sh + a) * d.w + j * d.sw;
            for (std::size_t b = 0; b < d.ww; ++b) row[b] += gval * inv;
          }
          continue;
        }
        std::size_t best = 0;
        T best_v = -std::numeric_limits<T>::infinity();
        for (std::size_t a = 0; a < d.wh; ++a) {
          const std::size_t base = (c * d.h + i * d.sh + a) * d.w + j * d.sw;
          for (std::size_t b = 0; b < d.ww; ++b) {
            if (in[base + b] > best_v) {
              best_v = in[base + b];
              best = base + b;
            }
          }
        }
        gi[best] += gval;
      }
    }
  }
  return gin;
}

// ---------------------------------------------------------------------------
// nearest-neighbour upsampling over trailing spatial axes

template <class T>
Tensor<T> upsample(const Tensor<T>& input, const std::vector<std::size_t>& factor) {
  const auto& s = input.shape();
  const std::size_t spatial = s.size() - 1;
  if ((spatial != 1 && spatial != 2) || factor.size() != spatial) {
    throw ShapeError("upsample: input " + shape_str(s) + " does not match factor rank", "input");
  }
  for (auto f : factor) {
    if (f < 1) throw GeometryError("upsample factor must be >= 1");
  }
  const std::size_t h = spatial == 2 ? s[1] : 1, w = s.back();
  const std::size_t fh = spatial == 2 ? factor[0] : 1, fw = factor.back();
  Shape os = s;
  if (spatial == 2) os[1] = h * fh;
  os.back() = w * fw;
  Tensor<T> out(os);
  const T* in = input.data().data();
  T* o = out.data().data();
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (std::size_t i = 0; i < h * fh; ++i) {
      const T* src = in + (c * h + i / fh) * w;
      T* dst = o + (c * h * fh + i) * w * fw;
      for (std::size_t j = 0; j < w; ++j) {
        for (std::size_t r = 0; r < fw; ++r) dst[j * fw + r] = src[j];
      }
    }
  }
  return out;
}

/// Repeat along the last axis only ([C, L] or [C, H, W]).
template <class T>
Tensor<T> upsample(const Tensor<T>& input, std::size_t factor) {
  if (input.rank() == 3) return upsample(input, std::vector<std::size_t>{1, factor});
  return upsample(input, std::vector<std::size_t>{factor});
}

template <class T>
Tensor<T> upsample_backward(const Tensor<T>& input_shape_like, const Tensor<T>& grad_out,
                            const std::vector<std::size_t>& factor) {
  const auto& s = input_shape_like.shape();
  const std::size_t spatial = s.size() - 1;
  const std::size_t h = spatial == 2 ? s[1] : 1, w = s.back();
  const std::size_t fh = spatial == 2 ? factor[0] : 1, fw = factor.back();
  Tensor<T> gin(s);
  const T* go = grad_out.data().data();
  T* gi = gin.data().data();
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (std::size_t i = 0; i < h * fh; ++i) {
      const T* src = go + (c * h * fh + i) * w * fw;
      T* dst = gi + (c * h + i / fh) * w;
      for (std::size_t j = 0; j < w; ++j) {
        T acc = 0;
        for (std::size_t r = 0; r < fw; ++r) acc += src[j * fw + r];
        dst[j] += acc;
      }
    }
  }
  return gin;
}

// ---------------------------------------------------------------------------
// combine

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ", "all");
  }
  Tensor<T> out = a;
  auto o = out.data();
  auto bb = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bb[i];
  return out;
}

/// Concatenate along axis 0 (channels) in argument order.
template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs", "channels");
  const Shape& first = parts.front()->shape();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(first) +
                           " outside the channel axis",
                       "spatial");
    }
    channels += s[0];
  }
  Shape os = first;
  os[0] = channels;
  Tensor<T> out(os);
  std::size_t off = 0;
  for (const auto* p : parts) {
    std::copy(p->data().begin(), p->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p->size();
  }
  return out;
}

template <class T>
Tensor<T> combine(const Tensor<T>& a, const Tensor<T>& b, CombineKind kind) {
  if (kind == CombineKind::add) return add(a, b);
  return concat_channels<T>({&a, &b});
}

}  // namespace eegdn
