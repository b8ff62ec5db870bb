#pragma once

// Mixed-radix complex DFT (recursive decimation in time). Any length works;
// prime factors above 5 fall back to a direct O(p^2) butterfly.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "eegdn/error.hpp"

namespace eegdn {

using cplx = std::complex<double>;

namespace detail {

inline std::size_t smallest_factor(std::size_t n) {
  for (std::size_t p : {4u, 2u, 3u, 5u}) {
    if (n % p == 0) return p;
  }
  for (std::size_t p = 7; p * p <= n; p += 2) {
    if (n % p == 0) return p;
  }
  return n;
}

inline void fft_rec(const cplx* in, std::size_t stride, std::size_t n, cplx* out, int sign,
                    std::vector<cplx>& scratch) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = smallest_factor(n);
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r) fft_rec(in + r * stride, stride * p, m, out + r * m, sign, scratch);

  // out[r*m + k] holds Y_r[k]; combine X[k + q m] = sum_r w^(r (k + q m)) Y_r[k]
  const double base = sign * 2.0 * std::numbers::pi / static_cast<double>(n);
  std::vector<cplx> y(p);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) {
      const double ang = base * static_cast<double>(r * k);
      y[r] = out[r * m + k] * cplx(std::cos(ang), std::sin(ang));
    }
    for (std::size_t q = 0; q < p; ++q) {
      cplx acc = 0;
      for (std::size_t r = 0; r < p; ++r) {
        const std::size_t e = (r * q) % p;
        const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(e) / static_cast<double>(p);
        acc += y[r] * cplx(std::cos(ang), std::sin(ang));
      }
      scratch[k + q * m] = acc;
    }
  }
  std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n), out);
}

}  // namespace detail

/// Forward DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N).
inline std::vector<cplx> fft(const std::vector<cplx>& x) {
  if (x.empty()) throw InputError("fft of an empty sequence");
  std::vector<cplx> out(x.size()), scratch(x.size());
  detail::fft_rec(x.data(), 1, x.size(), out.data(), -1, scratch);
  return out;
}

/// Inverse DFT including the 1/N factor.
inline std::vector<cplx> ifft(const std::vector<cplx>& x) {
  if (x.empty()) throw InputError("ifft of an empty sequence");
  std::vector<cplx> out(x.size()), scratch(x.size());
  detail::fft_rec(x.data(), 1, x.size(), out.data(), +1, scratch);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (auto& v : out) v *= inv;
  return out;
}

template <class Seq>
std::vector<cplx> fft_real(const Seq& x) {
  std::vector<cplx> c(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = cplx(static_cast<double>(x[i]), 0.0);
  return fft(c);
}

}  // namespace eegdn
