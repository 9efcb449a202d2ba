#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "octforce/error.hpp"

namespace octforce {

using ComplexSpectrum = std::vector<std::complex<double>>;

/// In-place iterative radix-2 decimation-in-time FFT, forward sign, no scaling.
/// Twiddles are evaluated directly per index rather than by recurrence.
inline void fft_inplace(std::span<std::complex<double>> x) {
  const std::size_t n = x.size();
  require(n > 0 && std::has_single_bit(n), ErrorKind::UnsupportedLength,
          "FFT length " + std::to_string(n) + " is not a power of two");
  if (n == 1) return;

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k)
    twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len)
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> t = twiddle[k * step] * x[start + k + half];
        x[start + k + half] = x[start + k] - t;
        x[start + k] += t;
      }
  }
}

/// Forward DFT of a real sequence.
inline ComplexSpectrum fourier_transform(std::span<const double> spectrum) {
  ComplexSpectrum out(spectrum.begin(), spectrum.end());
  fft_inplace(out);
  return out;
}

}  // namespace octforce
