#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "octforce/fft.hpp"
#include "octforce/recon.hpp"

using namespace octforce;

namespace {

ComplexSpectrum naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  ComplexSpectrum out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = (k * j) % n;
      acc += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(n));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST(Fft, ImpulseGivesFlatSpectrum) {
  std::vector<double> x(1024, 0.0);
  x[0] = 1.0;
  for (const auto& v : fourier_transform(x)) {
    EXPECT_NEAR(v.real(), 1.0, 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
}

TEST(Fft, CosineLandsOnItsBins) {
  const std::size_t m = 37;
  std::vector<double> x(1024);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2.0 * std::numbers::pi * m * i / 1024.0);
  const auto X = fourier_transform(x);
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double expected = (k == m || k == 1024 - m) ? 512.0 : 0.0;
    EXPECT_NEAR(std::abs(X[k]), expected, 1e-9) << "bin " << k;
  }
}

TEST(Fft, MatchesNaiveDftOnRandomVectors) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> x(1024);
    for (double& v : x) v = dist(rng);
    const auto fast = fourier_transform(x);
    const auto slow = naive_dft(x);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      num = std::max(num, std::abs(fast[k] - slow[k]));
      den = std::max(den, std::abs(slow[k]));
    }
    EXPECT_LE(num / den, 1e-9);
  }
}

TEST(Fft, RejectsNonPowerOfTwo) {
  std::vector<double> x(1000, 1.0);
  try {
    fourier_transform(x);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedLength);
  }
}

TEST(Fft, SmallSizesMatchNaive) {
  for (std::size_t n : {1u, 2u, 4u, 8u, 64u}) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
    const auto fast = fourier_transform(x);
    const auto slow = naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(fast[k] - slow[k]), 0.0, 1e-12);
  }
}

TEST(MagnitudeAScan, ZeroInputGivesZeroAScan) {
  const auto a = magnitude_ascan(fourier_transform(std::vector<double>(1024, 0.0)));
  ASSERT_EQ(a.size(), 512u);
  for (double v : a) EXPECT_EQ(v, 0.0);
}

TEST(MagnitudeAScan, DiscardedHalfIsConjugateMirror) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> x(1024);
  for (double& v : x) v = dist(rng);
  const auto X = fourier_transform(x);
  for (std::size_t i = 1; i < 512; ++i) EXPECT_NEAR(std::abs(X[i]), std::abs(X[1024 - i]), 1e-9);
}

TEST(MagnitudeAScan, CosineFringeArgmax) {
  for (std::size_t m : {5u, 100u, 300u, 511u}) {
    std::vector<double> x(1024);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2.0 * std::numbers::pi * m * i / 1024.0 + 0.3);
    const auto a = magnitude_ascan(fourier_transform(x));
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin()), m);
  }
}
