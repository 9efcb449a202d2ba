#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "octforce/recon.hpp"

using namespace octforce;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an octforce::Error";
  return ErrorKind::Contract;
}

NeedleModel noiseless() {
  NeedleModel m = NeedleModel::defaults();
  m.noise_sigma = 0.0;
  m.drift_rate = 0.0;
  return m;
}

/// Fraction of the non-DC spectral energy in the 3 bins around the peak.
double peak_energy_fraction(const std::vector<double>& fringe) {
  const auto X = fourier_transform(fringe);
  std::vector<double> e(512);
  for (std::size_t i = 0; i < 512; ++i) e[i] = std::norm(X[i]);
  double total = 0.0;
  for (std::size_t i = 3; i < 512; ++i) total += e[i];
  const auto m = static_cast<std::size_t>(std::max_element(e.begin() + 3, e.end()) - e.begin());
  return (e[m - 1] + e[m] + e[m + 1]) / total;
}

}  // namespace

TEST(Dechirp, IdentityTableIsExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  std::vector<double> x(1024);
  for (double& v : x) v = dist(rng);
  EXPECT_EQ(dechirp(x, ReconConfig{}), x);
}

TEST(Dechirp, LinearInterpolationToy) {
  const std::vector<double> v{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(interpolate_at(v, 1.5), 1.5);
  EXPECT_DOUBLE_EQ(interpolate_at(v, -2.0), 0.0);
  EXPECT_DOUBLE_EQ(interpolate_at(v, 7.0), 3.0);
}

TEST(Dechirp, NonMonotoneTableIsConfigError) {
  ReconConfig cfg;
  std::swap(cfg.chirp_table[10], cfg.chirp_table[11]);
  EXPECT_EQ(kind_of([&] { dechirp(std::vector<double>(1024, 0.0), cfg); }), ErrorKind::Config);
  cfg = ReconConfig{};
  cfg.chirp_table.pop_back();
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Config);
  cfg = ReconConfig{};
  cfg.damping = 0.0;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::Config);
}

TEST(Dechirp, ModelTableInvertsChirp) {
  const NeedleModel m = NeedleModel::defaults();
  const auto t = chirp_table_from_model(m);
  const double k0 = m.wavenumber(0), k1 = m.wavenumber(1023);
  for (std::size_t j = 0; j < 1024; j += 31) {
    const double k = m.wavenumber_at(t[j] / 1023.0);
    EXPECT_NEAR(k, k0 + (k1 - k0) * j / 1023.0, 1e-6 * (k1 - k0) / 1023.0);
  }
}

TEST(Dechirp, ConcentratesChirpedFringeEnergy) {
  const NeedleModel m = NeedleModel::defaults();
  std::vector<double> fringe(1024);
  const double gap = m.rest_gap - 1e-4;
  for (std::size_t i = 0; i < 1024; ++i) fringe[i] = std::cos(2.0 * m.wavenumber(i) * gap);
  ReconConfig cfg;
  cfg.chirp_table = chirp_table_from_model(m);
  const double with = peak_energy_fraction(dechirp(fringe, cfg));
  const double without = peak_energy_fraction(fringe);
  EXPECT_GE(with, 0.9);
  EXPECT_LT(without, 0.5);
}

TEST(DcSubtraction, FixedPoint) {
  ReconConfig cfg;
  DcState st;
  st.estimate.assign(1024, 2.5);
  const auto out = update_and_subtract_dc(std::vector<double>(1024, 2.5), st, cfg);
  for (std::size_t i = 0; i < 1024; ++i) {
    EXPECT_DOUBLE_EQ(st.estimate[i], 2.5);
    EXPECT_DOUBLE_EQ(out[i], 0.0);
  }
}

TEST(DcSubtraction, FirstUpdateFromZero) {
  ReconConfig cfg;
  cfg.dc_init = DcInit::Zero;
  DcState st;
  const auto out = update_and_subtract_dc(std::vector<double>(1024, 1.0), st, cfg);
  for (std::size_t i = 0; i < 1024; ++i) {
    EXPECT_DOUBLE_EQ(st.estimate[i], 0.05);
    EXPECT_DOUBLE_EQ(out[i], 0.95);
  }
  EXPECT_EQ(st.absorbed, 1u);
}

TEST(DcSubtraction, GeometricSeries) {
  ReconConfig cfg;
  cfg.dc_init = DcInit::Zero;
  DcState st;
  const double c = 3.0;
  for (int n = 1; n <= 50; ++n) {
    update_and_subtract_dc(std::vector<double>(1024, c), st, cfg);
    EXPECT_NEAR(st.estimate[7], c * (1.0 - std::pow(0.95, n)), 1e-12);
  }
}

TEST(DcSubtraction, FirstScanInitSubtractsToZero) {
  ReconConfig cfg;
  DcState st;
  std::vector<double> x(1024);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.1 * i);
  for (double v : update_and_subtract_dc(x, st, cfg)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(DcSubtraction, StateStaysWithinInputBounds) {
  ReconConfig cfg;
  cfg.dc_init = DcInit::Zero;
  DcState st;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int n = 0; n < 200; ++n) {
    std::vector<double> x(1024);
    for (double& v : x) v = dist(rng);
    update_and_subtract_dc(x, st, cfg);
    for (double v : st.estimate) ASSERT_LE(std::abs(v), 1.0);
  }
}

TEST(Apodize, HannProperties) {
  const auto w = apodize(std::vector<double>(1024, 1.0));
  EXPECT_EQ(w, hann_window());
  EXPECT_NEAR(w[0], 0.0, 1e-15);
  EXPECT_NEAR(w[1023], 0.0, 1e-15);
  EXPECT_NEAR(w[511], 1.0, 1e-5);
  EXPECT_NEAR(w[512], 1.0, 1e-5);
}

TEST(FourierProperties, LinearityAndParseval) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist;
  std::vector<double> x(1024), y(1024), z(1024);
  const double a = 1.7, b = -0.3;
  for (std::size_t i = 0; i < 1024; ++i) {
    x[i] = dist(rng);
    y[i] = dist(rng);
    z[i] = a * x[i] + b * y[i];
  }
  const auto X = fourier_transform(x), Y = fourier_transform(y), Z = fourier_transform(z);
  double err = 0.0, scale = 0.0, ex = 0.0, eX = 0.0;
  for (std::size_t k = 0; k < 1024; ++k) {
    err = std::max(err, std::abs(Z[k] - (a * X[k] + b * Y[k])));
    scale = std::max(scale, std::abs(Z[k]));
    ex += x[k] * x[k];
    eX += std::norm(X[k]);
  }
  EXPECT_LE(err / scale, 1e-9);
  EXPECT_NEAR(ex, eX / 1024.0, 1e-9 * ex);
}

TEST(ReconstructMScan, ShapeContract) {
  const auto ds = generate_dataset(ForceProfile::ramp(1, 0.3, 0.3), NeedleModel::defaults(), 1);
  const auto rec = reconstruct_mscan(ds, ReconConfig{});
  EXPECT_EQ(rec.size(), 1u);
  EXPECT_EQ(rec.record_length, 512u);
  EXPECT_EQ(rec.samples.size(), 512u);
  EXPECT_EQ(rec.forces, ds.forces);
}

TEST(ReconstructMScan, NonNegativeOutputAndLabelsCarried) {
  const auto ds = generate_dataset(ForceProfile::triangle(100), NeedleModel::defaults(), 3);
  const auto rec = reconstruct_mscan(ds, ReconConfig{});
  EXPECT_EQ(rec.forces, ds.forces);
  EXPECT_EQ(rec.needle_id, ds.needle_id);
  for (float v : rec.samples) ASSERT_GE(v, 0.0f);
}

TEST(ReconstructMScan, RejectsReconstructedInput) {
  const auto ds = generate_dataset(ForceProfile::ramp(2), NeedleModel::defaults(), 3);
  const auto rec = reconstruct_mscan(ds, ReconConfig{});
  EXPECT_EQ(kind_of([&] { reconstruct_mscan(rec, ReconConfig{}); }), ErrorKind::RepresentationMismatch);
}

TEST(ReconstructMScan, OrderSensitiveUnderDrift) {
  NeedleModel m = NeedleModel::defaults();
  m.drift_rate = 1e-3;
  m.noise_sigma = 0.0;
  auto ds = generate_dataset(ForceProfile::ramp(30), m, 5);
  const auto a = reconstruct_mscan(ds, ReconConfig{});
  // Reverse scan order, then compare the A-scan of the original last scan.
  MScanDataset rev = ds;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto src = ds.record(ds.size() - 1 - n);
    std::copy(src.begin(), src.end(), rev.samples.begin() + static_cast<std::ptrdiff_t>(n * 1024));
    rev.forces[n] = ds.forces[ds.size() - 1 - n];
  }
  const auto b = reconstruct_mscan(rev, ReconConfig{});
  const auto ra = a.record(ds.size() - 1);
  const auto rb = b.record(0);
  EXPECT_FALSE(std::equal(ra.begin(), ra.end(), rb.begin()));
}

TEST(PeakDisplacement, DegenerateAndSymmetricParabola) {
  std::vector<double> a(512, 0.0);
  a[100] = 1.0;
  EXPECT_DOUBLE_EQ(peak_displacement(a), 100.0);
  a[99] = 0.5;
  a[101] = 0.5;
  EXPECT_DOUBLE_EQ(peak_displacement(a), 100.0);
  a[101] = 0.8;
  EXPECT_GT(peak_displacement(a), 100.0);
  EXPECT_LT(peak_displacement(a), 100.5);
}

TEST(PeakDisplacement, IgnoresResidualDcBins) {
  std::vector<double> a(512, 0.0);
  a[0] = 100.0;
  a[2] = 50.0;
  a[40] = 1.0;
  EXPECT_DOUBLE_EQ(peak_displacement(a), 40.0);
}

TEST(PeakDisplacement, FlatAScanIsNoPeak) {
  EXPECT_EQ(kind_of([] { peak_displacement(std::vector<double>(512, 0.0)); }), ErrorKind::NoPeak);
}

TEST(PeakDisplacement, NoiselessScanWithinTenthOfABin) {
  const NeedleModel m = noiseless();
  ReconConfig cfg;
  cfg.chirp_table = chirp_table_from_model(m);
  cfg.dc_init = DcInit::Zero;
  // Zero init with a tiny damping leaves the DC pedestal in place; subtract
  // it exactly here so only the fringe term reaches the FFT.
  NeedleModel flat = m;
  flat.reflectivity = 0.0;
  std::mt19937_64 rng(0);
  const auto envelope = dechirp(synthesize_spectrum(0.0, flat, 0, rng), cfg);
  std::mt19937_64 rng2(7);
  std::uniform_real_distribution<double> dist(0.0, 2.5e-4);
  for (int trial = 0; trial < 20; ++trial) {
    const double d = dist(rng2);
    auto s = dechirp(synthesize_spectrum(d, m, 0, rng), cfg);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= envelope[i] * (1.0 + m.reflectivity * m.reflectivity);
    const auto a = magnitude_ascan(fourier_transform(apodize(s)));
    EXPECT_NEAR(peak_displacement(a), m.fringe_bin(m.rest_gap - d), 0.1) << "d = " << d;
  }
}

TEST(LinearBaseline, TwoPointFit) {
  const std::vector<double> x{0, 1}, y{0, 1};
  const auto f = fit_linear_baseline(x, y);
  EXPECT_DOUBLE_EQ(f.slope, 1.0);
  EXPECT_DOUBLE_EQ(f.intercept, 0.0);
  EXPECT_DOUBLE_EQ(f.predict(3.0), 3.0);
}

TEST(LinearBaseline, DegenerateInputs) {
  const std::vector<double> x{2, 2, 2}, y{0, 1, 2};
  EXPECT_EQ(kind_of([&] { fit_linear_baseline(x, y); }), ErrorKind::DegenerateFit);
  const std::vector<double> one{1};
  EXPECT_EQ(kind_of([&] { fit_linear_baseline(one, one); }), ErrorKind::DegenerateFit);
}
