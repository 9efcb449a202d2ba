#pragma once

// Spectral-domain OCT reconstruction: 1024 raw detector samples -> 512-bin
// depth magnitude profile, applied scan by scan over an M-scan.
//
//   dechirp -> EMA DC estimate + subtraction -> Hann apodization -> FFT -> |X|

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "octforce/error.hpp"
#include "octforce/fft.hpp"
#include "octforce/needle_sim.hpp"

namespace octforce {

using AScan = std::vector<double>;

enum class Window { Hann };
enum class DcInit { FirstScan, Zero };

inline std::string_view to_string(DcInit d) { return d == DcInit::FirstScan ? "first_scan" : "zero"; }

inline DcInit parse_dc_init(std::string_view s) {
  if (s == "first_scan") return DcInit::FirstScan;
  if (s == "zero") return DcInit::Zero;
  fail(ErrorKind::Config, "unknown dc_init policy '" + std::string(s) + "'");
}

inline Window parse_window(std::string_view s) {
  if (s == "hann") return Window::Hann;
  fail(ErrorKind::Config, "unsupported window '" + std::string(s) + "'");
}

inline std::vector<double> identity_chirp_table() {
  std::vector<double> t(kSpectrumLength);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

/// Fractional source-pixel positions at which the detector must be sampled to
/// obtain wavenumbers uniformly spaced between the first and last pixel.
inline std::vector<double> chirp_table_from_model(const NeedleModel& model) {
  const double k0 = model.wavenumber_at(0.0);
  const double k1 = model.wavenumber_at(1.0);
  std::vector<double> table(kSpectrumLength);
  for (std::size_t j = 0; j < kSpectrumLength; ++j) {
    const double target = k0 + (k1 - k0) * static_cast<double>(j) / static_cast<double>(kSpectrumLength - 1);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (model.wavenumber_at(mid) < target ? lo : hi) = mid;
    }
    table[j] = 0.5 * (lo + hi) * static_cast<double>(kSpectrumLength - 1);
  }
  table.front() = 0.0;
  table.back() = static_cast<double>(kSpectrumLength - 1);
  return table;
}

struct ReconConfig {
  double damping = 0.05;
  std::vector<double> chirp_table = identity_chirp_table();
  Window window = Window::Hann;
  DcInit dc_init = DcInit::FirstScan;

  void validate() const {
    require(std::isfinite(damping) && damping > 0.0 && damping <= 1.0, ErrorKind::Config,
            "damping must lie in (0, 1]");
    require(chirp_table.size() == kSpectrumLength, ErrorKind::Config,
            "chirp_table must have " + std::to_string(kSpectrumLength) + " entries");
    for (std::size_t i = 1; i < chirp_table.size(); ++i)
      require(chirp_table[i] > chirp_table[i - 1], ErrorKind::Config,
              "chirp_table is not strictly increasing at index " + std::to_string(i));
  }
};

/// Linear interpolation at a fractional position, clamped to the end samples.
inline double interpolate_at(std::span<const double> values, double pos) {
  require(!values.empty(), ErrorKind::Shape, "interpolate_at on empty sequence");
  const double last = static_cast<double>(values.size() - 1);
  if (pos <= 0.0) return values.front();
  if (pos >= last) return values.back();
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return values[i] + frac * (values[i + 1] - values[i]);
}

/// Resamples the detector at the chirp table positions.
inline RawSpectrum dechirp(std::span<const double> raw, const ReconConfig& cfg) {
  cfg.validate();
  require(raw.size() == kSpectrumLength, ErrorKind::Shape,
          "dechirp expects " + std::to_string(kSpectrumLength) + " samples, got " + std::to_string(raw.size()));
  RawSpectrum out(cfg.chirp_table.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = interpolate_at(raw, cfg.chirp_table[j]);
  return out;
}

/// Running DC spectrum estimate of one M-scan. An empty estimate is
/// initialized on first use according to ReconConfig::dc_init.
struct DcState {
  std::vector<double> estimate;
  std::size_t absorbed = 0;

  void reset() {
    estimate.clear();
    absorbed = 0;
  }
};

/// state <- (1 - d) state + d x, then returns x - state.
inline RawSpectrum update_and_subtract_dc(std::span<const double> spectrum, DcState& state,
                                          const ReconConfig& cfg) {
  require(spectrum.size() == kSpectrumLength, ErrorKind::Shape,
          "DC subtraction expects " + std::to_string(kSpectrumLength) + " samples");
  if (state.estimate.empty()) {
    if (cfg.dc_init == DcInit::FirstScan)
      state.estimate.assign(spectrum.begin(), spectrum.end());
    else
      state.estimate.assign(spectrum.size(), 0.0);
  }
  require(state.estimate.size() == spectrum.size(), ErrorKind::Shape, "DC state length mismatch");
  const double d = cfg.damping;
  RawSpectrum out(spectrum.size());
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    state.estimate[i] = (1.0 - d) * state.estimate[i] + d * spectrum[i];
    out[i] = spectrum[i] - state.estimate[i];
  }
  ++state.absorbed;
  return out;
}

/// w_i = (1 - cos(2 pi i / (N - 1))) / 2 for N = 1024.
inline const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    constexpr std::size_t n = kSpectrumLength;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
      v[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
    return v;
  }();
  return w;
}

inline RawSpectrum apodize(std::span<const double> spectrum) {
  require(spectrum.size() == kSpectrumLength, ErrorKind::Shape,
          "apodize expects " + std::to_string(kSpectrumLength) + " samples");
  const auto& w = hann_window();
  RawSpectrum out(spectrum.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = spectrum[i] * w[i];
  return out;
}

/// |X_i| for the non-negative-frequency half.
inline AScan magnitude_ascan(const ComplexSpectrum& spec) {
  require(spec.size() == kSpectrumLength, ErrorKind::Shape,
          "magnitude_ascan expects " + std::to_string(kSpectrumLength) + " bins");
  AScan out(spec.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(spec[i]);
  return out;
}

/// One scan through the full chain; `state` carries the DC estimate between
/// consecutive scans of the same M-scan.
inline AScan reconstruct_scan(std::span<const double> raw, DcState& state, const ReconConfig& cfg) {
  const RawSpectrum resampled = dechirp(raw, cfg);
  const RawSpectrum ac = update_and_subtract_dc(resampled, state, cfg);
  return magnitude_ascan(fourier_transform(apodize(ac)));
}

/// Reconstructs every scan in acquisition order with one DC state. Labels and
/// metadata are carried through; records become 512-bin A-scans.
inline MScanDataset reconstruct_mscan(const MScanDataset& dataset, const ReconConfig& cfg) {
  cfg.validate();
  dataset.validate();
  require(dataset.record_length == kSpectrumLength, ErrorKind::RepresentationMismatch,
          "reconstruction needs raw 1024-sample records, got length " + std::to_string(dataset.record_length));
  MScanDataset out;
  out.needle_id = dataset.needle_id;
  out.rng_seed = dataset.rng_seed;
  out.model_params = dataset.model_params;
  out.record_length = kAScanLength;
  out.forces = dataset.forces;
  out.samples.reserve(dataset.size() * kAScanLength);
  DcState state;
  std::vector<double> raw(kSpectrumLength);
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const auto rec = dataset.record(n);
    std::copy(rec.begin(), rec.end(), raw.begin());
    AScan a;
    try {
      a = reconstruct_scan(raw, state, cfg);
    } catch (const Error& e) {
      fail(e.kind(), "scan " + std::to_string(n) + ": " + e.what());
    }
    for (double v : a) out.samples.push_back(static_cast<float>(v));
  }
  return out;
}

/// Bins below this index are ignored by the peak search (residual DC).
inline constexpr std::size_t kPeakSearchStart = 3;
inline constexpr double kNoPeakFloor = 1e-12;

/// Argmax over bins >= 3 refined by a 3-point parabola; fractional bin.
inline double peak_displacement(std::span<const double> ascan) {
  require(ascan.size() > kPeakSearchStart, ErrorKind::Shape, "A-scan too short for peak search");
  const auto begin = ascan.begin() + static_cast<std::ptrdiff_t>(kPeakSearchStart);
  const auto it = std::max_element(begin, ascan.end());
  require(*it > kNoPeakFloor, ErrorKind::NoPeak, "A-scan has no peak above the numeric floor");
  const auto m = static_cast<std::size_t>(it - ascan.begin());
  if (m + 1 >= ascan.size()) return static_cast<double>(m);
  const double l = ascan[m - 1], c = ascan[m], r = ascan[m + 1];
  const double denom = l - 2.0 * c + r;
  if (denom == 0.0) return static_cast<double>(m);
  return static_cast<double>(m) + 0.5 * (l - r) / denom;
}

struct LinearBaseline {
  double slope = 0.0;
  double intercept = 0.0;

  double predict(double depth) const { return slope * depth + intercept; }
};

/// Ordinary least squares force ~ slope * depth + intercept.
inline LinearBaseline fit_linear_baseline(std::span<const double> depths, std::span<const double> forces) {
  require(depths.size() == forces.size(), ErrorKind::Shape, "depth/force length mismatch");
  require(depths.size() >= 2, ErrorKind::DegenerateFit, "linear fit needs at least 2 points");
  const double n = static_cast<double>(depths.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    mx += depths[i];
    my += forces[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    sxx += (depths[i] - mx) * (depths[i] - mx);
    sxy += (depths[i] - mx) * (forces[i] - my);
  }
  require(sxx > 0.0, ErrorKind::DegenerateFit, "all depths identical");
  LinearBaseline fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

}  // namespace octforce
