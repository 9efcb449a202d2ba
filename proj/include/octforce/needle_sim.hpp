#pragma once

// Synthetic spectral OCT data for a spring-piston needle tip.
//
// Axial force compresses an epoxy spring, shortening the air gap between the
// fiber ferrule and the piston. The detector sees a two-beam interferogram
// whose fringe frequency in wavenumber is proportional to that gap.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "octforce/error.hpp"

namespace octforce {

inline constexpr std::size_t kSpectrumLength = 1024;
inline constexpr std::size_t kAScanLength = 512;

using RawSpectrum = std::vector<double>;

struct NeedleModel {
  double spring_constant = 4000.0;  // N/m
  double rest_gap = 1.0e-3;         // m
  double reflectivity = 0.2;
  double source_center = 0.0;     // rad/m
  double source_bandwidth = 0.0;  // rad/m, Gaussian std
  // k(u) = c0 + c1 u + c2 u^2 + c3 u^3 with u = pixel / 1023.
  std::array<double, 4> chirp_coeffs{};
  double noise_sigma = 0.01;
  std::optional<double> saturation_force;  // N; tanh knee, disabled when empty
  double drift_rate = 5.0e-6;              // relative envelope change per scan

  /// Fringe bin of the unloaded gap after dechirping.
  static constexpr double kDefaultRestBin = 400.0;
  static constexpr double kDefaultCenterWavelength = 1.3e-6;
  static constexpr double kDefaultChirpQuadratic = 0.2;
  static constexpr double kDefaultChirpCubic = 0.1;

  /// Wavenumber span and chirp such that the unloaded gap lands on bin 400 and
  /// mid-band pixels deviate ~5% from a linear pixel-to-wavenumber map.
  static NeedleModel defaults() {
    NeedleModel m;
    m.source_center = 2.0 * std::numbers::pi / kDefaultCenterWavelength;
    const double spacing = kDefaultRestBin * 2.0 * std::numbers::pi /
                           (2.0 * m.rest_gap * static_cast<double>(kSpectrumLength));
    const double span = spacing * static_cast<double>(kSpectrumLength - 1);
    m.source_bandwidth = span / 4.0;
    m.chirp_coeffs = chirp_polynomial(m.source_center - span / 2.0, span, kDefaultChirpQuadratic,
                                      kDefaultChirpCubic);
    return m;
  }

  /// Monomial coefficients of k_min + span * (u + a u(1-u) + b u(1-u)(u-1/2)).
  static std::array<double, 4> chirp_polynomial(double k_min, double span, double a, double b) {
    return {k_min, span * (1.0 + a - 0.5 * b), span * (-a + 1.5 * b), -span * b};
  }

  double wavenumber_at(double u) const {
    const auto& c = chirp_coeffs;
    return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
  }

  double wavenumber(std::size_t pixel) const {
    return wavenumber_at(static_cast<double>(pixel) / static_cast<double>(kSpectrumLength - 1));
  }

  /// Uniform wavenumber spacing of the dechirped grid spanning the detector.
  double dechirped_spacing() const {
    return (wavenumber(kSpectrumLength - 1) - wavenumber(0)) / static_cast<double>(kSpectrumLength - 1);
  }

  /// A-scan bin of a reflector at optical gap `gap` after dechirping.
  double fringe_bin(double gap) const {
    return 2.0 * gap * dechirped_spacing() * static_cast<double>(kSpectrumLength) /
           (2.0 * std::numbers::pi);
  }

  void validate() const;
};

enum class ProfileKind { Ramp, Triangle, Sinusoid, RandomWalk };

inline std::string_view to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::Ramp: return "ramp";
    case ProfileKind::Triangle: return "triangle";
    case ProfileKind::Sinusoid: return "sinusoid";
    case ProfileKind::RandomWalk: return "random_walk";
  }
  return "?";
}

inline ProfileKind parse_profile_kind(std::string_view s) {
  if (s == "ramp") return ProfileKind::Ramp;
  if (s == "triangle") return ProfileKind::Triangle;
  if (s == "sinusoid") return ProfileKind::Sinusoid;
  if (s == "random_walk") return ProfileKind::RandomWalk;
  fail(ErrorKind::Config, "unknown force profile kind '" + std::string(s) + "'");
}

/// Applied axial forces in N, one per scan.
struct ForceProfile {
  std::vector<double> samples;
  ProfileKind kind = ProfileKind::Ramp;

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i)
      require(std::isfinite(samples[i]) && samples[i] >= 0.0 && samples[i] <= 1.0,
              ErrorKind::InvalidInput,
              "force profile sample " + std::to_string(i) + " outside [0, 1] N");
  }

  static ForceProfile ramp(std::size_t n, double from = 0.0, double to = 1.0) {
    ForceProfile p{{}, ProfileKind::Ramp};
    p.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      p.samples[i] = n == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(n - 1);
    return p;
  }

  /// Starts at 0 N, peaks at `peak` N, `periods` full load/unload cycles.
  static ForceProfile triangle(std::size_t n, double periods = 10.0, double peak = 1.0) {
    ForceProfile p{{}, ProfileKind::Triangle};
    p.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * periods / static_cast<double>(n);
      const double phase = t - std::floor(t);
      p.samples[i] = peak * (1.0 - std::abs(2.0 * phase - 1.0));
    }
    return p;
  }

  static ForceProfile sinusoid(std::size_t n, double periods = 10.0, double peak = 1.0) {
    ForceProfile p{{}, ProfileKind::Sinusoid};
    p.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * periods / static_cast<double>(n);
      p.samples[i] = peak * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t));
    }
    return p;
  }

  /// Gaussian increments reflected at the [0, 1] N boundaries.
  static ForceProfile random_walk(std::size_t n, std::uint64_t seed, double step = 0.005) {
    ForceProfile p{{}, ProfileKind::RandomWalk};
    p.samples.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, step);
    double f = 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      p.samples[i] = f;
      f += dist(rng);
      if (f < 0.0) f = -f;
      if (f > 1.0) f = 2.0 - f;
      f = std::clamp(f, 0.0, 1.0);
    }
    return p;
  }
};

/// Time-ordered records with force labels. Record length is 1024 for raw
/// spectra and 512 for reconstructed A-scans. Storage is f32 to match the
/// on-disk formats exactly.
struct MScanDataset {
  std::string needle_id;
  std::uint64_t rng_seed = 0;
  std::optional<NeedleModel> model_params;
  std::size_t record_length = kSpectrumLength;
  std::vector<float> samples;
  std::vector<float> forces;

  std::size_t size() const { return forces.size(); }
  bool empty() const { return forces.empty(); }

  std::span<const float> record(std::size_t i) const {
    return std::span<const float>(samples).subspan(i * record_length, record_length);
  }

  void validate() const {
    require(record_length > 0 && samples.size() == forces.size() * record_length, ErrorKind::Shape,
            "dataset holds " + std::to_string(samples.size()) + " samples for " +
                std::to_string(forces.size()) + " records of length " + std::to_string(record_length));
  }
};

/// Spring compression in m. Linear below the saturation knee; above it the
/// response continues as (f_s + f_s tanh((f - f_s)/f_s)) / k, which matches
/// value and slope at the knee and stays strictly increasing.
inline double force_to_displacement(double force, const NeedleModel& model) {
  require(std::isfinite(force), ErrorKind::InvalidInput, "force must be finite");
  require(force >= 0.0, ErrorKind::InvalidInput, "force must be non-negative");
  const double k = model.spring_constant;
  if (!model.saturation_force || force <= *model.saturation_force) return force / k;
  const double fs = *model.saturation_force;
  return (fs + fs * std::tanh((force - fs) / fs)) / k;
}

inline void NeedleModel::validate() const {
  require(std::isfinite(spring_constant) && spring_constant > 0.0, ErrorKind::Config,
          "spring_constant must be > 0");
  require(std::isfinite(rest_gap) && rest_gap > 0.0, ErrorKind::Config, "rest_gap must be > 0");
  require(reflectivity >= 0.0 && reflectivity <= 1.0, ErrorKind::Config, "reflectivity must lie in [0, 1]");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), ErrorKind::Config, "noise_sigma must be >= 0");
  require(source_bandwidth > 0.0 && std::isfinite(source_bandwidth), ErrorKind::Config,
          "source_bandwidth must be > 0");
  require(std::isfinite(drift_rate), ErrorKind::Config, "drift_rate must be finite");
  if (saturation_force)
    require(*saturation_force > 0.0, ErrorKind::Config, "saturation_force must be > 0 when set");
  double prev = wavenumber(0);
  require(std::isfinite(prev) && prev > 0.0, ErrorKind::Config, "chirp must map to positive wavenumbers");
  for (std::size_t i = 1; i < kSpectrumLength; ++i) {
    const double k = wavenumber(i);
    require(k > prev, ErrorKind::Config,
            "chirp map is not strictly increasing at pixel " + std::to_string(i));
    prev = k;
  }
  require(force_to_displacement(1.0, *this) < rest_gap, ErrorKind::Config,
          "displacement at 1 N reaches the rest gap (piston would touch the ferrule)");
}

/// Multiplicative envelope drift for scan n, clamped to +-10%.
inline double envelope_drift(const NeedleModel& model, std::size_t scan_index) {
  return 1.0 + std::clamp(model.drift_rate * static_cast<double>(scan_index), -0.1, 0.1);
}

inline double source_envelope(const NeedleModel& model, double k) {
  const double z = (k - model.source_center) / model.source_bandwidth;
  return std::exp(-0.5 * z * z);
}

/// I_i = S(k_i) * drift(n) * (1 + r^2 + 2 r cos(2 k_i (gap - d))) + noise.
inline RawSpectrum synthesize_spectrum(double displacement, const NeedleModel& model,
                                       std::size_t scan_index, std::mt19937_64& rng) {
  require(std::isfinite(displacement) && displacement >= 0.0, ErrorKind::InvalidInput,
          "displacement must be finite and non-negative");
  require(displacement < model.rest_gap, ErrorKind::PhysicalContact,
          "displacement " + std::to_string(displacement) + " m reaches the rest gap " +
              std::to_string(model.rest_gap) + " m");
  const double gap = model.rest_gap - displacement;
  const double r = model.reflectivity;
  const double drift = envelope_drift(model, scan_index);
  std::normal_distribution<double> noise(0.0, model.noise_sigma > 0.0 ? model.noise_sigma : 1.0);
  RawSpectrum out(kSpectrumLength);
  for (std::size_t i = 0; i < kSpectrumLength; ++i) {
    const double k = model.wavenumber(i);
    out[i] = source_envelope(model, k) * drift * (1.0 + r * r + 2.0 * r * std::cos(2.0 * k * gap));
  }
  if (model.noise_sigma > 0.0)
    for (double& v : out) v += noise(rng);
  return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for one scan, derived from (seed, scan_index).
inline std::mt19937_64 scan_rng(std::uint64_t seed, std::size_t scan_index) {
  return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ static_cast<std::uint64_t>(scan_index)));
}

inline MScanDataset generate_dataset(const ForceProfile& profile, const NeedleModel& model,
                                     std::uint64_t seed, std::string needle_id = "synthetic") {
  require(!profile.samples.empty(), ErrorKind::InvalidInput, "force profile is empty");
  profile.validate();
  model.validate();
  MScanDataset ds;
  ds.needle_id = std::move(needle_id);
  ds.rng_seed = seed;
  ds.model_params = model;
  ds.record_length = kSpectrumLength;
  ds.samples.reserve(profile.samples.size() * kSpectrumLength);
  ds.forces.reserve(profile.samples.size());
  for (std::size_t n = 0; n < profile.samples.size(); ++n) {
    const double f = profile.samples[n];
    auto rng = scan_rng(seed, n);
    RawSpectrum s;
    try {
      s = synthesize_spectrum(force_to_displacement(f, model), model, n, rng);
    } catch (const Error& e) {
      fail(e.kind(), "scan " + std::to_string(n) + ": " + e.what());
    }
    for (double v : s) ds.samples.push_back(static_cast<float>(v));
    ds.forces.push_back(static_cast<float>(f));
  }
  return ds;
}

}  // namespace octforce
