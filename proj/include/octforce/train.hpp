#pragma once

// Supervised force regression: split, normalization, mini-batch Adam training
// with best-epoch selection, checkpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "octforce/adam.hpp"
#include "octforce/error.hpp"
#include "octforce/io.hpp"
#include "octforce/needle_sim.hpp"
#include "octforce/ops.hpp"
#include "octforce/resnet1d.hpp"
#include "octforce/tensor.hpp"

namespace octforce {

enum class Representation { Raw, Recon };

inline std::string_view to_string(Representation r) { return r == Representation::Raw ? "raw" : "recon"; }

inline Representation parse_representation(std::string_view s) {
  if (s == "raw") return Representation::Raw;
  if (s == "recon" || s == "reconstructed") return Representation::Recon;
  fail(ErrorKind::Config, "unknown representation '" + std::string(s) + "' (raw | recon)");
}

inline std::size_t input_length(Representation r) {
  return r == Representation::Raw ? kSpectrumLength : kAScanLength;
}

enum class NormKind { PerPosition, Log1pGlobal };

inline std::string_view to_string(NormKind k) {
  return k == NormKind::PerPosition ? "per_position" : "log1p_global";
}

inline NormKind parse_norm_kind(std::string_view s) {
  if (s == "per_position") return NormKind::PerPosition;
  if (s == "log1p_global") return NormKind::Log1pGlobal;
  fail(ErrorKind::Config, "unknown normalization '" + std::string(s) + "'");
}

inline NormKind default_normalization(Representation r) {
  return r == Representation::Raw ? NormKind::PerPosition : NormKind::Log1pGlobal;
}

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 128;
  AdamConfig adam;
  double val_fraction = 0.2;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  Representation representation = Representation::Raw;
  std::optional<NormKind> normalization;  // empty: chosen by representation

  NormKind norm_kind() const { return normalization.value_or(default_normalization(representation)); }

  void validate() const {
    require(epochs >= 1, ErrorKind::Config, "epochs must be >= 1");
    require(batch_size >= 2, ErrorKind::Config, "batch_size must be >= 2 (batchnorm)");
    require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::Config, "val_fraction must lie in (0, 1)");
    require(!seeds.empty(), ErrorKind::Config, "seeds must be non-empty");
    require(std::isfinite(adam.lr) && adam.lr > 0.0, ErrorKind::Config, "learning rate must be positive");
  }
};

namespace detail {

/// Independent rng streams derived from one run seed.
enum class Stream : std::uint64_t { Init = 1, Split = 2, Shuffle = 3 };

inline std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(s)));
}

/// Fisher-Yates with a modulo draw; unlike std::shuffle the result does not
/// depend on the standard library implementation.
inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace detail

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Uniform random split over scan indices; both sides sorted.
inline Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::Config, "val_fraction must lie in (0, 1)");
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  require(n_val >= 1 && n - n_val >= 2, ErrorKind::Config,
          "dataset of " + std::to_string(n) + " scans is too small to split");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto rng = detail::stream_rng(seed, detail::Stream::Split);
  detail::shuffle(idx, rng);
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

/// Input standardization fitted on training records only.
///   per_position: (x_i - mean_i) / std_i
///   log1p_global: (log1p(max(x, 0)) - mean) / std over all positions
struct Normalizer {
  NormKind kind = NormKind::PerPosition;
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kStdFloor = 1e-12;

  static Normalizer fit(const MScanDataset& ds, std::span<const std::size_t> rows, NormKind kind) {
    require(!rows.empty(), ErrorKind::InvalidInput, "normalizer needs at least one record");
    const std::size_t L = ds.record_length;
    Normalizer nz;
    nz.kind = kind;
    const std::size_t width = kind == NormKind::PerPosition ? L : 1;
    std::vector<double> sum(width, 0.0), sq(width, 0.0);
    for (auto r : rows) {
      const auto rec = ds.record(r);
      for (std::size_t i = 0; i < L; ++i) {
        const double x = transform(kind, rec[i]);
        const std::size_t k = width == 1 ? 0 : i;
        sum[k] += x;
        sq[k] += x * x;
      }
    }
    const double count = static_cast<double>(rows.size() * (width == 1 ? L : 1));
    nz.mean.resize(width);
    nz.std.resize(width);
    for (std::size_t k = 0; k < width; ++k) {
      nz.mean[k] = sum[k] / count;
      const double var = std::max(0.0, sq[k] / count - nz.mean[k] * nz.mean[k]);
      const double s = std::sqrt(var);
      nz.std[k] = s > kStdFloor ? s : 1.0;
    }
    return nz;
  }

  static double transform(NormKind kind, double x) {
    return kind == NormKind::Log1pGlobal ? std::log1p(std::max(x, 0.0)) : x;
  }

  void apply(std::span<const float> rec, double* out) const {
    if (kind == NormKind::PerPosition) {
      require(mean.size() == rec.size(), ErrorKind::RepresentationMismatch,
              "normalizer fitted on length " + std::to_string(mean.size()) + ", record has " +
                  std::to_string(rec.size()));
      for (std::size_t i = 0; i < rec.size(); ++i) out[i] = (rec[i] - mean[i]) / std[i];
    } else {
      for (std::size_t i = 0; i < rec.size(); ++i) out[i] = (transform(kind, rec[i]) - mean[0]) / std[0];
    }
  }
};

/// Builds a [rows, 1, L] input tensor.
inline nn::Tensor make_batch(const MScanDataset& ds, const Normalizer& nz, std::span<const std::size_t> rows) {
  const std::size_t L = ds.record_length;
  std::vector<double> x(rows.size() * L);
  for (std::size_t b = 0; b < rows.size(); ++b) nz.apply(ds.record(rows[b]), x.data() + b * L);
  return nn::Tensor({rows.size(), 1, L}, std::move(x));
}

inline nn::Tensor make_targets(const MScanDataset& ds, std::span<const std::size_t> rows) {
  std::vector<double> y(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) y[b] = ds.forces[rows[b]];
  return nn::Tensor({rows.size(), 1}, std::move(y));
}

inline void check_representation(const MScanDataset& ds, const ArchSpec& spec) {
  require(ds.record_length == spec.input_len, ErrorKind::RepresentationMismatch,
          "dataset records have length " + std::to_string(ds.record_length) + " but the model expects " +
              std::to_string(spec.input_len));
}

/// Eval-mode forces in N for the given rows; builds no backward graph.
inline std::vector<double> predict(ResNet1d& model, const Normalizer& nz, const MScanDataset& ds,
                                   std::span<const std::size_t> rows, std::size_t batch = 256) {
  check_representation(ds, model.spec());
  nn::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); i += batch) {
    const auto chunk = rows.subspan(i, std::min(batch, rows.size() - i));
    const nn::Tensor y = model.forward(make_batch(ds, nz, chunk), nn::Mode::Eval);
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return out;
}

/// 1000 * mean |pred - target|
inline double mae(std::span<const double> pred, std::span<const double> target) {
  require(pred.size() == target.size(), ErrorKind::Shape, "prediction/target length mismatch");
  require(!pred.empty(), ErrorKind::InvalidInput, "MAE of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return 1000.0 * s / static_cast<double>(pred.size());
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse_N2 = 0.0;
  double val_mae_mN = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae_mN = std::numeric_limits<double>::infinity();

  /// epoch,train_mse_N2,val_mae_mN,seconds
  std::string to_csv(bool with_seconds = true) const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_mse_N2,val_mae_mN" << (with_seconds ? ",seconds" : "") << "\n";
    for (const auto& e : epochs) {
      os << e.epoch << ',' << e.train_mse_N2 << ',' << e.val_mae_mN;
      if (with_seconds) os << ',' << e.seconds;
      os << '\n';
    }
    return os.str();
  }
};

struct TrainResult {
  ResNet1d model;
  Normalizer normalizer;
  Representation representation = Representation::Raw;
  TrainHistory history;
  Split split;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

/// One optimizer step on a batch; returns the batch loss.
inline double train_step(ResNet1d& model, Adam& opt, const nn::Tensor& x, const nn::Tensor& y) {
  opt.zero_grad();
  const nn::Tensor loss = nn::mse_loss(model.forward(x, nn::Mode::Train), y);
  const double value = loss.item();
  if (!std::isfinite(value)) return value;
  loss.backward();
  opt.step();
  return value;
}

}  // namespace detail

/// Trains one seed. Returns the parameters of the epoch with the lowest
/// validation MAE together with the full history.
inline TrainResult train(const MScanDataset& ds, const ArchSpec& spec, const TrainConfig& cfg, std::uint64_t seed,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  spec.validate();
  ds.validate();
  check_representation(ds, spec);
  require(spec.input_len == input_length(cfg.representation), ErrorKind::RepresentationMismatch,
          "representation " + std::string(to_string(cfg.representation)) + " needs input length " +
              std::to_string(input_length(cfg.representation)));
  require(ds.size() >= 2 * cfg.batch_size, ErrorKind::InvalidInput,
          "dataset of " + std::to_string(ds.size()) + " scans is smaller than 2 * batch_size");

  auto init_rng = detail::stream_rng(seed, detail::Stream::Init);
  auto shuffle_rng = detail::stream_rng(seed, detail::Stream::Shuffle);
  TrainResult res{build_model(spec, init_rng), {}, cfg.representation, {}, split_indices(ds.size(), cfg.val_fraction, seed)};
  res.normalizer = Normalizer::fit(ds, res.split.train, cfg.norm_kind());
  res.history.seed = seed;

  std::vector<double> val_targets;
  for (auto r : res.split.val) val_targets.push_back(ds.forces[r]);

  Adam opt(res.model.parameters(), cfg.adam);
  std::vector<std::size_t> order = res.split.train;
  std::vector<std::vector<double>> best_state;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - i);
      if (b < 2) break;  // batchnorm needs two samples
      const auto rows = std::span<const std::size_t>(order).subspan(i, b);
      const double loss = detail::train_step(res.model, opt, make_batch(ds, res.normalizer, rows), make_targets(ds, rows));
      require(std::isfinite(loss), ErrorKind::NonFinite, "non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(b);
      seen += b;
    }
    res.model.mark_stats_initialized();
    const auto pred = predict(res.model, res.normalizer, ds, res.split.val);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse_N2 = loss_sum / static_cast<double>(seen);
    rec.val_mae_mN = mae(pred, val_targets);
    require(std::isfinite(rec.val_mae_mN), ErrorKind::NonFinite, "non-finite validation MAE at epoch " + std::to_string(epoch));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.val_mae_mN < res.history.best_val_mae_mN) {
      res.history.best_val_mae_mN = rec.val_mae_mN;
      res.history.best_epoch = epoch;
      best_state = res.model.state();
    }
    res.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.model.load_state(best_state);
  return res;
}

struct ProbeResult {
  std::size_t epochs_run = 0;
  double final_mse_N2 = 0.0;
  double best_mse_N2 = std::numeric_limits<double>::infinity();
  bool reached = false;
};

/// Full-batch fit of a small subset, stopping once the training MSE reaches
/// `target_mse`. Exercises the architecture's capacity, not generalization.
inline ProbeResult capacity_probe(const MScanDataset& ds, const ArchSpec& spec, std::size_t max_epochs,
                                  double target_mse, std::uint64_t seed, const AdamConfig& adam = {},
                                  NormKind norm = NormKind::PerPosition) {
  spec.validate();
  check_representation(ds, spec);
  require(ds.size() >= 2, ErrorKind::InvalidInput, "capacity probe needs >= 2 samples");
  auto init_rng = detail::stream_rng(seed, detail::Stream::Init);
  ResNet1d model = build_model(spec, init_rng);
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Normalizer nz = Normalizer::fit(ds, rows, norm);
  const nn::Tensor x = make_batch(ds, nz, rows);
  const nn::Tensor y = make_targets(ds, rows);
  Adam opt(model.parameters(), adam);
  ProbeResult res;
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    const double loss = detail::train_step(model, opt, x, y);
    require(std::isfinite(loss), ErrorKind::NonFinite, "non-finite probe loss at epoch " + std::to_string(epoch));
    res.epochs_run = epoch;
    res.final_mse_N2 = loss;
    res.best_mse_N2 = std::min(res.best_mse_N2, loss);
    if (loss <= target_mse) {
      res.reached = true;
      break;
    }
  }
  return res;
}

// ---- checkpoints: OCTW weights + JSON sidecar ----

struct Checkpoint {
  ResNet1d model;
  Normalizer normalizer;
  Representation representation;
};

inline void save_checkpoint(const std::filesystem::path& path, ResNet1d& model, const Normalizer& nz,
                            Representation rep) {
  std::vector<WeightEntry> entries;
  for (const auto& p : model.parameters())
    entries.push_back({p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  for (const auto& b : model.buffers()) entries.push_back({b.name, {b.values->size()}, *b.values});
  entries.push_back({"input.mean", {nz.mean.size()}, nz.mean});
  entries.push_back({"input.std", {nz.std.size()}, nz.std});
  write_weights(path, entries);
  json side{{"arch", to_json(model.spec())},
            {"representation", std::string(to_string(rep))},
            {"normalization", std::string(to_string(nz.kind))}};
  write_json(sidecar_path(path), side);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const json side = read_json(sidecar_path(path));
  ArchSpec spec;
  Representation rep;
  NormKind kind;
  try {
    spec = arch_spec_from_json(side.at("arch"));
    rep = parse_representation(side.at("representation").get<std::string>());
    kind = parse_norm_kind(side.at("normalization").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, sidecar_path(path).string() + ": " + e.what());
  }
  std::mt19937_64 rng(0);
  Checkpoint ck{build_model(spec, rng), {}, rep};
  ck.normalizer.kind = kind;

  const auto entries = read_weights(path);
  std::vector<std::vector<double>> state;
  std::size_t i = 0;
  auto take = [&](const std::string& name, std::size_t numel) {
    require(i < entries.size() && entries[i].name == name, ErrorKind::Format,
            path.string() + ": expected entry " + name + (i < entries.size() ? ", found " + entries[i].name : ""));
    require(entries[i].data.size() == numel, ErrorKind::Format, path.string() + ": size mismatch for " + name);
    return entries[i++].data;
  };
  for (const auto& p : ck.model.parameters()) state.push_back(take(p.name, p.tensor.numel()));
  for (const auto& b : ck.model.buffers()) state.push_back(take(b.name, b.values->size()));
  const std::size_t norm_width = kind == NormKind::PerPosition ? spec.input_len : 1;
  ck.normalizer.mean = take("input.mean", norm_width);
  ck.normalizer.std = take("input.std", norm_width);
  require(i == entries.size(), ErrorKind::Format, path.string() + ": unexpected trailing entries");
  ck.model.load_state(state);
  return ck;
}

}  // namespace octforce
