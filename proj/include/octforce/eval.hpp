#pragma once

// Metrics, latency benchmark, experiment matrix and report rendering.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#if defined(__unix__)
#include <unistd.h>
#endif

#include "octforce/error.hpp"
#include "octforce/io.hpp"
#include "octforce/recon.hpp"
#include "octforce/resnet1d.hpp"
#include "octforce/tensor.hpp"
#include "octforce/train.hpp"

namespace octforce {

/// (mae_recon - mae_raw) / mae_recon; positive when raw input wins.
inline double relative_difference(double mae_raw, double mae_recon) {
  require(std::isfinite(mae_raw) && std::isfinite(mae_recon), ErrorKind::InvalidInput, "MAE values must be finite");
  require(mae_recon != 0.0, ErrorKind::InvalidInput, "relative difference with zero reconstructed MAE");
  return (mae_recon - mae_raw) / mae_recon;
}

inline double mean_of(std::span<const double> v) {
  require(!v.empty(), ErrorKind::InvalidInput, "mean of empty sequence");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for a single value.
inline double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Linear-interpolated quantile of sorted data, q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorKind::InvalidInput, "quantile of empty sequence");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  return interpolate_at(sorted, pos);
}

inline std::uint64_t fnv1a64(std::span<const char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string dataset_hash(const MScanDataset& ds) { return hex64(fnv1a64(encode_dataset(ds))); }

// ---- latency ----

struct LatencyStats {
  double median_ms = 0.0;
  double q1_ms = 0.0;
  double q3_ms = 0.0;
  std::size_t reps = 0;

  double iqr_ms() const { return q3_ms - q1_ms; }
};

/// Single-scan (batch 1) eval-mode forward wall time. Fails if any backward
/// record is allocated during the timed region.
inline LatencyStats benchmark_inference(ResNet1d& model, std::size_t warmup = 10, std::size_t reps = 100,
                                        std::uint64_t seed = 0) {
  require(reps >= 30, ErrorKind::Config, "benchmark needs reps >= 30");
  const std::size_t L = model.spec().input_len;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> x(L);
  for (double& v : x) v = dist(rng);
  const nn::Tensor input({1, 1, L}, x);
  model.mark_stats_initialized();

  nn::NoGradGuard guard;
  const std::size_t records_before = nn::backward_records_created();
  double sink = 0.0;
  for (std::size_t i = 0; i < warmup; ++i) sink += model.forward(input, nn::Mode::Eval).item();
  std::vector<double> ms(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const nn::Tensor y = model.forward(input, nn::Mode::Eval);
    const auto t1 = std::chrono::steady_clock::now();
    sink += y.item();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  require(nn::backward_records_created() == records_before, ErrorKind::Contract,
          "eval-mode inference allocated backward records");
  require(std::isfinite(sink), ErrorKind::NonFinite, "benchmark produced non-finite outputs");
  std::sort(ms.begin(), ms.end());
  return {quantile_sorted(ms, 0.5), quantile_sorted(ms, 0.25), quantile_sorted(ms, 0.75), reps};
}

// ---- classical baseline ----

struct BaselineResult {
  LinearBaseline fit;
  double val_mae_mN = 0.0;
  std::size_t skipped = 0;  // scans without a detectable peak
  std::size_t train_points = 0;
  std::size_t val_points = 0;
};

/// Peak depth per reconstructed A-scan, linear fit on the train split, MAE on
/// the validation split. Scans whose A-scan has no peak are skipped.
inline BaselineResult evaluate_linear_baseline(const MScanDataset& recon, const Split& split) {
  require(recon.record_length == kAScanLength, ErrorKind::RepresentationMismatch,
          "linear baseline needs reconstructed 512-bin A-scans");
  std::vector<std::optional<double>> depth(recon.size());
  BaselineResult res;
  std::vector<double> a(kAScanLength);
  for (std::size_t n = 0; n < recon.size(); ++n) {
    const auto rec = recon.record(n);
    std::copy(rec.begin(), rec.end(), a.begin());
    try {
      depth[n] = peak_displacement(a);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoPeak) throw;
      ++res.skipped;
    }
  }
  std::vector<double> xs, ys;
  for (auto i : split.train)
    if (depth[i]) {
      xs.push_back(*depth[i]);
      ys.push_back(recon.forces[i]);
    }
  res.fit = fit_linear_baseline(xs, ys);
  res.train_points = xs.size();
  std::vector<double> pred, target;
  for (auto i : split.val)
    if (depth[i]) {
      pred.push_back(res.fit.predict(*depth[i]));
      target.push_back(recon.forces[i]);
    }
  res.val_points = pred.size();
  res.val_mae_mN = mae(pred, target);
  return res;
}

// ---- experiment matrix ----

struct NeedleData {
  std::string id;
  std::optional<MScanDataset> raw;
  std::optional<MScanDataset> recon;

  const MScanDataset* get(Representation r) const {
    const auto& d = r == Representation::Raw ? raw : recon;
    return d ? &*d : nullptr;
  }
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<double> mae_mN;  // empty when the run failed
  std::size_t best_epoch = 0;
  double train_seconds = 0.0;
  std::string error;
  TrainHistory history;
};

struct EvalReport {
  std::string needle_id;
  Variant variant = Variant::ResNet6;
  Representation representation = Representation::Raw;
  std::vector<SeedRun> runs;
  std::optional<LatencyStats> latency;
  std::string dataset_hash;
  std::string config_hash;

  std::vector<double> maes() const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.mae_mN) v.push_back(*r.mae_mN);
    return v;
  }
  bool complete() const { return !runs.empty() && maes().size() == runs.size(); }
  std::optional<double> mean_mae() const {
    const auto v = maes();
    return v.empty() ? std::nullopt : std::optional<double>(mean_of(v));
  }
  double std_mae() const { return stddev_of(maes()); }
};

struct MatrixOptions {
  std::size_t jobs = 1;
  std::size_t bench_warmup = 10;
  std::size_t bench_reps = 100;
  std::string config_hash;
  std::function<void(const std::string&)> log;
};

namespace detail {

struct MatrixTask {
  std::size_t report;
  std::size_t run;
};

}  // namespace detail

/// Trains every (needle, variant, representation, seed) run on `opt.jobs`
/// worker threads, then benchmarks each cell's first successful model alone.
/// A failed run is recorded in its SeedRun and does not abort the matrix.
inline std::vector<EvalReport> run_experiment_matrix(const std::vector<NeedleData>& needles,
                                                     const std::vector<Variant>& variants,
                                                     const std::vector<Representation>& reps,
                                                     const TrainConfig& cfg, const MatrixOptions& opt = {}) {
  cfg.validate();
  require(!needles.empty() && !variants.empty() && !reps.empty(), ErrorKind::Config,
          "experiment matrix needs at least one needle, variant and representation");
  for (const auto& nd : needles)
    for (auto r : reps)
      require(nd.get(r) != nullptr, ErrorKind::MissingDataset,
              "missing " + std::string(to_string(r)) + " dataset for needle " + nd.id);

  std::vector<EvalReport> reports;
  std::vector<detail::MatrixTask> tasks;
  for (const auto& nd : needles)
    for (auto v : variants)
      for (auto r : reps) {
        EvalReport rep;
        rep.needle_id = nd.id;
        rep.variant = v;
        rep.representation = r;
        rep.dataset_hash = dataset_hash(*nd.get(r));
        rep.config_hash = opt.config_hash;
        for (auto s : cfg.seeds) {
          rep.runs.push_back({});
          rep.runs.back().seed = s;
          tasks.push_back({reports.size(), rep.runs.size() - 1});
        }
        reports.push_back(std::move(rep));
      }

  std::vector<std::optional<TrainResult>> first_models(reports.size());
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto log = [&](const std::string& msg) {
    if (!opt.log) return;
    std::lock_guard lock(mu);
    opt.log(msg);
  };

  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      auto& rep = reports[tasks[t].report];
      SeedRun& run = rep.runs[tasks[t].run];
      const auto* nd = &needles[0];
      for (const auto& n : needles)
        if (n.id == rep.needle_id) nd = &n;
      const std::string tag = rep.needle_id + "/" + std::string(to_string(rep.variant)) + "/" +
                              std::string(to_string(rep.representation)) + "/seed " + std::to_string(run.seed);
      log("start " + tag);
      try {
        TrainConfig c = cfg;
        c.representation = rep.representation;
        const ArchSpec spec = ArchSpec::make(rep.variant, input_length(rep.representation));
        TrainResult res = train(*nd->get(rep.representation), spec, c, run.seed, [&](const EpochRecord& e) {
          log(tag + " epoch " + std::to_string(e.epoch) + " mse " + std::to_string(e.train_mse_N2) +
              " val_mae " + std::to_string(e.val_mae_mN) + " mN");
        });
        run.mae_mN = res.history.best_val_mae_mN;
        run.best_epoch = res.history.best_epoch;
        for (const auto& e : res.history.epochs) run.train_seconds += e.seconds;
        run.history = res.history;
        std::lock_guard lock(mu);
        if (!first_models[tasks[t].report]) first_models[tasks[t].report].emplace(std::move(res));
      } catch (const std::exception& e) {
        run.error = e.what();
        log("failed " + tag + ": " + run.error);
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // Benchmarks run after the join so cells do not contend for cores.
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (first_models[i]) {
      reports[i].latency = benchmark_inference(first_models[i]->model, opt.bench_warmup, opt.bench_reps);
      log("bench " + reports[i].needle_id + "/" + std::string(to_string(reports[i].variant)) + "/" +
          std::string(to_string(reports[i].representation)) + " median " +
          std::to_string(reports[i].latency->median_ms) + " ms");
    }
  return reports;
}

// ---- rendering ----

/// Inference times of the reference study, ms, for context only.
inline std::optional<double> reference_latency_ms(Variant v) {
  switch (v) {
    case Variant::ResNet6: return 1.11;
    case Variant::ResNet18: return 3.56;
    case Variant::ResNet34: return 6.43;
  }
  return std::nullopt;
}

inline std::string format_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// One row per (cell, seed).
inline std::string render_results_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "needle,variant,representation,seed,mae_mN,best_epoch,status,dataset_hash,config_hash\n";
  for (const auto& r : reports)
    for (const auto& run : r.runs) {
      os << r.needle_id << ',' << to_string(r.variant) << ',' << to_string(r.representation) << ',' << run.seed << ',';
      if (run.mae_mN) os << *run.mae_mN;
      os << ',' << run.best_epoch << ',' << (run.mae_mN ? "ok" : "failed") << ',' << r.dataset_hash << ','
         << r.config_hash << '\n';
    }
  return os.str();
}

namespace detail {

inline const EvalReport* find_report(const std::vector<EvalReport>& reports, const std::string& needle, Variant v,
                                     Representation r) {
  for (const auto& rep : reports)
    if (rep.needle_id == needle && rep.variant == v && rep.representation == r) return &rep;
  return nullptr;
}

inline std::vector<std::string> needle_order(const std::vector<EvalReport>& reports) {
  std::vector<std::string> ids;
  for (const auto& r : reports)
    if (std::find(ids.begin(), ids.end(), r.needle_id) == ids.end()) ids.push_back(r.needle_id);
  return ids;
}

inline std::vector<Variant> variant_order(const std::vector<EvalReport>& reports) {
  std::vector<Variant> vs;
  for (const auto& r : reports)
    if (std::find(vs.begin(), vs.end(), r.variant) == vs.end()) vs.push_back(r.variant);
  return vs;
}

}  // namespace detail

/// Rows are variants; each needle contributes a raw and a recon MAE column
/// (mean ± sample std over seeds, mN); the last column is the median
/// single-scan latency of the raw-input model.
inline std::string render_table_md(const std::vector<EvalReport>& reports) {
  const auto needles = detail::needle_order(reports);
  std::ostringstream os;
  os << "| Architecture |";
  for (const auto& n : needles) os << ' ' << n << " raw |" << ' ' << n << " recon |";
  os << " Inf. time (ms) |\n|---|";
  for (std::size_t i = 0; i < needles.size(); ++i) os << "---|---|";
  os << "---|\n";
  for (auto v : detail::variant_order(reports)) {
    os << "| " << to_string(v) << " |";
    std::optional<LatencyStats> lat;
    for (const auto& n : needles)
      for (auto r : {Representation::Raw, Representation::Recon}) {
        const auto* rep = detail::find_report(reports, n, v, r);
        if (rep && rep->mean_mae()) {
          os << ' ' << format_fixed(*rep->mean_mae()) << " ± " << format_fixed(rep->std_mae());
          if (!rep->complete()) os << " (" << rep->maes().size() << "/" << rep->runs.size() << " seeds)";
          os << " |";
        } else {
          os << " n/a |";
        }
        if (rep && rep->latency && (!lat || r == Representation::Raw)) lat = rep->latency;
      }
    if (lat)
      os << ' ' << format_fixed(lat->median_ms, 3) << " (IQR " << format_fixed(lat->iqr_ms(), 3) << ") |\n";
    else
      os << " n/a |\n";
  }
  os << "\nMAE in mN, mean ± sample standard deviation over seeds. Latency is the median single-scan "
        "forward time on this host.\n\nReference inference times (ms, different hardware, context only):";
  for (auto v : {Variant::ResNet6, Variant::ResNet18, Variant::ResNet34})
    os << ' ' << to_string(v) << ' ' << format_fixed(*reference_latency_ms(v)) << (v == Variant::ResNet34 ? "\n" : ",");
  return os.str();
}

struct RelDiffRow {
  std::string needle_id;
  Variant variant;
  double mae_raw_mN;
  double mae_recon_mN;
  double rel_diff;
};

inline std::vector<RelDiffRow> relative_differences(const std::vector<EvalReport>& reports) {
  std::vector<RelDiffRow> rows;
  for (const auto& n : detail::needle_order(reports))
    for (auto v : detail::variant_order(reports)) {
      const auto* raw = detail::find_report(reports, n, v, Representation::Raw);
      const auto* rec = detail::find_report(reports, n, v, Representation::Recon);
      if (!raw || !rec || !raw->mean_mae() || !rec->mean_mae()) continue;
      rows.push_back({n, v, *raw->mean_mae(), *rec->mean_mae(), relative_difference(*raw->mean_mae(), *rec->mean_mae())});
    }
  return rows;
}

/// Positive rel_diff: raw input gives the lower MAE.
inline std::string render_reldiff_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "needle,variant,mae_raw_mN,mae_recon_mN,relative_difference,raw_wins\n";
  for (const auto& r : relative_differences(reports))
    os << r.needle_id << ',' << to_string(r.variant) << ',' << r.mae_raw_mN << ',' << r.mae_recon_mN << ','
       << r.rel_diff << ',' << (r.rel_diff > 0.0 ? "true" : "false") << '\n';
  return os.str();
}

inline std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model name", 0) == 0) {
      const auto p = line.find(':');
      return p == std::string::npos ? line : line.substr(line.find_first_not_of(' ', p + 1));
    }
  return "unknown";
}

inline std::string host_name() {
#if defined(__unix__)
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) == 0) return buf;
#endif
  return "unknown";
}

inline json environment_json() {
  json j;
  j["host"] = host_name();
  j["cpu"] = cpu_model();
  j["logical_cores"] = std::thread::hardware_concurrency();
  j["precision"] = "float64";
#if defined(__VERSION__)
  j["compiler"] = __VERSION__;
#endif
  j["cxx_standard"] = static_cast<long>(__cplusplus);
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
  return j;
}

/// Host details, hashes and every latency measurement.
inline json render_env_json(const std::vector<EvalReport>& reports, const std::string& config_hash) {
  json j = environment_json();
  j["config_hash"] = config_hash;
  json hashes = json::object();
  json lat = json::array();
  for (const auto& r : reports) {
    hashes[r.needle_id + "/" + std::string(to_string(r.representation))] = r.dataset_hash;
    if (r.latency)
      lat.push_back({{"needle", r.needle_id},
                     {"variant", std::string(to_string(r.variant))},
                     {"representation", std::string(to_string(r.representation))},
                     {"median_ms", r.latency->median_ms},
                     {"q1_ms", r.latency->q1_ms},
                     {"q3_ms", r.latency->q3_ms},
                     {"reps", r.latency->reps}});
  }
  j["dataset_hashes"] = hashes;
  j["latency"] = lat;
  json ref = json::object();
  for (auto v : {Variant::ResNet6, Variant::ResNet18, Variant::ResNet34})
    ref[std::string(to_string(v))] = *reference_latency_ms(v);
  j["reference_latency_ms"] = ref;
  return j;
}

/// Writes results.csv, table.md, reldiff.csv and env.json into `dir`.
inline void write_matrix_outputs(const std::filesystem::path& dir, const std::vector<EvalReport>& reports,
                                 const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  write_text(dir / "results.csv", render_results_csv(reports));
  write_text(dir / "table.md", render_table_md(reports));
  write_text(dir / "reldiff.csv", render_reldiff_csv(reports));
  write_json(dir / "env.json", render_env_json(reports, config_hash));
}

}  // namespace octforce
