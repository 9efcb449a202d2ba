#pragma once

// Command implementations shared by the CLI and the acceptance runner. Each
// command prints the config hash and the seeds it used to `out`.

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "octforce/error.hpp"
#include "octforce/eval.hpp"
#include "octforce/experiment.hpp"
#include "octforce/io.hpp"
#include "octforce/recon.hpp"
#include "octforce/train.hpp"

namespace octforce {

namespace fs = std::filesystem;

inline void print_header(std::ostream& out, const char* cmd, const ExperimentConfig& cfg) {
  out << cmd << ": config_hash " << config_hash(cfg) << "\n";
}

inline void print_seeds(std::ostream& out, const char* label, const std::vector<std::uint64_t>& seeds) {
  out << label;
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : " ") << seeds[i];
  out << "\n";
}

/// Simulates the needle at `needle_index` and writes OCTF plus sidecar.
inline MScanDataset cmd_simulate(const ExperimentConfig& cfg, std::size_t needle_index, const fs::path& out_path,
                                 std::ostream& out) {
  cfg.validate();
  require(needle_index < cfg.needles.size(), ErrorKind::Config, "needle index out of range");
  const NeedleSpec& n = cfg.needles[needle_index];
  print_header(out, "simulate", cfg);
  print_seeds(out, "seed", {n.seed});
  MScanDataset ds = n.simulate();
  write_dataset(out_path, ds);
  const auto [lo, hi] = std::minmax_element(ds.forces.begin(), ds.forces.end());
  out << "wrote " << out_path.string() << ": needle " << ds.needle_id << ", N_t " << ds.size() << ", force range ["
      << *lo << ", " << *hi << "] N\n";
  return ds;
}

/// Model used to derive the chirp table: the dataset's own parameters when
/// present, otherwise the config needle of the same id, otherwise the first.
inline NeedleModel chirp_source(const MScanDataset& ds, const ExperimentConfig& cfg) {
  if (ds.model_params) return *ds.model_params;
  for (const auto& n : cfg.needles)
    if (n.id == ds.needle_id) return n.model;
  return cfg.needles.front().model;
}

inline MScanDataset cmd_reconstruct(const fs::path& in_path, const ExperimentConfig& cfg, const fs::path& out_path,
                                    std::ostream& out) {
  print_header(out, "reconstruct", cfg);
  const MScanDataset raw = read_dataset(in_path);
  require(raw.record_length == kSpectrumLength, ErrorKind::RepresentationMismatch,
          in_path.string() + " does not hold raw 1024-sample spectra");
  print_seeds(out, "dataset seed", {raw.rng_seed});
  MScanDataset rec = reconstruct_mscan(raw, cfg.recon.resolve(chirp_source(raw, cfg)));
  write_dataset(out_path, rec);
  out << "wrote " << out_path.string() << ": N_t " << rec.size() << ", " << rec.record_length << " bins per A-scan\n";
  return rec;
}

inline Representation representation_of(const MScanDataset& ds) {
  return ds.record_length == kSpectrumLength ? Representation::Raw : Representation::Recon;
}

/// Trains one seed; writes model.octw, model.json and history.csv to `out_dir`.
inline TrainHistory cmd_train(const fs::path& data_path, Variant variant, const ExperimentConfig& cfg,
                              std::uint64_t seed, const fs::path& out_dir, std::ostream& out) {
  print_header(out, "train", cfg);
  print_seeds(out, "seed", {seed});
  const MScanDataset ds = read_dataset(data_path);
  TrainConfig tc = cfg.train;
  tc.representation = representation_of(ds);
  const ArchSpec spec = ArchSpec::make(variant, ds.record_length);
  TrainResult res = train(ds, spec, tc, seed, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " train_mse " << e.train_mse_N2 << " N^2, val_mae " << e.val_mae_mN << " mN, "
        << e.seconds << " s\n"
        << std::flush;
  });
  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "model.octw", res.model, res.normalizer, res.representation);
  write_text(out_dir / "history.csv", res.history.to_csv());
  out << "best epoch " << res.history.best_epoch << ", val_mae " << res.history.best_val_mae_mN << " mN\n";
  return res.history;
}

struct EvalRow {
  std::string variant;
  std::string representation;
  std::size_t scans = 0;
  double mae_mN = 0.0;
};

/// MAE of a checkpoint over every record of `data_path`.
inline EvalRow cmd_eval(const fs::path& ckpt_path, const fs::path& data_path, std::ostream& out) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const MScanDataset ds = read_dataset(data_path);
  require(ds.record_length == ck.model.spec().input_len, ErrorKind::RepresentationMismatch,
          data_path.string() + " has " + std::to_string(ds.record_length) + "-sample records but " +
              ckpt_path.string() + " expects " + std::to_string(ck.model.spec().input_len) + " (" +
              std::string(to_string(ck.representation)) + ")");
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto pred = predict(ck.model, ck.normalizer, ds, rows);
  const std::vector<double> target(ds.forces.begin(), ds.forces.end());
  EvalRow row{std::string(to_string(ck.model.spec().variant)), std::string(to_string(ck.representation)), ds.size(),
              mae(pred, target)};
  out << "variant,representation,scans,mae_mN\n"
      << row.variant << ',' << row.representation << ',' << row.scans << ',' << row.mae_mN << "\n";
  return row;
}

inline LatencyStats cmd_bench(const fs::path& ckpt_path, std::size_t warmup, std::size_t reps, std::ostream& out) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  const LatencyStats s = benchmark_inference(ck.model, warmup, reps);
  out << to_string(ck.model.spec().variant) << " (" << to_string(ck.representation) << "): median " << s.median_ms
      << " ms, IQR " << s.iqr_ms() << " ms over " << s.reps << " reps\n";
  return s;
}

/// Peak tracking plus linear fit. Raw input is reconstructed first.
inline BaselineResult cmd_baseline(const fs::path& data_path, const ExperimentConfig& cfg, std::uint64_t seed,
                                   std::ostream& out) {
  print_header(out, "baseline", cfg);
  print_seeds(out, "split seed", {seed});
  MScanDataset ds = read_dataset(data_path);
  if (ds.record_length == kSpectrumLength) ds = reconstruct_mscan(ds, cfg.recon.resolve(chirp_source(ds, cfg)));
  const Split split = split_indices(ds.size(), cfg.train.val_fraction, seed);
  const BaselineResult r = evaluate_linear_baseline(ds, split);
  out << "force = " << r.fit.slope << " * depth_bin + " << r.fit.intercept << "; val_mae " << r.val_mae_mN
      << " mN over " << r.val_points << " scans (" << r.skipped << " without peak)\n";
  return r;
}

/// Simulates and reconstructs every needle, runs the matrix, writes reports.
inline std::vector<EvalReport> cmd_matrix(const ExperimentConfig& cfg, const fs::path& out_dir, std::size_t jobs,
                                          std::ostream& out) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  print_header(out, "matrix", cfg);
  print_seeds(out, "train seeds", cfg.train.seeds);
  std::vector<NeedleData> data;
  for (const auto& n : cfg.needles) {
    out << "simulating " << n.id << " (" << n.profile.n << " scans, seed " << n.seed << ")\n" << std::flush;
    NeedleData nd;
    nd.id = n.id;
    MScanDataset raw = n.simulate();
    const bool need_recon = std::find(cfg.representations.begin(), cfg.representations.end(),
                                      Representation::Recon) != cfg.representations.end();
    if (need_recon) nd.recon = reconstruct_mscan(raw, cfg.recon.resolve(n.model));
    nd.raw = std::move(raw);
    data.push_back(std::move(nd));
  }
  MatrixOptions opt;
  opt.jobs = jobs;
  opt.bench_warmup = cfg.bench.warmup;
  opt.bench_reps = cfg.bench.reps;
  opt.config_hash = hash;
  opt.log = [&](const std::string& s) { out << s << "\n" << std::flush; };
  auto reports = run_experiment_matrix(data, cfg.variants, cfg.representations, cfg.train, opt);
  write_matrix_outputs(out_dir, reports, hash);
  out << "\n" << render_table_md(reports) << "\nwrote results.csv, table.md, reldiff.csv, env.json to "
      << out_dir.string() << "\n";
  return reports;
}

}  // namespace octforce
