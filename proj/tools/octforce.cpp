// octforce: simulate, reconstruct, train, evaluate and benchmark needle force
// calibration experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "octforce.hpp"

namespace {

using namespace octforce;
namespace fs = std::filesystem;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::InvalidInput: return 2;
    case ErrorKind::Io:
    case ErrorKind::Format: return 3;
    case ErrorKind::RepresentationMismatch:
    case ErrorKind::MissingDataset: return 4;
    case ErrorKind::PhysicalContact:
    case ErrorKind::UnsupportedLength:
    case ErrorKind::Shape:
    case ErrorKind::NoPeak:
    case ErrorKind::DegenerateFit:
    case ErrorKind::NonFinite: return 5;
    case ErrorKind::Contract:
    case ErrorKind::UninitializedStats: return 6;
  }
  return 1;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool paper_scale = false;
  std::optional<std::size_t> n;
  std::optional<std::size_t> epochs;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment JSON (defaults to the desk-scale config)");
  app->add_option("--seed", c.seed, "seed override");
  app->add_option("--out", c.out, "output path or directory");
  app->add_option("--jobs", c.jobs, "worker threads for matrix cells")->check(CLI::PositiveNumber);
  app->add_flag("--paper-scale", c.paper_scale, "180k scans, 150 epochs, 5 seeds");
  app->add_option("--n", c.n, "scans per needle")->check(CLI::PositiveNumber);
  app->add_option("--epochs", c.epochs, "training epochs")->check(CLI::PositiveNumber);
}

/// Config file (or defaults), then --paper-scale, then individual flags.
ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment(c.config);
  if (c.paper_scale) cfg.apply_paper_scale();
  if (c.n)
    for (auto& nd : cfg.needles) nd.profile.n = *c.n;
  if (c.epochs) cfg.train.epochs = *c.epochs;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Needle force calibration workbench: OCT simulation, reconstruction and 1D ResNet training"};
  app.require_subcommand(1);

  Common common;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic raw dataset (OCTF)");
  std::size_t needle_index = 0;
  add_common(sim, common);
  sim->add_option("--needle", needle_index, "index into the config's needle list");

  auto* rec = app.add_subcommand("reconstruct", "raw OCTF -> A-scan OCTA");
  std::string in_path;
  add_common(rec, common);
  rec->add_option("--in", in_path, "input OCTF file")->required();

  auto* trn = app.add_subcommand("train", "train one model on an OCTF or OCTA file");
  std::string data_path, arch = "ResNet6";
  add_common(trn, common);
  trn->add_option("--data", data_path, "dataset file")->required();
  trn->add_option("--arch", arch, "ResNet6 | ResNet18 | ResNet34");

  auto* ev = app.add_subcommand("eval", "MAE of a checkpoint over a dataset");
  std::string ckpt;
  add_common(ev, common);
  ev->add_option("--checkpoint", ckpt, "OCTW checkpoint")->required();
  ev->add_option("--data", data_path, "dataset file")->required();

  auto* bench = app.add_subcommand("bench", "single-scan inference latency of a checkpoint");
  std::size_t warmup = 10, reps = 100;
  add_common(bench, common);
  bench->add_option("--checkpoint", ckpt, "OCTW checkpoint")->required();
  bench->add_option("--warmup", warmup, "discarded warmup runs");
  bench->add_option("--reps", reps, "timed runs (>= 30)");

  auto* base = app.add_subcommand("baseline", "peak tracking + linear fit MAE");
  add_common(base, common);
  base->add_option("--data", data_path, "dataset file")->required();

  auto* mat = app.add_subcommand("matrix", "full experiment: all needles x variants x representations x seeds");
  add_common(mat, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve_config(common);
    std::ostream& out = std::cout;
    if (*sim) {
      ExperimentConfig c = cfg;
      require(needle_index < c.needles.size(), ErrorKind::Config, "--needle out of range");
      if (common.seed) c.needles[needle_index].seed = *common.seed;
      cmd_simulate(c, needle_index, common.out.empty() ? "data/raw.octf" : common.out, out);
    } else if (*rec) {
      cmd_reconstruct(in_path, cfg, common.out.empty() ? fs::path(in_path).replace_extension(".octa") : fs::path(common.out),
                      out);
    } else if (*trn) {
      cmd_train(data_path, parse_variant(arch), cfg, common.seed.value_or(cfg.train.seeds.front()),
                common.out.empty() ? "runs/train" : common.out, out);
    } else if (*ev) {
      cmd_eval(ckpt, data_path, out);
    } else if (*bench) {
      cmd_bench(ckpt, warmup, reps, out);
    } else if (*base) {
      cmd_baseline(data_path, cfg, common.seed.value_or(cfg.train.seeds.front()), out);
    } else if (*mat) {
      ExperimentConfig c = cfg;
      if (common.seed) c.train.seeds = {*common.seed};
      cmd_matrix(c, common.out.empty() ? c.output_dir : common.out, common.jobs, out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
