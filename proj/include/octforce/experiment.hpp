#pragma once

// Experiment configuration: one JSON document describing needles, force
// profiles, reconstruction, architectures and training. Every seed is
// explicit; the config hash is taken over the effective (post-override) JSON.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "octforce/error.hpp"
#include "octforce/eval.hpp"
#include "octforce/io.hpp"
#include "octforce/needle_sim.hpp"
#include "octforce/recon.hpp"
#include "octforce/resnet1d.hpp"
#include "octforce/train.hpp"

namespace octforce {

inline constexpr std::size_t kDeskScans = 20000;
inline constexpr std::size_t kDeskEpochs = 30;
inline constexpr std::size_t kPaperScans = 180000;
inline constexpr std::size_t kPaperEpochs = 150;

struct ProfileSpec {
  ProfileKind kind = ProfileKind::Triangle;
  std::size_t n = kDeskScans;
  double periods = 10.0;
  double peak = 1.0;
  double from = 0.0;
  double to = 1.0;
  double step = 0.005;
  std::uint64_t seed = 0;  // random walk only

  ForceProfile build() const {
    switch (kind) {
      case ProfileKind::Ramp: return ForceProfile::ramp(n, from, to);
      case ProfileKind::Triangle: return ForceProfile::triangle(n, periods, peak);
      case ProfileKind::Sinusoid: return ForceProfile::sinusoid(n, periods, peak);
      case ProfileKind::RandomWalk: return ForceProfile::random_walk(n, seed, step);
    }
    fail(ErrorKind::Config, "unknown profile kind");
  }
};

struct NeedleSpec {
  std::string id = "synthetic-1";
  NeedleModel model = NeedleModel::defaults();
  ProfileSpec profile;
  std::uint64_t seed = 1234;

  MScanDataset simulate() const { return generate_dataset(profile.build(), model, seed, id); }
};

/// "identity" disables dechirping, "model" inverts the needle's chirp
/// polynomial, an explicit array is used verbatim.
struct ReconSpec {
  double damping = 0.05;
  std::variant<std::string, std::vector<double>> chirp_table = std::string("model");
  Window window = Window::Hann;
  DcInit dc_init = DcInit::FirstScan;

  ReconConfig resolve(const NeedleModel& model) const {
    ReconConfig cfg;
    cfg.damping = damping;
    cfg.window = window;
    cfg.dc_init = dc_init;
    if (const auto* s = std::get_if<std::string>(&chirp_table)) {
      if (*s == "identity")
        cfg.chirp_table = identity_chirp_table();
      else if (*s == "model")
        cfg.chirp_table = chirp_table_from_model(model);
      else
        fail(ErrorKind::Config, "chirp_table must be \"identity\", \"model\" or an array, got \"" + *s + "\"");
    } else {
      cfg.chirp_table = std::get<std::vector<double>>(chirp_table);
    }
    cfg.validate();
    return cfg;
  }
};

struct BenchSpec {
  std::size_t warmup = 10;
  std::size_t reps = 100;
};

struct ExperimentConfig {
  std::vector<NeedleSpec> needles{NeedleSpec{}};
  ReconSpec recon;
  std::vector<Variant> variants{Variant::ResNet6};
  std::vector<Representation> representations{Representation::Raw, Representation::Recon};
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = kDeskEpochs;
    t.seeds = {1, 2};
    return t;
  }();
  BenchSpec bench;
  std::string output_dir = "runs/desk";

  /// Scan count, epochs and seed count of the reference protocol.
  void apply_paper_scale() {
    for (auto& n : needles) n.profile.n = kPaperScans;
    train.epochs = kPaperEpochs;
    train.seeds = {1, 2, 3, 4, 5};
  }

  void validate() const {
    require(!needles.empty(), ErrorKind::Config, "config needs at least one needle");
    for (const auto& n : needles) {
      n.model.validate();
      require(n.profile.n > 0, ErrorKind::Config, "needle " + n.id + ": profile length must be positive");
    }
    require(!variants.empty(), ErrorKind::Config, "config needs at least one variant");
    require(!representations.empty(), ErrorKind::Config, "config needs at least one representation");
    train.validate();
    require(bench.reps >= 30, ErrorKind::Config, "bench.reps must be >= 30");
  }

  const NeedleSpec& needle(const std::string& id) const {
    for (const auto& n : needles)
      if (n.id == id) return n;
    fail(ErrorKind::Config, "no needle with id '" + id + "' in config");
  }
};

// ---- JSON ----

inline json to_json(const ProfileSpec& p) {
  return json{{"kind", std::string(to_string(p.kind))}, {"n", p.n},       {"periods", p.periods},
              {"peak", p.peak},                           {"from", p.from}, {"to", p.to},
              {"step", p.step},                           {"seed", p.seed}};
}

inline json to_json(const ReconSpec& r) {
  json j{{"damping", r.damping}, {"window", "hann"}, {"dc_init", std::string(to_string(r.dc_init))}};
  std::visit([&](const auto& v) { j["chirp_table"] = v; }, r.chirp_table);
  return j;
}

inline json to_json(const TrainConfig& t) {
  json j{{"epochs", t.epochs},
         {"batch_size", t.batch_size},
         {"learning_rate", t.adam.lr},
         {"beta1", t.adam.beta1},
         {"beta2", t.adam.beta2},
         {"eps", t.adam.eps},
         {"val_fraction", t.val_fraction},
         {"seeds", t.seeds}};
  j["normalization"] = t.normalization ? json(std::string(to_string(*t.normalization))) : json("auto");
  return j;
}

inline json to_json(const ExperimentConfig& c) {
  json needles = json::array();
  for (const auto& n : c.needles)
    needles.push_back({{"id", n.id}, {"model", to_json(n.model)}, {"profile", to_json(n.profile)}, {"seed", n.seed}});
  json variants = json::array();
  for (auto v : c.variants) variants.push_back(std::string(to_string(v)));
  json reps = json::array();
  for (auto r : c.representations) reps.push_back(std::string(to_string(r)));
  return json{{"needles", needles},
              {"recon", to_json(c.recon)},
              {"variants", variants},
              {"representations", reps},
              {"train", to_json(c.train)},
              {"bench", {{"warmup", c.bench.warmup}, {"reps", c.bench.reps}}},
              {"output_dir", c.output_dir}};
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Keys absent from `j` keep their desk-scale defaults.
inline ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  try {
    require(j.is_object(), ErrorKind::Config, "experiment config must be a JSON object");
    if (j.contains("needles")) {
      c.needles.clear();
      for (const auto& nj : j.at("needles")) {
        NeedleSpec n;
        detail::read_opt(nj, "id", n.id);
        detail::read_opt(nj, "seed", n.seed);
        if (nj.contains("model")) n.model = needle_model_from_json(nj.at("model"));
        if (nj.contains("profile")) {
          const auto& pj = nj.at("profile");
          if (pj.contains("kind")) n.profile.kind = parse_profile_kind(pj.at("kind").get<std::string>());
          detail::read_opt(pj, "n", n.profile.n);
          detail::read_opt(pj, "periods", n.profile.periods);
          detail::read_opt(pj, "peak", n.profile.peak);
          detail::read_opt(pj, "from", n.profile.from);
          detail::read_opt(pj, "to", n.profile.to);
          detail::read_opt(pj, "step", n.profile.step);
          detail::read_opt(pj, "seed", n.profile.seed);
        }
        c.needles.push_back(std::move(n));
      }
    }
    if (j.contains("recon")) {
      const auto& rj = j.at("recon");
      detail::read_opt(rj, "damping", c.recon.damping);
      if (rj.contains("chirp_table")) {
        const auto& ct = rj.at("chirp_table");
        if (ct.is_string())
          c.recon.chirp_table = ct.get<std::string>();
        else
          c.recon.chirp_table = ct.get<std::vector<double>>();
      }
      if (rj.contains("window")) c.recon.window = parse_window(rj.at("window").get<std::string>());
      if (rj.contains("dc_init")) c.recon.dc_init = parse_dc_init(rj.at("dc_init").get<std::string>());
    }
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j.at("variants")) c.variants.push_back(parse_variant(v.get<std::string>()));
    }
    if (j.contains("representations")) {
      c.representations.clear();
      for (const auto& r : j.at("representations"))
        c.representations.push_back(parse_representation(r.get<std::string>()));
    }
    if (j.contains("train")) {
      const auto& tj = j.at("train");
      detail::read_opt(tj, "epochs", c.train.epochs);
      detail::read_opt(tj, "batch_size", c.train.batch_size);
      detail::read_opt(tj, "learning_rate", c.train.adam.lr);
      detail::read_opt(tj, "beta1", c.train.adam.beta1);
      detail::read_opt(tj, "beta2", c.train.adam.beta2);
      detail::read_opt(tj, "eps", c.train.adam.eps);
      detail::read_opt(tj, "val_fraction", c.train.val_fraction);
      detail::read_opt(tj, "seeds", c.train.seeds);
      if (tj.contains("normalization")) {
        const auto s = tj.at("normalization").get<std::string>();
        c.train.normalization = s == "auto" ? std::nullopt : std::optional<NormKind>(parse_norm_kind(s));
      }
    }
    if (j.contains("bench")) {
      detail::read_opt(j.at("bench"), "warmup", c.bench.warmup);
      detail::read_opt(j.at("bench"), "reps", c.bench.reps);
    }
    detail::read_opt(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  try {
    return experiment_from_json(read_json(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) fail(ErrorKind::Config, path.string() + ": " + e.what());
    throw;
  }
}

/// FNV-1a over the compact dump of the effective config.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = to_json(c).dump();
  return hex64(fnv1a64(std::span<const char>(s.data(), s.size())));
}

}  // namespace octforce
