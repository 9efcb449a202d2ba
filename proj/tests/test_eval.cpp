#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "octforce/eval.hpp"

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

EvalReport fake_report(const std::string& needle, Variant v, Representation r, std::vector<double> maes) {
  EvalReport rep;
  rep.needle_id = needle;
  rep.variant = v;
  rep.representation = r;
  std::uint64_t s = 1;
  for (double m : maes) rep.runs.push_back({s++, m, 1, 0.0, "", {}});
  if (r == Representation::Raw) rep.latency = LatencyStats{1.0, 0.9, 1.2, 100};
  return rep;
}

NeedleModel noiseless() {
  NeedleModel m = NeedleModel::defaults();
  m.noise_sigma = 0.0;
  return m;
}

}  // namespace

TEST(Mae, InvariantToPermutationAndTranslation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(50), t(50);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = u(rng), t[i] = u(rng);
  const double base = mae(p, t);
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> pp, tt, ps, ts;
  for (auto i : idx) pp.push_back(p[i]), tt.push_back(t[i]);
  for (std::size_t i = 0; i < p.size(); ++i) ps.push_back(p[i] + 0.37), ts.push_back(t[i] + 0.37);
  EXPECT_NEAR(mae(pp, tt), base, 1e-12);
  EXPECT_NEAR(mae(ps, ts), base, 1e-12);
  EXPECT_EQ(kind_of([] { mae(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}); }), ErrorKind::Shape);
}

TEST(RelativeDifference, TableExamples) {
  EXPECT_NEAR(relative_difference(4.40, 6.61), 0.334, 5e-4);
  EXPECT_NEAR(relative_difference(8.54, 7.22), -0.183, 5e-4);
  EXPECT_EQ(relative_difference(3.0, 3.0), 0.0);
}

TEST(RelativeDifference, ScaleInvariantAndGuarded) {
  for (double c : {1e-3, 0.5, 7.0, 1e4})
    EXPECT_NEAR(relative_difference(4.40 * c, 6.61 * c), relative_difference(4.40, 6.61), 1e-12);
  EXPECT_EQ(kind_of([] { relative_difference(1.0, 0.0); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { relative_difference(NAN, 1.0); }), ErrorKind::InvalidInput);
}

TEST(Stats, SampleStdAndQuantiles) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean_of(v), 5.0);
  EXPECT_NEAR(stddev_of(v), std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(stddev_of(std::vector<double>{3.0}), 0.0);
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.1), 1.4);
}

TEST(Hash, FnvKnownValues) {
  EXPECT_EQ(hex64(fnv1a64(std::string_view(""))), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a64(std::string_view("a"))), "af63dc4c8601ec8c");
}

TEST(Benchmark, EvalLeavesNoGraphAndGradientsUntouched) {
  std::mt19937_64 rng(1);
  auto m = build_model(ArchSpec::make(Variant::ResNet6, 1024), rng);
  for (auto& p : m.parameters()) p.tensor.zero_grad();
  const auto before = m.state();
  const std::size_t records = nn::backward_records_created();
  const auto lat = benchmark_inference(m, 2, 30, 5);
  EXPECT_EQ(nn::backward_records_created(), records);
  EXPECT_EQ(m.state(), before);
  for (auto& p : m.parameters())
    for (double g : p.tensor.grad()) ASSERT_EQ(g, 0.0);
  EXPECT_GT(lat.median_ms, 0.0);
  EXPECT_LE(lat.q1_ms, lat.median_ms);
  EXPECT_LE(lat.median_ms, lat.q3_ms);
  EXPECT_EQ(lat.reps, 30u);
  EXPECT_EQ(kind_of([&] { benchmark_inference(m, 1, 10); }), ErrorKind::Config);
}

TEST(Baseline, NoiselessLinearNeedleIsNearlyExact) {
  const auto raw = generate_dataset(ForceProfile::ramp(600), noiseless(), 3);
  ReconConfig rc;
  rc.chirp_table = chirp_table_from_model(noiseless());
  const auto rec = reconstruct_mscan(raw, rc);
  const auto res = evaluate_linear_baseline(rec, split_indices(rec.size(), 0.2, 1));
  // The first scan seeds the DC estimate with itself and carries no peak.
  EXPECT_LE(res.skipped, 1u);
  EXPECT_GE(res.val_points, 119u);
  EXPECT_LT(res.fit.slope, 0.0);  // force pushes the peak to shallower depth
  EXPECT_LE(res.val_mae_mN, 1.0) << res.val_mae_mN;
  EXPECT_EQ(kind_of([&] { evaluate_linear_baseline(raw, split_indices(raw.size(), 0.2, 1)); }),
            ErrorKind::RepresentationMismatch);
}

TEST(Report, MeanStdAndCompleteness) {
  auto r = fake_report("a", Variant::ResNet6, Representation::Raw, {4.0, 6.0});
  EXPECT_TRUE(r.complete());
  EXPECT_DOUBLE_EQ(*r.mean_mae(), 5.0);
  EXPECT_NEAR(r.std_mae(), std::sqrt(2.0), 1e-12);
  r.runs.push_back({9, std::nullopt, 0, 0.0, "boom", {}});
  EXPECT_FALSE(r.complete());
  EXPECT_DOUBLE_EQ(*r.mean_mae(), 5.0);
}

TEST(Table, ThreeVariantsByThreeNeedles) {
  std::vector<EvalReport> reports;
  for (auto v : {Variant::ResNet6, Variant::ResNet18, Variant::ResNet34})
    for (std::string n : {"n1", "n2", "n3"})
      for (auto r : {Representation::Raw, Representation::Recon})
        reports.push_back(fake_report(n, v, r, {4.0, 5.0, 6.0}));
  const std::string md = render_table_md(reports);
  std::istringstream in(md);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);)
    if (line.rfind("| ResNet", 0) == 0) rows.push_back(line);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    EXPECT_EQ(std::count(row.begin(), row.end(), '|'), 1 + 1 + 6 + 1);
    EXPECT_EQ(row.find("n/a"), std::string::npos);
  }
  EXPECT_NE(rows[0].find("5.00 ± 1.00"), std::string::npos);
  EXPECT_NE(md.find("1.11"), std::string::npos);
  EXPECT_EQ(relative_differences(reports).size(), 9u);
}

TEST(Table, MissingCellShowsNa) {
  std::vector<EvalReport> reports{fake_report("n1", Variant::ResNet6, Representation::Raw, {4.0}),
                                  fake_report("n1", Variant::ResNet6, Representation::Recon, {})};
  EXPECT_NE(render_table_md(reports).find("n/a"), std::string::npos);
  EXPECT_TRUE(relative_differences(reports).empty());
}

TEST(RelDiffCsv, SignConvention) {
  std::vector<EvalReport> reports{fake_report("n1", Variant::ResNet6, Representation::Raw, {4.40}),
                                  fake_report("n1", Variant::ResNet6, Representation::Recon, {6.61})};
  const std::string csv = render_reldiff_csv(reports);
  EXPECT_NE(csv.find(",true\n"), std::string::npos);
  EXPECT_NE(csv.find("0.334"), std::string::npos);
}

TEST(Matrix, SmallRunFillsEveryCell) {
  const auto raw = generate_dataset(ForceProfile::triangle(200, 2), NeedleModel::defaults(), 5, "m");
  NeedleData nd{"m", raw, reconstruct_mscan(raw, ReconConfig{})};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.seeds = {1, 2};
  MatrixOptions opt;
  opt.bench_warmup = 1;
  opt.bench_reps = 30;
  const auto reports =
      run_experiment_matrix({nd}, {Variant::ResNet6}, {Representation::Raw, Representation::Recon}, cfg, opt);
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) {
    EXPECT_TRUE(r.complete());
    EXPECT_TRUE(r.latency.has_value());
    EXPECT_EQ(r.runs.size(), 2u);
  }
  NeedleData missing{"x", raw, std::nullopt};
  EXPECT_EQ(kind_of([&] {
              run_experiment_matrix({missing}, {Variant::ResNet6}, {Representation::Recon}, cfg, opt);
            }),
            ErrorKind::MissingDataset);
}
