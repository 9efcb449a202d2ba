#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "octforce/recon.hpp"
#include "octforce/train.hpp"

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

const MScanDataset& small_raw() {
  static const MScanDataset ds = generate_dataset(ForceProfile::triangle(400, 4), NeedleModel::defaults(), 21);
  return ds;
}

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.seeds = {1};
  return c;
}

}  // namespace

TEST(Split, DisjointAndCovering) {
  const Split s = split_indices(1000, 0.2, 5);
  EXPECT_EQ(s.val.size(), 200u);
  EXPECT_EQ(s.train.size(), 800u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto v : s.val) EXPECT_TRUE(all.insert(v).second) << "index " << v << " in both";
  EXPECT_EQ(all.size(), 1000u);
  EXPECT_EQ(*all.rbegin(), 999u);
}

TEST(Split, SeededAndUniform) {
  EXPECT_EQ(split_indices(500, 0.2, 1).val, split_indices(500, 0.2, 1).val);
  EXPECT_NE(split_indices(500, 0.2, 1).val, split_indices(500, 0.2, 2).val);
  // Not a contiguous tail block.
  const auto v = split_indices(500, 0.2, 1).val;
  EXPECT_LT(v.front(), 100u);
  EXPECT_GT(v.back(), 400u);
}

TEST(Normalizer, FittedOnTrainRowsOnly) {
  MScanDataset ds = small_raw();
  const Split s = split_indices(ds.size(), 0.2, 3);
  const Normalizer a = Normalizer::fit(ds, s.train, NormKind::PerPosition);
  for (auto v : s.val)
    for (std::size_t i = 0; i < ds.record_length; ++i) ds.samples[v * ds.record_length + i] = 1e6f;
  const Normalizer b = Normalizer::fit(ds, s.train, NormKind::PerPosition);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
}

TEST(Normalizer, PerPositionStandardizes) {
  const auto& ds = small_raw();
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Normalizer nz = Normalizer::fit(ds, rows, NormKind::PerPosition);
  ASSERT_EQ(nz.mean.size(), 1024u);
  const nn::Tensor x = make_batch(ds, nz, rows);
  for (std::size_t pos : {0u, 300u, 700u}) {
    double m = 0, s = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) m += x.data()[r * 1024 + pos];
    m /= static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) s += std::pow(x.data()[r * 1024 + pos] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(s / static_cast<double>(rows.size()), 1.0, 1e-6);
  }
}

TEST(Normalizer, Log1pGlobalIsScalar) {
  const auto rec = reconstruct_mscan(small_raw(), ReconConfig{});
  std::vector<std::size_t> rows{1, 2, 3, 4};
  const Normalizer nz = Normalizer::fit(rec, rows, NormKind::Log1pGlobal);
  EXPECT_EQ(nz.mean.size(), 1u);
  EXPECT_GT(nz.std[0], 0.0);
}

TEST(Mae, Examples) {
  EXPECT_DOUBLE_EQ(mae(std::vector<double>{0.3, 0.4}, std::vector<double>{0.3, 0.4}), 0.0);
  EXPECT_DOUBLE_EQ(mae(std::vector<double>{0.010}, std::vector<double>{0.0}), 10.0);
  EXPECT_NEAR(mae(std::vector<double>{0.0, 0.002}, std::vector<double>{0.001, 0.001}), 1.0, 1e-12);
  EXPECT_EQ(kind_of([] { mae(std::vector<double>{}, std::vector<double>{}); }), ErrorKind::InvalidInput);
}

TEST(Train, HistoryLengthAndDeterminism) {
  const ArchSpec spec = ArchSpec::make(Variant::ResNet6, 1024);
  const auto a = train(small_raw(), spec, small_config(3), 7);
  const auto b = train(small_raw(), spec, small_config(3), 7);
  const auto c = train(small_raw(), spec, small_config(3), 8);
  ASSERT_EQ(a.history.epochs.size(), 3u);
  EXPECT_EQ(a.history.to_csv(false), b.history.to_csv(false));
  EXPECT_NE(a.history.to_csv(false), c.history.to_csv(false));
  EXPECT_EQ(a.model.state(), b.model.state());
  for (const auto& e : a.history.epochs) {
    EXPECT_TRUE(std::isfinite(e.train_mse_N2));
    EXPECT_GE(e.val_mae_mN, 0.0);
  }
}

TEST(Train, BestEpochIsReturned) {
  const ArchSpec spec = ArchSpec::make(Variant::ResNet6, 1024);
  auto r = train(small_raw(), spec, small_config(4), 3);
  const auto best = std::min_element(r.history.epochs.begin(), r.history.epochs.end(),
                                     [](const auto& x, const auto& y) { return x.val_mae_mN < y.val_mae_mN; });
  EXPECT_EQ(r.history.best_epoch, best->epoch);
  std::vector<double> target;
  for (auto v : r.split.val) target.push_back(small_raw().forces[v]);
  EXPECT_DOUBLE_EQ(mae(predict(r.model, r.normalizer, small_raw(), r.split.val), target), best->val_mae_mN);
}

TEST(Train, LossDecreases) {
  const ArchSpec spec = ArchSpec::make(Variant::ResNet6, 1024);
  const auto r = train(small_raw(), spec, small_config(6), 1);
  EXPECT_LE(r.history.epochs.back().train_mse_N2, r.history.epochs.front().train_mse_N2);
}

TEST(Train, CsvFormat) {
  TrainHistory h;
  h.epochs.push_back({1, 0.25, 12.5, 1.5});
  EXPECT_EQ(h.to_csv(), "epoch,train_mse_N2,val_mae_mN,seconds\n1,0.25,12.5,1.5\n");
}

TEST(Train, Preconditions) {
  const ArchSpec raw_spec = ArchSpec::make(Variant::ResNet6, 1024);
  const auto rec = reconstruct_mscan(small_raw(), ReconConfig{});
  EXPECT_EQ(kind_of([&] { train(rec, raw_spec, small_config(1), 1); }), ErrorKind::RepresentationMismatch);
  TrainConfig big = small_config(1);
  big.batch_size = 256;
  EXPECT_EQ(kind_of([&] { train(small_raw(), raw_spec, big, 1); }), ErrorKind::InvalidInput);
  TrainConfig bad = small_config(1);
  bad.val_fraction = 1.0;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::Config);
  bad = small_config(1);
  bad.seeds.clear();
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::Config);
}

TEST(Train, NanLossAbortsWithEpoch) {
  MScanDataset ds = small_raw();
  for (auto& f : ds.forces) f = NAN;
  try {
    train(ds, ArchSpec::make(Variant::ResNet6, 1024), small_config(2), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST(CapacityProbe, SmallSubsetIsMemorized) {
  MScanDataset ds = generate_dataset(ForceProfile::ramp(64), [] {
    NeedleModel m = NeedleModel::defaults();
    m.noise_sigma = 0.0;
    return m;
  }(), 2);
  const auto r = capacity_probe(ds, ArchSpec::make(Variant::ResNet6, 1024), 500, 1e-4, 1);
  EXPECT_TRUE(r.reached) << "best " << r.best_mse_N2;
}
