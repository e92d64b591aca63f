#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "kiresh/error.hpp"
#include "kiresh/metrics.hpp"
#include "oracles.hpp"

using namespace kiresh;

namespace {

const auto kC = ConfusionMatrix::from_rows({{1, 1}, {0, 1}});

std::vector<std::vector<std::int64_t>> random_rows(std::mt19937_64& g, int k) {
  std::uniform_int_distribution<int> cell(0, 9);
  std::bernoulli_distribution sparse(0.3);
  std::vector<std::vector<std::int64_t>> rows(k, std::vector<std::int64_t>(k));
  for (auto& r : rows)
    for (auto& v : r) v = sparse(g) ? 0 : cell(g);
  rows[0][0] += 1;  // never empty
  return rows;
}

}  // namespace

TEST(Confusion, HandCount) {
  const std::vector<int> golds = {0, 0, 1}, preds = {0, 1, 1};
  EXPECT_EQ(confusion(preds, golds, 2), kC);
}

TEST(Confusion, PerfectIsDiagonal) {
  const std::vector<int> y = {0, 1, 2, 2, 4};
  const auto c = confusion(y, y, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) EXPECT_EQ(c.at(i, j), 0);
  EXPECT_EQ(c.correct(), 5);
}

TEST(Confusion, RowSumsAreGoldFrequencies) {
  const std::vector<int> golds = {0, 2, 2, 1, 2}, preds = {1, 2, 0, 1, 1};
  const auto c = confusion(preds, golds, 3);
  EXPECT_EQ(c.row_sum(0), 1);
  EXPECT_EQ(c.row_sum(1), 1);
  EXPECT_EQ(c.row_sum(2), 3);
  EXPECT_EQ(c.tp(2), 1);
  EXPECT_EQ(c.fp(1), 2);
  EXPECT_EQ(c.fn(2), 2);
}

TEST(Confusion, Errors) {
  const std::vector<int> a = {0, 1}, b = {0};
  EXPECT_THROW(confusion(a, b, 2), InputError);
  const std::vector<int> bad = {0, 2};
  EXPECT_THROW(confusion(bad, a, 2), InputError);
  EXPECT_THROW(confusion(std::vector<int>{}, std::vector<int>{}, 2), InputError);
}

TEST(Macro, HandExample) {
  const PRF m = macro_prf(kC);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
}

TEST(Macro, ConstantPredictorConvention) {
  const auto c = ConfusionMatrix::from_rows({{2, 0}, {2, 0}});
  const PRF m = macro_prf(c);
  EXPECT_DOUBLE_EQ(m.precision, 0.25);
  EXPECT_EQ(m.undefined, 1u);
}

TEST(Macro, HarmonicOfMeansNotMeanOfF1) {
  const auto c = ConfusionMatrix::from_rows({{5, 0, 0}, {3, 1, 0}, {1, 1, 2}});
  const PRF m = macro_prf(c);
  const auto f = per_class_f1(c);
  const double mean_f1 = (f[0] + f[1] + f[2]) / 3;
  EXPECT_NEAR(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), 1e-15);
  EXPECT_GT(std::abs(m.f1 - mean_f1), 1e-3);
}

TEST(WeightedMicro, HandExample) {
  const std::vector<double> n = {2, 1};
  const PRF m = paper_micro_prf(kC, n);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(standard_micro_f1(kC), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(accuracy(kC), 2.0 / 3.0, 1e-15);
}

TEST(WeightedMicro, DefaultSupportsAreRowSums) {
  const auto a = paper_micro_prf(kC);
  const auto b = paper_micro_prf(kC, std::vector<double>{2, 1});
  EXPECT_EQ(a.f1, b.f1);
}

TEST(Perfect, AllOnes) {
  const auto c = ConfusionMatrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 4}});
  EXPECT_EQ(macro_prf(c).f1, 1.0);
  EXPECT_EQ(paper_micro_prf(c).f1, 1.0);
  EXPECT_EQ(mcc(c), 1.0);
}

TEST(Mcc, HandExample) { EXPECT_DOUBLE_EQ(mcc(kC), 0.5); }

TEST(Mcc, ConstantPredictorIsZero) {
  EXPECT_EQ(mcc(ConfusionMatrix::from_rows({{2, 0}, {2, 0}})), 0.0);
}

TEST(Mcc, LargeCountsMatchOracle) {
  const std::vector<std::vector<std::int64_t>> rows = {{200000, 10, 7}, {30, 100000, 0}, {5, 0, 90000}};
  EXPECT_NEAR(mcc(ConfusionMatrix::from_rows(rows)), oracle::mcc(oracle::expand(rows), 3), 1e-12);
}

// Properties over random matrices.
class RandomMatrices : public ::testing::TestWithParam<int> {};

TEST_P(RandomMatrices, MatchOracles) {
  std::mt19937_64 g(1234 + GetParam());
  for (int trial = 0; trial < 250; ++trial) {
    const int k = 2 + static_cast<int>(g() % 5);
    const auto rows = random_rows(g, k);
    const auto c = ConfusionMatrix::from_rows(rows);
    const auto s = oracle::expand(rows);
    EXPECT_NEAR(mcc(c), oracle::mcc(s, k), 1e-12);
    const auto m = macro_prf(c);
    const auto om = oracle::macro(s, k);
    EXPECT_NEAR(m.precision, om.p, 1e-12);
    EXPECT_NEAR(m.recall, om.r, 1e-12);
    EXPECT_NEAR(m.f1, om.f1, 1e-12);
    const auto pm = paper_micro_prf(c);
    const auto opm = oracle::paper_micro(s, k);
    EXPECT_NEAR(pm.f1, opm.f1, 1e-12);
    // Pooled identity and MCC symmetry.
    EXPECT_EQ(standard_micro_f1(c), accuracy(c));
    EXPECT_NEAR(accuracy(c), static_cast<double>(c.correct()) / static_cast<double>(c.total()), 0);
    EXPECT_NEAR(mcc(c), mcc(c.transposed()), 1e-15);
    EXPECT_GE(mcc(c), -1.0);
    EXPECT_LE(mcc(c), 1.0);
  }
}

INSTANTIATE_TEST_SUITE_P(Batches, RandomMatrices, ::testing::Range(0, 4));

TEST(Metrics, PermutationInvariant) {
  std::mt19937_64 g(5);
  std::vector<int> golds(200), preds(200);
  for (int i = 0; i < 200; ++i) {
    golds[i] = static_cast<int>(g() % 6);
    preds[i] = static_cast<int>(g() % 6);
  }
  const auto a = confusion(preds, golds, 6);
  std::vector<int> idx(200);
  for (int i = 0; i < 200; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), g);
  std::vector<int> g2, p2;
  for (int i : idx) {
    g2.push_back(golds[i]);
    p2.push_back(preds[i]);
  }
  const auto b = confusion(p2, g2, 6);
  EXPECT_EQ(a, b);
  EXPECT_EQ(mcc(a), mcc(b));
}

TEST(Ece, PerfectCalibration) {
  std::vector<ConfidenceRecord> r(10, {1.0, true});
  EXPECT_EQ(ece(r, 10), 0.0);
}

TEST(Ece, SingleBinHand) {
  std::vector<ConfidenceRecord> r = {{0.9, true}, {0.8, false}};
  EXPECT_NEAR(ece(r, 1), 0.35, 1e-15);
}

TEST(Ece, MatchedBin) {
  std::vector<ConfidenceRecord> r;
  for (int i = 0; i < 100; ++i) r.push_back({0.9, i < 90});
  EXPECT_NEAR(ece(r, 10), 0.0, 1e-12);
}

TEST(Ece, BoundaryIsRightClosed) {
  EXPECT_EQ(ece_bin(0.3, 10), 2u);
  EXPECT_EQ(ece_bin(1.0, 10), 9u);
  EXPECT_EQ(ece_bin(0.0, 10), 0u);
  EXPECT_EQ(ece_bin(0.30000000000000004, 10), 3u);
  for (int i = 1; i <= 10; ++i) EXPECT_EQ(ece_bin(static_cast<double>(i) / 10, 10), static_cast<std::size_t>(i - 1));
}

TEST(Ece, InvariantUnderDuplication) {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<ConfidenceRecord> r;
  for (int i = 0; i < 100; ++i) r.push_back({u(g), g() % 3 != 0});
  auto d = r;
  d.insert(d.end(), r.begin(), r.end());
  EXPECT_NEAR(ece(r, 10), ece(d, 10), 1e-15);
}

TEST(Ece, MatchesOracle) {
  std::mt19937_64 g(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + static_cast<int>(g() % 20);
    std::vector<ConfidenceRecord> r;
    std::vector<std::pair<double, bool>> o;
    const int n = 1 + static_cast<int>(g() % 50);
    for (int i = 0; i < n; ++i) {
      // Some confidences sit exactly on bin edges.
      const double p = g() % 4 == 0 ? static_cast<double>(1 + g() % m) / m : u(g);
      const bool ok = g() % 2;
      r.push_back({p, ok});
      o.emplace_back(p, ok);
    }
    EXPECT_NEAR(ece(r, static_cast<std::size_t>(m)), oracle::ece(o, m), 1e-12);
  }
}

TEST(Ece, FromProbabilities) {
  const std::vector<std::vector<double>> probs = {{0.9, 0.1}, {0.2, 0.8}};
  const std::vector<int> golds = {0, 0};
  EXPECT_NEAR(ece(probs, golds, 1), 0.35, 1e-15);
  const auto c = confidence_record(probs[1], 0);
  EXPECT_EQ(c.confidence, 0.8);
  EXPECT_FALSE(c.correct);
}

TEST(Fleiss, PerfectAgreement) {
  EXPECT_DOUBLE_EQ(fleiss_kappa({{"a", "a", "a"}, {"b", "b", "b"}}), 1.0);
}

TEST(Fleiss, HandMinusOne) { EXPECT_DOUBLE_EQ(fleiss_kappa({{"A", "B"}, {"B", "A"}}), -1.0); }

TEST(Fleiss, SingleCategoryConvention) { EXPECT_EQ(fleiss_kappa({{"x", "x"}, {"x", "x"}}), 1.0); }

TEST(Fleiss, Errors) {
  EXPECT_THROW(fleiss_kappa({{"a", "b"}, {"a"}}), InputError);
  EXPECT_THROW(fleiss_kappa({{"a", "b"}}), InputError);
  EXPECT_THROW(fleiss_kappa({{"a"}, {"b"}}), InputError);
}

TEST(Fleiss, MatchesOracle) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t items = 2 + g() % 20, raters = 2 + g() % 5, cats = 1 + g() % 4;
    std::vector<std::vector<std::string>> r(items);
    for (auto& item : r)
      for (std::size_t a = 0; a < raters; ++a) item.push_back(std::string(1, static_cast<char>('a' + g() % cats)));
    EXPECT_NEAR(fleiss_kappa(r), oracle::fleiss(r), 1e-12);
  }
}

TEST(TaskMetrics, Json) {
  const auto m = task_metrics(kC);
  const auto j = to_json(m);
  EXPECT_DOUBLE_EQ(j["mcc"].get<double>(), 0.5);
  EXPECT_EQ(m.support, (std::vector<std::int64_t>{2, 1}));
}
