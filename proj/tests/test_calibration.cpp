#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "calib_fixture.hpp"
#include "kiresh/calibration.hpp"
#include "kiresh/error.hpp"
#include "kiresh/metrics.hpp"

using namespace kiresh;

namespace {

std::vector<std::vector<double>> probs_of(const std::vector<ProbabilityRecord>& recs, Task t) {
  std::vector<std::vector<double>> out;
  for (const auto& r : recs) out.push_back(r.probs(t));
  return out;
}

std::vector<int> golds_of(std::span<const ProbRecord> recs, Task t) {
  std::vector<int> out;
  for (const auto& r : recs) out.push_back(r.gold.code(t));
  return out;
}

ConfusionMatrix confusion_of(const std::vector<ProbabilityRecord>& recs, Task t) {
  std::vector<int> p, g;
  for (const auto& r : recs) {
    p.push_back(argmax(r.probs(t)));
    g.push_back(r.gold.code(t));
  }
  return confusion(p, g, num_classes(t));
}

}  // namespace

TEST(ScaledSoftmax, Examples) {
  const std::vector<double> z = {2, 0};
  const auto p = scaled_softmax(z, 1);
  EXPECT_NEAR(p[0], std::exp(2.0) / (std::exp(2.0) + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (std::exp(2.0) + 1), 1e-15);
  for (double v : scaled_softmax(z, 1000)) EXPECT_NEAR(v, 0.5, 1e-3);
  const std::vector<double> big = {1000, 999, -1000};
  const auto q = scaled_softmax(big, 1);
  EXPECT_TRUE(std::isfinite(q[0]));
  EXPECT_NEAR(q[0] + q[1] + q[2], 1, 1e-15);
  EXPECT_THROW(scaled_softmax(z, 0), std::domain_error);
  EXPECT_THROW(scaled_softmax(z, -1), std::domain_error);
  EXPECT_THROW(scaled_softmax(z, std::nan("")), std::domain_error);
}

TEST(ScaledSoftmax, ArgmaxInvariant) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> z(2 + rng.index(6));
    for (auto& v : z) v = 10 * rng.normal();
    const int a = argmax(z);
    for (int j = 0; j < 10; ++j) {
      const double t = 20 * (1 - rng.uniform());  // (0, 20]
      EXPECT_EQ(argmax(scaled_softmax(z, t)), a);
    }
  }
}

TEST(Fit, CalibratedNearOne) {
  const auto recs = fixture::scaled_records(6000, 1.0, 3);
  for (auto t : kTasks) {
    const double temp = fit_temperature(recs, t);
    EXPECT_GE(temp, 0.9);
    EXPECT_LE(temp, 1.1);
  }
}

TEST(Fit, FiveTimesOverconfident) {
  const auto recs = fixture::scaled_records(6000, 5.0, 4);
  const auto temp = fit_temperatures(recs);
  const auto report = calibration_report(recs, temp);
  for (auto t : kTasks) {
    EXPECT_GE(temp.of(t), 4.0);
    EXPECT_LE(temp.of(t), 6.0);
    EXPECT_LT(report.of(t).ece_after, report.of(t).ece_before);
    EXPECT_LE(report.of(t).nll_after, report.of(t).nll_before + 1e-9);
  }
}

TEST(Fit, MatchesGridMinimum) {
  for (double scale : {0.3, 1.0, 5.0}) {
    const auto recs = fixture::scaled_records(1500, scale, 9);
    for (auto t : kTasks) {
      const double fitted = fit_temperature(recs, t);
      const double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature);
      double grid_min = INFINITY;
      for (int i = 0; i < 100; ++i) grid_min = std::min(grid_min, nll(recs, t, std::exp(lo + (hi - lo) * i / 99)));
      EXPECT_LE(nll(recs, t, fitted), grid_min + 1e-6) << scale;
    }
  }
}

TEST(Fit, DegenerateAndEmpty) {
  auto recs = fixture::scaled_records(50, 2.0, 1);
  for (auto& r : recs) r.gold = {Presence::present, Period::current};
  const auto temp = fit_temperatures(recs);
  EXPECT_TRUE(std::isfinite(temp.presence));
  EXPECT_GE(temp.presence, kMinTemperature);
  EXPECT_LE(temp.presence, kMaxTemperature);
  EXPECT_THROW(fit_temperature(std::span<const ProbRecord>{}, Task::presence), InputError);
}

TEST(Apply, MetricsBitIdentical) {
  const auto recs = fixture::scaled_records(3000, 5.0, 6);
  const auto before = apply_temperature(recs, Temperature{});
  const auto after = apply_temperature(recs, fit_temperatures(recs));
  for (auto t : kTasks) {
    const auto a = task_metrics(confusion_of(before, t));
    const auto b = task_metrics(confusion_of(after, t));
    EXPECT_EQ(a.mcc, b.mcc);
    EXPECT_EQ(a.macro.f1, b.macro.f1);
    EXPECT_EQ(a.paper_micro.f1, b.paper_micro.f1);
    EXPECT_EQ(a.standard_micro_f1, b.standard_micro_f1);
    for (std::size_t i = 0; i < recs.size(); ++i)
      EXPECT_EQ(argmax(before[i].probs(t)), argmax(recs[i].logits(t)));
  }
}

TEST(Apply, IdentityAndSmoothing) {
  const auto recs = fixture::scaled_records(200, 2.0, 8);
  const auto one = apply_temperature(recs, Temperature{});
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto plain = scaled_softmax(recs[i].logits(Task::presence), 1.0);
    EXPECT_EQ(one[i].presence_probs, plain);
  }
  const auto two = apply_temperature(recs, Temperature{2, 2});
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (auto t : kTasks) {
      const auto& a = one[i].probs(t);
      const auto& b = two[i].probs(t);
      EXPECT_LE(*std::max_element(b.begin(), b.end()), *std::max_element(a.begin(), a.end()) + 1e-15);
    }
}

TEST(Report, EceMatchesMetrics) {
  const auto recs = fixture::scaled_records(500, 3.0, 2);
  const Temperature temp{2.5, 3.5};
  const auto report = calibration_report(recs, temp, 15);
  EXPECT_EQ(report.bins, 15u);
  EXPECT_EQ(report.size, 500u);
  const auto after = apply_temperature(recs, temp);
  for (auto t : kTasks)
    EXPECT_DOUBLE_EQ(report.of(t).ece_after, ece(probs_of(after, t), golds_of(recs, t), 15));
}

TEST(Json, TemperatureRoundTrip) {
  const Temperature t{0.7, 4.25};
  EXPECT_EQ(temperature_from_json(to_json(t)), t);
  EXPECT_THROW(temperature_from_json(nlohmann::json{{"presence_T", -1}, {"period_T", 1}}), InputError);
  EXPECT_THROW(temperature_from_json(nlohmann::json{{"presence", 1}}), InputError);
}
