#include "kiresh/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kiresh/error.hpp"
#include "kiresh/metrics.hpp"

namespace kiresh {

std::vector<double> scaled_softmax(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::domain_error("temperature must be positive and finite");
  std::vector<double> out(z.size());
  if (z.empty()) return out;
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (out[i] = std::exp((z[i] - mx) / temperature));
  for (auto& v : out) v /= sum;
  return out;
}

double nll(std::span<const ProbRecord> records, Task task, double temperature) {
  if (records.empty()) throw InputError("NLL of an empty record set");
  double total = 0;
  for (const auto& r : records) {
    const auto z = r.logits(task);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double v : z) sum += std::exp((v - mx) / temperature);
    total += std::log(sum) - (z[static_cast<std::size_t>(r.gold.code(task))] - mx) / temperature;
  }
  return total / static_cast<double>(records.size());
}

double fit_temperature(std::span<const ProbRecord> records, Task task) {
  if (records.empty()) throw InputError("cannot fit a temperature without records");
  auto f = [&](double log_t) { return nll(records, task, std::exp(log_t)); };

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(kMinTemperature), hi = std::log(kMaxTemperature);
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > kLogTemperatureTolerance) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  const double best = 0.5 * (lo + hi);
  const double t = std::exp(best);
  return f(best) <= nll(records, task, 1.0) ? t : 1.0;
}

Temperature fit_temperatures(std::span<const ProbRecord> records) {
  return {fit_temperature(records, Task::presence), fit_temperature(records, Task::period)};
}

std::vector<ProbabilityRecord> apply_temperature(std::span<const ProbRecord> records, const Temperature& t) {
  std::vector<ProbabilityRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({r.id, scaled_softmax(r.presence_logits, t.presence),
                   scaled_softmax(r.period_logits, t.period), r.gold});
  return out;
}

namespace {

double task_ece(std::span<const ProbRecord> records, Task task, double temperature,
                std::size_t bins) {
  std::vector<ConfidenceRecord> conf;
  conf.reserve(records.size());
  for (const auto& r : records)
    conf.push_back(confidence_record(scaled_softmax(r.logits(task), temperature), r.gold.code(task)));
  return ece(conf, bins);
}

}  // namespace

CalibrationReport calibration_report(std::span<const ProbRecord> records, const Temperature& t,
                                     std::size_t bins) {
  CalibrationReport rep;
  rep.bins = bins;
  rep.size = records.size();
  for (auto task : {Task::presence, Task::period}) {
    auto& c = task == Task::presence ? rep.presence : rep.period;
    c.temperature = t.of(task);
    c.nll_before = nll(records, task, 1.0);
    c.nll_after = nll(records, task, c.temperature);
    c.ece_before = task_ece(records, task, 1.0, bins);
    c.ece_after = task_ece(records, task, c.temperature, bins);
  }
  return rep;
}

nlohmann::json to_json(const Temperature& t) {
  return {{"presence_T", t.presence}, {"period_T", t.period}};
}

Temperature temperature_from_json(const nlohmann::json& j) {
  Temperature t;
  try {
    t = {j.at("presence_T").get<double>(), j.at("period_T").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad temperature file: ") + e.what());
  }
  for (double v : {t.presence, t.period})
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("temperatures must be positive and finite");
  return t;
}

nlohmann::json to_json(const CalibrationReport& r) {
  auto task = [](const TaskCalibration& c) {
    return nlohmann::json{{"temperature", c.temperature}, {"nll_before", c.nll_before},
                          {"nll_after", c.nll_after},     {"ece_before", c.ece_before},
                          {"ece_after", c.ece_after}};
  };
  return {{"presence", task(r.presence)}, {"period", task(r.period)}, {"bins", r.bins},
          {"size", r.size}};
}

}  // namespace kiresh
