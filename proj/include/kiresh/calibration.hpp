#pragma once

// Temperature scaling: one positive temperature per task head, fitted by
// minimizing validation negative log-likelihood.

#include <span>
#include <vector>

#include <json.hpp>

#include "kiresh/records.hpp"
#include "kiresh/taxonomy.hpp"

namespace kiresh {

struct Temperature {
  double presence = 1.0;
  double period = 1.0;

  double of(Task t) const { return t == Task::presence ? presence : period; }
  friend bool operator==(const Temperature&, const Temperature&) = default;
};

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr double kLogTemperatureTolerance = 1e-4;

// softmax(z / T) with max subtraction. Throws std::domain_error for T <= 0
// or non-finite T.
std::vector<double> scaled_softmax(std::span<const double> z, double temperature);

// Mean negative log-likelihood of the gold labels at temperature T.
double nll(std::span<const ProbRecord> records, Task task, double temperature);

// Golden-section search over ln T in [ln 0.05, ln 20]; never worse than
// T = 1. Throws InputError on an empty record set.
double fit_temperature(std::span<const ProbRecord> records, Task task);
Temperature fit_temperatures(std::span<const ProbRecord> records);

std::vector<ProbabilityRecord> apply_temperature(std::span<const ProbRecord> records, const Temperature& t);

struct TaskCalibration {
  double temperature = 1.0;
  double nll_before = 0, nll_after = 0;
  double ece_before = 0, ece_after = 0;
};

struct CalibrationReport {
  TaskCalibration presence, period;
  std::size_t bins = 10;
  std::size_t size = 0;

  const TaskCalibration& of(Task t) const { return t == Task::presence ? presence : period; }
};

// Scores `records` at T = 1 and at `t`.
CalibrationReport calibration_report(std::span<const ProbRecord> records, const Temperature& t,
                                     std::size_t bins = 10);

nlohmann::json to_json(const Temperature& t);
Temperature temperature_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CalibrationReport& r);

}  // namespace kiresh
