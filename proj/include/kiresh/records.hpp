#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kiresh/taxonomy.hpp"

namespace kiresh {

// Per-example pre-softmax outputs of both heads plus the gold labels.
struct ProbRecord {
  std::string id;
  std::array<double, kNumPresence> presence_logits{};
  std::array<double, kNumPeriod> period_logits{};
  LabelPair gold;

  std::vector<double> logits(Task t) const;
  friend bool operator==(const ProbRecord&, const ProbRecord&) = default;
};

// Per-example probabilities (after softmax, possibly temperature scaled).
struct ProbabilityRecord {
  std::string id;
  std::vector<double> presence_probs;
  std::vector<double> period_probs;
  LabelPair gold;

  const std::vector<double>& probs(Task t) const {
    return t == Task::presence ? presence_probs : period_probs;
  }
  friend bool operator==(const ProbabilityRecord&, const ProbabilityRecord&) = default;
};

int argmax(const std::vector<double>& v);
int argmax(std::span<const double> v);

// JSON Lines. Logit lines carry "presence_logits"/"period_logits";
// probability lines "presence_probs"/"period_probs". Both carry "id",
// "presence", "period".
void write_logits(const std::vector<ProbRecord>& records, const std::filesystem::path& path);
std::vector<ProbRecord> read_logits(const std::filesystem::path& path);
void write_probabilities(const std::vector<ProbabilityRecord>& records,
                         const std::filesystem::path& path);
std::vector<ProbabilityRecord> read_probabilities(const std::filesystem::path& path);
// Accepts either line kind; logits are converted with a plain softmax.
std::vector<ProbabilityRecord> read_any_probabilities(const std::filesystem::path& path);

}  // namespace kiresh
