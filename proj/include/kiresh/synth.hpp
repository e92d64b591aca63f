#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "kiresh/corpus.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/taxonomy.hpp"

namespace kiresh {

using TagProbabilities = std::array<std::array<double, kNumPresence>, kNumSbdh>;

// Synthetic eviction-status corpus with planted SBDH correlations.
//
// Labels are allocated by quota (largest remainder over the class weights)
// and shuffled, so class proportions match the configuration to within one
// example. Each SBDH tag c is drawn independently with probability
// base_rate[c] * lift(c, presence), where unconfigured presence classes share
// a common lift chosen so that the marginal tag rate stays base_rate[c].
struct GeneratorConfig {
  std::size_t total_count = 5271;
  std::vector<std::pair<LabelPair, double>> class_distribution;
  std::map<std::pair<Sbdh, Presence>, double> lift;
  std::array<double, kNumSbdh> base_rate{};
  std::array<double, kNumPresence> presence_length{};
  std::array<double, kNumPeriod> period_length{};
  // Probability that the eviction phrase is replaced by a label-neutral one.
  double ambiguity = 0.35;
  // Probability that an assigned tag is also mentioned in the text.
  double mention_rate = 0.3;
  // Probability of an extra sentence quoting one of the filter keywords.
  double keyword_rate = 0.2;
  std::uint64_t seed = 0;

  // Reference corpus marginals, a joint consistent with them, and the default lifts.
  static GeneratorConfig defaults();
  // Starts from defaults(); see `kiresh corpus synth --help` for the keys.
  static GeneratorConfig from_keyvalue(const KeyValue& kv);

  // Throws ConfigError for non-positive total weight, negative or non-finite
  // lifts, or lifts that no tag distribution can realize.
  void validate() const;

  std::array<double, kNumPresence> presence_marginal() const;
  TagProbabilities tag_probabilities() const;
  double mean_length(const LabelPair& pair) const;
};

Dataset synthesize(const GeneratorConfig& config);

// Empirical P(tag | presence) / P(tag) in a dataset; NaN when undefined.
double empirical_lift(const Dataset& ds, Sbdh tag, Presence presence);

}  // namespace kiresh
