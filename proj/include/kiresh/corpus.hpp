#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kiresh/taxonomy.hpp"

namespace kiresh {

enum class Split : std::uint8_t { none, train, eval, test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

// One annotated snippet. `sbdh` is kept in canonical category order with
// no duplicates.
struct Example {
  std::string id;
  std::string text;
  std::vector<Sbdh> sbdh;
  LabelPair gold;
  Split split = Split::none;
  // Unrecognized JSONL fields, carried through a read/write round trip.
  nlohmann::json extra = nlohmann::json::object();

  bool has_sbdh(Sbdh c) const;
  friend bool operator==(const Example&, const Example&) = default;
};

enum class Provenance : std::uint8_t { ingested, synthetic };

struct SplitSizes {
  std::size_t train = 0, eval = 0, test = 0, unassigned = 0;
};

struct Dataset {
  std::vector<Example> examples;
  Provenance provenance = Provenance::ingested;
  std::optional<std::uint64_t> generator_seed;
  // Pairs outside the whitelist accepted under the permissive policy.
  std::size_t combination_warnings = 0;

  std::size_t size() const { return examples.size(); }
  SplitSizes split_sizes() const;
  std::vector<const Example*> in_split(Split s) const;
};

void canonicalize_sbdh(std::vector<Sbdh>& tags);

struct IngestOptions {
  CombinationPolicy policy{};
  LabelScheme scheme = LabelScheme::table;
};

// JSON Lines: {"id","text","sbdh":[...],"presence","period","split"?}.
// Missing ids become "line-<n>". Throws ParseError carrying the line number.
Dataset ingest(const std::filesystem::path& path, const IngestOptions& opts = {});
Dataset parse_dataset(std::string_view jsonl, const IngestOptions& opts = {});

std::string serialize_example(const Example& ex,
                              LabelScheme scheme = LabelScheme::table);
void write_dataset(const Dataset& ds, const std::filesystem::path& path,
                   LabelScheme scheme = LabelScheme::table);

const std::vector<std::string>& default_eviction_keywords();

struct KeywordMatch {
  std::string text;
  std::vector<std::string> keywords;
};

// Case-insensitive substring match; texts without any keyword are dropped.
std::vector<KeywordMatch> keyword_filter(
    const std::vector<std::string>& texts,
    const std::vector<std::string>& keywords = default_eviction_keywords());

struct SplitFractions {
  double train = 0.6, eval = 0.2, test = 0.2;
};

// Exact per-split counts by largest remainder, applied to a seeded shuffle.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f);
Dataset split(const Dataset& ds, const SplitFractions& f, std::uint64_t seed);

// Keeps ceil(fraction * |train|) training examples, preserving order.
Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed);

}  // namespace kiresh
