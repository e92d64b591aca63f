#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "kiresh/corpus.hpp"
#include "kiresh/error.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/synth.hpp"

using namespace kiresh;
namespace fs = std::filesystem;

namespace {

// Reference corpus marginals ("all" row of the data distribution table).
constexpr double kPeriodAll[kNumPeriod] = {1188, 406, 2734, 62, 881};
constexpr double kPresenceAll[kNumPresence] = {1656, 2503, 215, 115, 691, 91};

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kiresh_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Ingest, ParsesFieldsAndDefaults) {
  const auto ds = parse_dataset(
      R"({"id":"a","text":"notice to vacate","sbdh":["pain","housing_instability","pain"],"presence":"present","period":"current","split":"eval","note":"x"})"
      "\n\n"
      R"({"text":"t","presence":"no","period":"future"})"
      "\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.examples[0].sbdh, (std::vector<Sbdh>{Sbdh::housing_instability, Sbdh::pain}));
  EXPECT_EQ(ds.examples[0].split, Split::eval);
  EXPECT_EQ(ds.examples[0].extra["note"], "x");
  EXPECT_EQ(ds.examples[1].id, "line-3");
  EXPECT_EQ(ds.examples[1].split, Split::none);
}

TEST(Ingest, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text, IngestOptions o = {}) -> std::size_t {
    try {
      parse_dataset(text, o);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  const std::string good = R"({"id":"a","text":"t","presence":"no","period":"future"})";
  EXPECT_EQ(line_of(good + "\n{bad json"), 2u);
  EXPECT_EQ(line_of(good + "\n" + good), 2u);  // duplicate id
  EXPECT_EQ(line_of(R"({"text":"t","presence":"evicted","period":"future"})"), 1u);
  EXPECT_EQ(line_of(R"({"text":"t","presence":"no"})"), 1u);
  EXPECT_EQ(line_of(R"({"text":"t","presence":"no","period":"future","sbdh":["nope"]})"), 1u);
  EXPECT_EQ(line_of(R"({"text":"t","presence":"pending","period":"history"})",
                    {CombinationPolicy{CombinationMode::strict}}),
            1u);
  const auto ds = parse_dataset(R"({"text":"t","presence":"pending","period":"history"})");
  EXPECT_EQ(ds.combination_warnings, 1u);
}

TEST(Ingest, ProseScheme) {
  const auto ds = parse_dataset(R"({"text":"t","presence":"irrelevant","period":"no"})", {{}, LabelScheme::prose});
  EXPECT_EQ(ds.examples[0].gold, (LabelPair{Presence::no, Period::irrelevant}));
}

TEST(Ingest, RoundTripSynthetic) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 300;
  cfg.seed = 7;
  auto ds = split(synthesize(cfg), {}, 3);
  ds.examples[5].extra["source"] = "manual";
  ds.examples[6].extra["score"] = 0.25;
  const auto path = temp_file("roundtrip.jsonl");
  write_dataset(ds, path);
  const auto back = ingest(path);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back.examples[i], ds.examples[i]) << i;

  const auto prose = temp_file("roundtrip_prose.jsonl");
  write_dataset(ds, prose, LabelScheme::prose);
  EXPECT_EQ(ingest(prose, {{}, LabelScheme::prose}).examples, ds.examples);
}

TEST(KeywordFilter, SubsetAndContainment) {
  const std::vector<std::string> texts = {
      "Received a NOTICE TO VACATE today", "nothing here", "Writ of Possession and summary process",
      "notice to pay", "unlawful detainer filed"};
  const auto out = keyword_filter(texts);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& m : out) {
    EXPECT_NE(std::find(texts.begin(), texts.end(), m.text), texts.end());
    ASSERT_FALSE(m.keywords.empty());
    for (const auto& k : m.keywords) EXPECT_NE(lowercase(m.text).find(lowercase(k)), std::string::npos);
  }
  EXPECT_EQ(out[1].keywords.size(), 2u);
  EXPECT_TRUE(keyword_filter(texts, {"zzz"}).empty());
}

TEST(KeywordFilter, DefaultKeywords) { EXPECT_EQ(default_eviction_keywords().size(), 7u); }

TEST(Split, CountsLargestRemainder) {
  EXPECT_EQ(split_counts(5271, {}), (std::array<std::size_t, 3>{3163, 1054, 1054}));
  EXPECT_EQ(split_counts(10, {}), (std::array<std::size_t, 3>{6, 2, 2}));
  EXPECT_EQ(split_counts(7, {0.5, 0.25, 0.25}), (std::array<std::size_t, 3>{3, 2, 2}));
}

TEST(Split, PartitionProperty) {
  for (std::size_t n : {3u, 17u, 100u, 1001u}) {
    auto cfg = GeneratorConfig::defaults();
    cfg.total_count = n;
    const auto ds = synthesize(cfg);
    const auto s = split(ds, {0.5, 0.3, 0.2}, n);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (auto which : {Split::train, Split::eval, Split::test})
      for (const auto* ex : s.in_split(which)) {
        EXPECT_TRUE(seen.insert(ex->id).second);
        ++total;
      }
    EXPECT_EQ(total, n);
    const auto sizes = s.split_sizes();
    EXPECT_EQ(sizes.unassigned, 0u);
    const auto expect = split_counts(n, {0.5, 0.3, 0.2});
    EXPECT_EQ(sizes.train, expect[0]);
    EXPECT_EQ(sizes.eval, expect[1]);
    // Same seed, same assignment; examples keep their order.
    EXPECT_EQ(split(ds, {0.5, 0.3, 0.2}, n).examples, s.examples);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(s.examples[i].id, ds.examples[i].id);
  }
  EXPECT_THROW(split(synthesize([] { auto c = GeneratorConfig::defaults(); c.total_count = 10; return c; }()),
                     {0.5, 0.5, 0.5}, 0),
               InputError);
}

TEST(Split, Subsample) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 500;
  const auto ds = split(synthesize(cfg), {}, 0);
  const auto train = ds.split_sizes().train;
  const auto sub = subsample_train(ds, 0.1, 4);
  EXPECT_EQ(sub.split_sizes().train, static_cast<std::size_t>(std::ceil(0.1 * train)));
  EXPECT_EQ(sub.split_sizes().eval, ds.split_sizes().eval);
  EXPECT_EQ(sub.split_sizes().test, ds.split_sizes().test);
  EXPECT_EQ(subsample_train(ds, 0.1, 4).examples, sub.examples);
  EXPECT_EQ(subsample_train(ds, 1.0, 4).examples, ds.examples);
  EXPECT_THROW(subsample_train(ds, 0.0, 4), InputError);
}

TEST(Synth, DefaultJointMatchesMarginals) {
  const auto cfg = GeneratorConfig::defaults();
  std::array<double, kNumPresence> p{};
  std::array<double, kNumPeriod> q{};
  double total = 0;
  for (const auto& [pair, w] : cfg.class_distribution) {
    p[static_cast<std::size_t>(pair.presence)] += w;
    q[static_cast<std::size_t>(pair.period)] += w;
    total += w;
    EXPECT_TRUE(in_whitelist(pair));
  }
  EXPECT_EQ(total, 5271);
  for (std::size_t k = 0; k < kNumPresence; ++k) EXPECT_EQ(p[k], kPresenceAll[k]);
  for (std::size_t k = 0; k < kNumPeriod; ++k) EXPECT_EQ(q[k], kPeriodAll[k]);
}

TEST(Synth, ProportionsWithinTwoPoints) {
  auto cfg = GeneratorConfig::defaults();
  const auto ds = synthesize(cfg);
  ASSERT_EQ(ds.size(), 5271u);
  std::array<double, kNumPresence> p{};
  std::array<double, kNumPeriod> q{};
  for (const auto& ex : ds.examples) {
    p[static_cast<std::size_t>(ex.gold.presence)] += 1;
    q[static_cast<std::size_t>(ex.gold.period)] += 1;
  }
  for (std::size_t k = 0; k < kNumPresence; ++k) EXPECT_NEAR(p[k] / 5271, kPresenceAll[k] / 5271, 0.02);
  for (std::size_t k = 0; k < kNumPeriod; ++k) EXPECT_NEAR(q[k] / 5271, kPeriodAll[k] / 5271, 0.02);
}

TEST(Synth, ChiSquareAtTenThousand) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 10000;
  const auto ds = synthesize(cfg);
  double total = 0;
  for (const auto& [pair, w] : cfg.class_distribution) total += w;
  double chi2 = 0;
  for (const auto& [pair, w] : cfg.class_distribution) {
    const double expected = w / total * 10000;
    const double observed = static_cast<double>(std::count_if(
        ds.examples.begin(), ds.examples.end(), [&](const Example& e) { return e.gold == pair; }));
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  // 99.9th percentile of chi-square with 10 degrees of freedom.
  EXPECT_LT(chi2, 29.588);
}

TEST(Synth, PlantedLiftsRecovered) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 10000;
  cfg.seed = 3;
  const auto ds = synthesize(cfg);
  for (const auto& [key, lift] : cfg.lift) {
    const double got = empirical_lift(ds, key.first, key.second);
    EXPECT_NEAR(got / lift, 1.0, 0.2) << sbdh_name(key.first) << " x " << presence_name(key.second);
  }
}

TEST(Synth, MarginalTagRatePreserved) {
  const auto cfg = GeneratorConfig::defaults();
  const auto pi = cfg.presence_marginal();
  const auto probs = cfg.tag_probabilities();
  for (std::size_t c = 0; c < kNumSbdh; ++c) {
    double marginal = 0;
    for (std::size_t k = 0; k < kNumPresence; ++k) {
      marginal += pi[k] * probs[c][k];
      EXPECT_GE(probs[c][k], 0.0);
      EXPECT_LE(probs[c][k], 1.0);
    }
    EXPECT_NEAR(marginal, cfg.base_rate[c], 1e-12);
  }
}

TEST(Synth, Deterministic) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 200;
  cfg.seed = 11;
  EXPECT_EQ(synthesize(cfg).examples, synthesize(cfg).examples);
  auto other = cfg;
  other.seed = 12;
  EXPECT_NE(synthesize(other).examples, synthesize(cfg).examples);
}

TEST(Synth, TextsAreNonEmptyAndCanonical) {
  auto cfg = GeneratorConfig::defaults();
  cfg.total_count = 400;
  for (const auto& ex : synthesize(cfg).examples) {
    EXPECT_FALSE(ex.text.empty());
    EXPECT_TRUE(std::is_sorted(ex.sbdh.begin(), ex.sbdh.end()));
    EXPECT_TRUE(in_whitelist(ex.gold));
  }
}

TEST(Synth, ConfigKeys) {
  const auto kv = KeyValue::parse(
      "total_count = 50\nseed = 4\ndefault_lifts = false\nlift.pain.pending = 2\n"
      "base_rate.pain = 0.1\nclass.current.present = 1\nclass.future.no = 1\n");
  const auto cfg = GeneratorConfig::from_keyvalue(kv);
  EXPECT_EQ(cfg.total_count, 50u);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.lift.size(), 1u);
  EXPECT_EQ(cfg.class_distribution.size(), 2u);
  EXPECT_DOUBLE_EQ(cfg.base_rate[static_cast<std::size_t>(Sbdh::pain)], 0.1);
  EXPECT_THROW(GeneratorConfig::from_keyvalue(KeyValue::parse("lift.pain = 2\n")), ConfigError);
  EXPECT_THROW(GeneratorConfig::from_keyvalue(KeyValue::parse("class.current.evicted = 2\n")), ConfigError);
}

TEST(Synth, InfeasibleLiftRejected) {
  auto cfg = GeneratorConfig::defaults();
  // P(present) is about 0.47, so a lift of 3 would need more than all the tag mass.
  cfg.lift[{Sbdh::housing_instability, Presence::present}] = 3.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GeneratorConfig::defaults();
  cfg.lift[{Sbdh::pain, Presence::no}] = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(KeyValueFile, ParseAndTypes) {
  const auto kv = KeyValue::parse("# c\n a = 1 \nb=x, y ,z\nc = true # trailing\n\nd = 2.5\n");
  EXPECT_EQ(kv.get_int("a", 0), 1);
  EXPECT_EQ(kv.get_list("b", {}), (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_TRUE(kv.get_bool("c", false));
  EXPECT_DOUBLE_EQ(kv.get_double("d", 0), 2.5);
  EXPECT_EQ(kv.get_string("missing", "fb"), "fb");
  EXPECT_TRUE(kv.unused_keys().empty());
  EXPECT_THROW(kv.get_int("b", 0), ConfigError);
  EXPECT_THROW(KeyValue::parse("no equals sign\n"), ParseError);
}

TEST(KeyValueFile, UnusedKeysAndPrefix) {
  const auto kv = KeyValue::parse("x.a = 1\nx.b = 2\ny = 3\n");
  EXPECT_EQ(kv.with_prefix("x.").size(), 2u);
  EXPECT_EQ(kv.unused_keys(), (std::vector<std::string>{"y"}));
}
