#include "kiresh/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "kiresh/error.hpp"
#include "kiresh/rng.hpp"

namespace kiresh {

namespace {

using P = Presence;
using T = Period;
using Bank = std::vector<std::string_view>;

// Eviction phrases per (period, presence), seeded from the annotation guide.
const Bank& phrase_bank(const LabelPair& pair) {
  static const std::map<LabelPair, Bank> banks = {
      {{P::absent, T::history},
       {"background check shows veteran was never evicted",
        "veteran denies any prior eviction", "has never been evicted before",
        "no history of eviction per veteran report"}},
      {{P::present, T::history},
       {"has been evicted", "was evicted from previous residence",
        "was evicted from his apartment last year",
        "reports a prior eviction from section 8 housing",
        "lost housing after an eviction in 2018"}},
      {{P::uncertain, T::history},
       {"may have had an eviction", "unclear whether veteran was evicted in the past",
        "possibly evicted from a previous apartment"}},
      {{P::absent, T::current},
       {"landlord denies they are being evicted",
        "landlord explained she didn't intend to evict him",
        "agreed not to evict him", "eviction has been rescinded"}},
      {{P::present, T::current},
       {"is getting evicted", "is being evicted",
        "received eviction notice and must be out by 5th february",
        "got eviction notice today", "received an eviction notice",
        "sent a letter of intent to evict", "landlord is pursuing eviction"}},
      {{P::pending, T::current},
       {"planning to evict", "trying to evict him", "intend to evict",
        "landlord has an eviction notice to serve her", "i am about to get evicted",
        "facing eviction", "threatening to evict", "expected to be evicted",
        "likely to be evicted soon", "in imminent danger of being evicted"}},
      {{P::uncertain, T::current},
       {"this sw phoned patient re: eviction",
        "if patient had been issued an eviction notice",
        "pt did not show up to eviction hearing", "f/u regarding possible eviction",
        "they can evict me, i don't care", "no forward motion on eviction yet"}},
      {{P::no, T::future},
       {"possibly facing eviction", "may be evicted", "in danger of being evicted",
        "requested paperwork for eviction prevention support",
        "afraid of an eviction", "can't evict her during the pandemic",
        "indicated that he won't evict at this time", "so he doesn't get evicted",
        "if landlord moves forward with eviction",
        "ll willing to work with them to avoid eviction"}},
      {{P::no, T::irrelevant},
       {"patient has to evict his son", "veteran's girlfriend is getting evicted",
        "his neighbor is being evicted", "daughter received an eviction notice"}},
      {{P::no, T::uncertain},
       {"eviction noted in a prior entry without detail",
        "eviction status could not be determined from context",
        "referenced eviction without further context"}},
      {{P::mutual_rescission, T::current},
       {"landlord and veteran agreed on mutual rescission at end of month",
        "landlord states will talk with veteran about mutual rescission instead",
        "signed a notice to mutual rescission", "lease ended by mutual rescission"}},
  };
  static const Bank fallback = {"eviction was mentioned"};
  const auto it = banks.find(pair);
  return it == banks.end() ? fallback : it->second;
}

const Bank& ambiguous_bank() {
  static const Bank bank = {
      "discussed eviction", "eviction was addressed during the visit",
      "the topic of eviction came up", "eviction concerns reviewed",
      "housing and eviction discussed", "re: eviction",
      "spoke about eviction with veteran"};
  return bank;
}

const Bank& mention_bank(Sbdh c) {
  static const std::array<Bank, kNumSbdh> banks = {{
      {"veteran is currently homeless", "staying in a shelter",
       "has been couch surfing"},
      {"reports not having enough food", "relies on the food pantry"},
      {"is behind on bills", "has limited income", "cannot afford rent increases"},
      {"is unemployed", "was recently laid off"},
      {"has a court date next month", "is on probation"},
      {"has no phone to schedule visits", "lacks transportation to appointments"},
      {"was discharged from the inpatient unit", "recent admission noted"},
      {"reports chronic back pain", "pain limits activity"},
      {"uses a wheelchair", "is on disability"},
      {"lives alone", "feels isolated", "has no family support"},
      {"reports depression", "endorses anxiety", "ptsd symptoms reported"},
      {"history of alcohol use", "reports cocaine use", "opioid use disorder"},
      {"endorses passive suicidal ideation", "history of suicide attempt"},
  }};
  return banks[static_cast<std::size_t>(c)];
}

const Bank& filler_bank() {
  static const Bank bank = {
      "veteran seen in clinic today", "sw met with veteran in office",
      "plan discussed with the team", "will follow up next week",
      "veteran was pleasant and cooperative", "vitals were within normal limits",
      "veteran is engaged in care", "case manager reviewed goals",
      "veteran agreed with the plan", "writer provided resources",
      "appointment scheduled for next month", "veteran verbalized understanding",
      "no acute distress observed", "veteran arrived on time",
      "call placed to veteran", "note written per program guidelines",
      "veteran asked about benefits paperwork", "writer will coordinate with staff",
      "veteran reports sleeping well", "veteran denies new concerns today",
      "medications reviewed with veteran", "contact information updated",
      "veteran was informed of available services", "writer met veteran in lobby",
  };
  return bank;
}

const Bank& noise_words() {
  static const Bank bank = {"today", "also", "per", "noted", "again", "reportedly",
                            "currently", "still", "briefly", "overall"};
  return bank;
}

std::string_view pick(const Bank& bank, Rng& rng) { return bank[rng.index(bank.size())]; }

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = c == ' ';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string format_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn-%06zu", i);
  return buf;
}

}  // namespace

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  // Joint counts consistent with both marginals of the reference corpus.
  c.class_distribution = {
      {{P::no, T::future}, 1188},           {{P::no, T::irrelevant}, 406},
      {{P::no, T::uncertain}, 62},          {{P::present, T::history}, 800},
      {{P::absent, T::history}, 50},        {{P::uncertain, T::history}, 31},
      {{P::present, T::current}, 1703},     {{P::absent, T::current}, 165},
      {{P::uncertain, T::current}, 84},     {{P::pending, T::current}, 691},
      {{P::mutual_rescission, T::current}, 91},
  };
  c.lift = {
      {{Sbdh::housing_instability, P::pending}, 2.8},
      {{Sbdh::financial_insecurity, P::present}, 1.8},
      {{Sbdh::legal_problems, P::mutual_rescission}, 2.8},
      {{Sbdh::social_isolation, P::uncertain}, 2.8},
      {{Sbdh::substance_abuse, P::no}, 3.0},
      {{Sbdh::psychiatric_symptoms, P::absent}, 2.8},
  };
  c.base_rate.fill(0.2);
  c.base_rate[static_cast<std::size_t>(Sbdh::financial_insecurity)] = 0.3;
  c.base_rate[static_cast<std::size_t>(Sbdh::legal_problems)] = 0.1;
  c.base_rate[static_cast<std::size_t>(Sbdh::social_isolation)] = 0.15;
  c.base_rate[static_cast<std::size_t>(Sbdh::substance_abuse)] = 0.3;
  c.presence_length = {43, 34, 43, 35, 40, 47};
  c.period_length = {42, 48, 37, 27, 34};
  return c;
}

GeneratorConfig GeneratorConfig::from_keyvalue(const KeyValue& kv) {
  GeneratorConfig c = defaults();
  c.total_count = static_cast<std::size_t>(kv.get_uint("total_count", c.total_count));
  c.seed = kv.get_uint("seed", c.seed);
  c.ambiguity = kv.get_double("ambiguity", c.ambiguity);
  c.mention_rate = kv.get_double("mention_rate", c.mention_rate);
  c.keyword_rate = kv.get_double("keyword_rate", c.keyword_rate);

  auto number = [](const std::string& key, const std::string& v) {
    KeyValue one;
    one.set(key, v);
    return one.get_double(key, 0.0);
  };

  const auto classes = kv.with_prefix("class.");
  if (!classes.empty()) {
    c.class_distribution.clear();
    for (const auto& [key, value] : classes) {
      const auto parts = split_list(key, '.');
      if (parts.size() != 2) throw ConfigError("bad key 'class." + key + "'");
      const auto period = parse_period(parts[0]);
      const auto presence = parse_presence(parts[1]);
      if (!period || !presence)
        throw ConfigError("unknown label pair in 'class." + key + "'");
      c.class_distribution.push_back({{*presence, *period}, number(key, value)});
    }
  }
  if (!kv.get_bool("default_lifts", true)) c.lift.clear();
  for (const auto& [key, value] : kv.with_prefix("lift.")) {
    const auto parts = split_list(key, '.');
    if (parts.size() != 2) throw ConfigError("bad key 'lift." + key + "'");
    const auto tag = parse_sbdh(parts[0]);
    const auto presence = parse_presence(parts[1]);
    if (!tag || !presence) throw ConfigError("unknown names in 'lift." + key + "'");
    c.lift[{*tag, *presence}] = number(key, value);
  }
  for (const auto& [key, value] : kv.with_prefix("base_rate.")) {
    const auto tag = parse_sbdh(key);
    if (!tag) throw ConfigError("unknown sbdh in 'base_rate." + key + "'");
    c.base_rate[static_cast<std::size_t>(*tag)] = number(key, value);
  }
  for (const auto& [key, value] : kv.with_prefix("length.presence.")) {
    const auto p = parse_presence(key);
    if (!p) throw ConfigError("unknown presence in 'length.presence." + key + "'");
    c.presence_length[static_cast<std::size_t>(*p)] = number(key, value);
  }
  for (const auto& [key, value] : kv.with_prefix("length.period.")) {
    const auto p = parse_period(key);
    if (!p) throw ConfigError("unknown period in 'length.period." + key + "'");
    c.period_length[static_cast<std::size_t>(*p)] = number(key, value);
  }
  return c;
}

std::array<double, kNumPresence> GeneratorConfig::presence_marginal() const {
  std::array<double, kNumPresence> pi{};
  double total = 0;
  for (const auto& [pair, w] : class_distribution) {
    pi[static_cast<std::size_t>(pair.presence)] += w;
    total += w;
  }
  if (total > 0)
    for (auto& v : pi) v /= total;
  return pi;
}

TagProbabilities GeneratorConfig::tag_probabilities() const {
  const auto pi = presence_marginal();
  TagProbabilities probs{};
  for (std::size_t c = 0; c < kNumSbdh; ++c) {
    std::array<double, kNumPresence> ell{};
    std::array<bool, kNumPresence> configured{};
    double configured_mass = 0, free_mass = 0;
    for (std::size_t k = 0; k < kNumPresence; ++k) {
      const auto it = lift.find({static_cast<Sbdh>(c), static_cast<Presence>(k)});
      if (it != lift.end()) {
        configured[k] = true;
        ell[k] = it->second;
        configured_mass += pi[k] * it->second;
      } else {
        free_mass += pi[k];
      }
    }
    if (free_mass > 0) {
      const double common = (1.0 - configured_mass) / free_mass;
      for (std::size_t k = 0; k < kNumPresence; ++k)
        if (!configured[k]) ell[k] = common;
    } else if (configured_mass > 0) {
      for (auto& l : ell) l /= configured_mass;
    }
    for (std::size_t k = 0; k < kNumPresence; ++k) probs[c][k] = base_rate[c] * ell[k];
  }
  return probs;
}

double GeneratorConfig::mean_length(const LabelPair& pair) const {
  return 0.5 * (presence_length[static_cast<std::size_t>(pair.presence)] +
                period_length[static_cast<std::size_t>(pair.period)]);
}

void GeneratorConfig::validate() const {
  if (total_count == 0) throw ConfigError("total_count must be positive");
  double total = 0;
  for (const auto& [pair, w] : class_distribution) {
    if (!std::isfinite(w) || w < 0) throw ConfigError("class weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw ConfigError("class distribution has zero total weight");
  for (const auto& [key, l] : lift)
    if (!std::isfinite(l) || l < 0)
      throw ConfigError("lift for " + std::string(sbdh_name(key.first)) +
                        " must be finite and >= 0");
  for (double b : base_rate)
    if (!(b >= 0 && b <= 1)) throw ConfigError("base rates must lie in [0, 1]");
  for (double r : {ambiguity, mention_rate, keyword_rate})
    if (!(r >= 0 && r <= 1)) throw ConfigError("rates must lie in [0, 1]");

  const auto probs = tag_probabilities();
  for (std::size_t c = 0; c < kNumSbdh; ++c)
    for (std::size_t k = 0; k < kNumPresence; ++k)
      if (!(probs[c][k] >= -1e-12 && probs[c][k] <= 1 + 1e-12))
        throw ConfigError("lifts for " + std::string(sbdh_name(static_cast<Sbdh>(c))) +
                          " are infeasible at the configured class distribution");
}

Dataset synthesize(const GeneratorConfig& config) {
  config.validate();
  const std::size_t n = config.total_count;

  // Quota allocation of labels.
  const auto& dist = config.class_distribution;
  double total = 0;
  for (const auto& [pair, w] : dist) total += w;
  std::vector<std::size_t> counts(dist.size());
  std::vector<double> rem(dist.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double exact = dist[i].second / total * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % order.size()]];

  std::vector<LabelPair> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < dist.size(); ++i)
    labels.insert(labels.end(), counts[i], dist[i].first);

  Rng rng(derive_seed(config.seed, fnv1a("synthesize")));
  rng.shuffle(labels);

  const auto tag_probs = config.tag_probabilities();
  Dataset ds;
  ds.provenance = Provenance::synthetic;
  ds.generator_seed = config.seed;
  ds.examples.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.id = format_id(i);
    ex.gold = labels[i];
    const auto k = static_cast<std::size_t>(ex.gold.presence);
    for (std::size_t c = 0; c < kNumSbdh; ++c)
      if (rng.bernoulli(tag_probs[c][k])) ex.sbdh.push_back(static_cast<Sbdh>(c));

    std::vector<std::string> sentences;
    sentences.emplace_back(rng.bernoulli(config.ambiguity) ? pick(ambiguous_bank(), rng)
                                                           : pick(phrase_bank(ex.gold), rng));
    if (rng.bernoulli(config.keyword_rate)) {
      const auto& kw = default_eviction_keywords();
      sentences.push_back("chart mentions " + kw[rng.index(kw.size())]);
    }
    for (auto c : ex.sbdh)
      if (rng.bernoulli(config.mention_rate))
        sentences.emplace_back(pick(mention_bank(c), rng));

    std::size_t words = 0;
    for (const auto& s : sentences) words += word_count(s);
    const double mean = config.mean_length(ex.gold);
    const double target = std::max(static_cast<double>(words) + 2.0,
                                   std::round(mean + 0.25 * mean * rng.normal()));
    while (static_cast<double>(words) < target) {
      std::string s(pick(filler_bank(), rng));
      if (rng.bernoulli(0.3)) {
        s += ' ';
        s += pick(noise_words(), rng);
      }
      words += word_count(s);
      sentences.push_back(std::move(s));
    }
    rng.shuffle(sentences);

    std::string text;
    for (const auto& s : sentences) {
      if (!text.empty()) text += ' ';
      text += s;
      text += " .";
    }
    ex.text = std::move(text);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

double empirical_lift(const Dataset& ds, Sbdh tag, Presence presence) {
  std::size_t n = 0, tagged = 0, in_class = 0, both = 0;
  for (const auto& ex : ds.examples) {
    ++n;
    const bool t = ex.has_sbdh(tag);
    const bool k = ex.gold.presence == presence;
    tagged += t;
    in_class += k;
    both += t && k;
  }
  if (n == 0 || tagged == 0 || in_class == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p_tag_given_class = static_cast<double>(both) / static_cast<double>(in_class);
  const double p_tag = static_cast<double>(tagged) / static_cast<double>(n);
  return p_tag_given_class / p_tag;
}

}  // namespace kiresh
