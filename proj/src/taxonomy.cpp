#include "kiresh/taxonomy.hpp"

#include <algorithm>

#include "kiresh/error.hpp"

namespace kiresh {

namespace {

constexpr std::array<std::string_view, kNumPresence> kPresenceNames = {
    "no", "present", "absent", "uncertain", "pending", "mutual_rescission"};
constexpr std::array<std::string_view, kNumPeriod> kPeriodNames = {
    "future", "irrelevant", "current", "uncertain", "history"};
constexpr std::array<std::string_view, kNumSbdh> kSbdhNames = {
    "housing_instability",  "food_insecurity",    "financial_insecurity",
    "employment_insecurity", "legal_problems",     "barriers_to_care",
    "transitions_of_care",  "pain",               "patient_disability",
    "social_isolation",     "psychiatric_symptoms", "substance_abuse",
    "suicidal_behaviors"};

}  // namespace

std::string_view task_name(Task t) {
  return t == Task::presence ? "presence" : "period";
}

std::optional<Task> parse_task(std::string_view name) {
  if (name == "presence") return Task::presence;
  if (name == "period") return Task::period;
  return std::nullopt;
}

std::string_view presence_name(Presence p, LabelScheme s) {
  if (s == LabelScheme::prose && p == Presence::no) return "irrelevant";
  return kPresenceNames[static_cast<std::size_t>(p)];
}

std::string_view period_name(Period p, LabelScheme s) {
  if (s == LabelScheme::prose && p == Period::irrelevant) return "no";
  return kPeriodNames[static_cast<std::size_t>(p)];
}

std::string_view label_name(Task t, int code, LabelScheme s) {
  return t == Task::presence ? presence_name(static_cast<Presence>(code), s)
                             : period_name(static_cast<Period>(code), s);
}

std::string_view sbdh_name(Sbdh c) {
  return kSbdhNames[static_cast<std::size_t>(c)];
}

std::optional<Presence> parse_presence(std::string_view name, LabelScheme s) {
  for (std::size_t i = 0; i < kNumPresence; ++i) {
    const auto p = static_cast<Presence>(i);
    if (presence_name(p, s) == name) return p;
  }
  return std::nullopt;
}

std::optional<Period> parse_period(std::string_view name, LabelScheme s) {
  for (std::size_t i = 0; i < kNumPeriod; ++i) {
    const auto p = static_cast<Period>(i);
    if (period_name(p, s) == name) return p;
  }
  return std::nullopt;
}

std::optional<int> parse_label(Task t, std::string_view name, LabelScheme s) {
  if (t == Task::presence) {
    if (auto p = parse_presence(name, s)) return static_cast<int>(*p);
  } else {
    if (auto p = parse_period(name, s)) return static_cast<int>(*p);
  }
  return std::nullopt;
}

std::optional<Sbdh> parse_sbdh(std::string_view name) {
  const auto it = std::find(kSbdhNames.begin(), kSbdhNames.end(), name);
  if (it == kSbdhNames.end()) return std::nullopt;
  return static_cast<Sbdh>(it - kSbdhNames.begin());
}

std::optional<LabelScheme> parse_label_scheme(std::string_view name) {
  if (name == "table") return LabelScheme::table;
  if (name == "prose") return LabelScheme::prose;
  return std::nullopt;
}

const std::array<Sbdh, kNumSbdh>& all_sbdh() {
  static const std::array<Sbdh, kNumSbdh> all = [] {
    std::array<Sbdh, kNumSbdh> a{};
    for (std::size_t i = 0; i < kNumSbdh; ++i) a[i] = static_cast<Sbdh>(i);
    return a;
  }();
  return all;
}

std::vector<std::pair<std::string, int>> label_codes(Task t, LabelScheme s) {
  std::vector<std::pair<std::string, int>> out;
  for (std::size_t i = 0; i < num_classes(t); ++i) {
    const int code = static_cast<int>(i);
    out.emplace_back(std::string(label_name(t, code, s)), code);
  }
  return out;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::accepted: return "accepted";
    case Verdict::rejected: return "rejected";
    case Verdict::accepted_with_warning: return "accepted_with_warning";
  }
  return "?";
}

const std::vector<LabelPair>& combination_whitelist() {
  using P = Presence;
  using T = Period;
  // (uncertain, no) is not exemplified in the guideline, but the corpus
  // counts require it: presence "no" exceeds future + irrelevant by exactly
  // the period-uncertain count.
  static const std::vector<LabelPair> pairs = {
      {P::absent, T::history},   {P::present, T::history},
      {P::uncertain, T::history}, {P::absent, T::current},
      {P::present, T::current},  {P::pending, T::current},
      {P::uncertain, T::current}, {P::no, T::future},
      {P::no, T::irrelevant},    {P::no, T::uncertain},
      {P::mutual_rescission, T::current},
  };
  return pairs;
}

bool in_whitelist(const LabelPair& pair) {
  const auto& w = combination_whitelist();
  return std::find(w.begin(), w.end(), pair) != w.end();
}

Verdict validate_pair(const LabelPair& pair, const CombinationPolicy& policy) {
  const bool listed = in_whitelist(pair);
  if (policy.mode == CombinationMode::strict)
    return listed ? Verdict::accepted : Verdict::rejected;
  return listed ? Verdict::accepted : Verdict::accepted_with_warning;
}

std::string_view mimic_raw_name(MimicRaw r) {
  switch (r) {
    case MimicRaw::present: return "Present";
    case MimicRaw::past: return "Past";
    case MimicRaw::never: return "Never";
    case MimicRaw::unsure: return "Unsure";
    case MimicRaw::none: return "None";
  }
  return "?";
}

std::string_view mimic_presence_name(MimicPresence p) {
  switch (p) {
    case MimicPresence::none: return "none";
    case MimicPresence::no: return "no";
    case MimicPresence::yes: return "yes";
    case MimicPresence::unsure: return "unsure";
  }
  return "?";
}

std::string_view mimic_period_name(MimicPeriod p) {
  switch (p) {
    case MimicPeriod::none: return "none";
    case MimicPeriod::no: return "no";
    case MimicPeriod::current: return "current";
    case MimicPeriod::past: return "past";
    case MimicPeriod::unsure: return "unsure";
  }
  return "?";
}

MimicLabel convert_mimic_sbdh_label(MimicRaw raw) {
  switch (raw) {
    case MimicRaw::none: return {MimicPresence::none, MimicPeriod::none};
    case MimicRaw::present: return {MimicPresence::yes, MimicPeriod::current};
    case MimicRaw::past: return {MimicPresence::yes, MimicPeriod::past};
    case MimicRaw::never: return {MimicPresence::no, MimicPeriod::no};
    case MimicRaw::unsure: return {MimicPresence::unsure, MimicPeriod::unsure};
  }
  throw InputError("unreachable MIMIC label");
}

MimicLabel convert_mimic_sbdh_label(std::string_view raw) {
  for (auto r : {MimicRaw::present, MimicRaw::past, MimicRaw::never,
                 MimicRaw::unsure, MimicRaw::none}) {
    if (mimic_raw_name(r) == raw) return convert_mimic_sbdh_label(r);
  }
  throw InputError("unknown MIMIC-SBDH label '" + std::string(raw) + "'");
}

}  // namespace kiresh
