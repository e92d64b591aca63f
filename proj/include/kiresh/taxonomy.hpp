#pragma once

// Label sets for the two eviction tasks, SBDH categories, label-pair
// validity, and the MIMIC-SBDH substance-use label conversion.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kiresh {

enum class Presence : std::uint8_t {
  no = 0,
  present = 1,
  absent = 2,
  uncertain = 3,
  pending = 4,
  mutual_rescission = 5,
};

enum class Period : std::uint8_t {
  future = 0,
  irrelevant = 1,
  current = 2,
  uncertain = 3,
  history = 4,
};

inline constexpr std::size_t kNumPresence = 6;
inline constexpr std::size_t kNumPeriod = 5;
inline constexpr std::size_t kNumSbdh = 13;

enum class Task : std::uint8_t { presence, period };
inline constexpr std::array<Task, 2> kTasks = {Task::presence, Task::period};

inline constexpr std::size_t num_classes(Task t) {
  return t == Task::presence ? kNumPresence : kNumPeriod;
}

std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view name);

// The multi-task target: one label per task.
struct LabelPair {
  Presence presence = Presence::no;
  Period period = Period::future;

  int code(Task t) const {
    return t == Task::presence ? static_cast<int>(presence)
                               : static_cast<int>(period);
  }
  friend auto operator<=>(const LabelPair&, const LabelPair&) = default;
};

enum class Sbdh : std::uint8_t {
  housing_instability,
  food_insecurity,
  financial_insecurity,
  employment_insecurity,
  legal_problems,
  barriers_to_care,
  transitions_of_care,
  pain,
  patient_disability,
  social_isolation,
  psychiatric_symptoms,
  substance_abuse,
  suicidal_behaviors,
};

// Table-column naming is canonical. The prose scheme swaps the
// "no"/"irrelevant" names between the tasks (presence no <-> irrelevant,
// period irrelevant <-> no); codes are unchanged.
enum class LabelScheme : std::uint8_t { table, prose };

std::string_view presence_name(Presence p, LabelScheme s = LabelScheme::table);
std::string_view period_name(Period p, LabelScheme s = LabelScheme::table);
std::string_view label_name(Task t, int code, LabelScheme s = LabelScheme::table);
std::string_view sbdh_name(Sbdh c);

std::optional<Presence> parse_presence(std::string_view name,
                                       LabelScheme s = LabelScheme::table);
std::optional<Period> parse_period(std::string_view name,
                                   LabelScheme s = LabelScheme::table);
std::optional<int> parse_label(Task t, std::string_view name,
                               LabelScheme s = LabelScheme::table);
std::optional<Sbdh> parse_sbdh(std::string_view name);
std::optional<LabelScheme> parse_label_scheme(std::string_view name);

const std::array<Sbdh, kNumSbdh>& all_sbdh();

// Stable (name, code) enumeration of a task's labels.
std::vector<std::pair<std::string, int>> label_codes(
    Task t, LabelScheme s = LabelScheme::table);

enum class CombinationMode : std::uint8_t { strict, permissive };

struct CombinationPolicy {
  CombinationMode mode = CombinationMode::permissive;
};

enum class Verdict : std::uint8_t { accepted, rejected, accepted_with_warning };

std::string_view verdict_name(Verdict v);

// Pairs exemplified by the annotation guideline.
const std::vector<LabelPair>& combination_whitelist();
bool in_whitelist(const LabelPair& pair);

Verdict validate_pair(const LabelPair& pair, const CombinationPolicy& policy);

// MIMIC-SBDH substance-use annotations, converted to the two-task layout.
enum class MimicRaw : std::uint8_t { present, past, never, unsure, none };
enum class MimicPresence : std::uint8_t { none, no, yes, unsure };
enum class MimicPeriod : std::uint8_t { none, no, current, past, unsure };

struct MimicLabel {
  MimicPresence presence;
  MimicPeriod period;
  friend bool operator==(const MimicLabel&, const MimicLabel&) = default;
};

std::string_view mimic_raw_name(MimicRaw r);
std::string_view mimic_presence_name(MimicPresence p);
std::string_view mimic_period_name(MimicPeriod p);

MimicLabel convert_mimic_sbdh_label(MimicRaw raw);
// Throws InputError naming the value when it is not one of
// Present, Past, Never, Unsure, None.
MimicLabel convert_mimic_sbdh_label(std::string_view raw);

}  // namespace kiresh
