#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kiresh/corpus.hpp"
#include "kiresh/rng.hpp"
#include "kiresh/taxonomy.hpp"

namespace kiresh {

inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::string_view kUnk = "[UNK]";

inline constexpr std::size_t kDefaultMaxLen = 128;

// Lowercases and splits on whitespace and punctuation. Word characters are
// alphanumerics and '_', so SBDH names stay whole; the four bracketed
// specials pass through unchanged.
std::vector<std::string> tokenize(std::string_view text);

// "[CLS] s [SEP] tag1 [SEP] tag2 ..."; no separator when `sbdh` is empty.
std::string build_kiresh_input(std::string_view sentence, const std::vector<Sbdh>& sbdh);

enum class Variant : std::uint8_t { both_masked, presence_revealed, period_revealed };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

// Appends the eviction prompt. Revealed variants need `gold`; throws
// EncodingError without it.
std::string build_prompted_input(std::string_view base, Variant variant,
                                 const std::optional<LabelPair>& gold = std::nullopt);

using VariantProbabilities = std::array<double, 3>;
inline constexpr VariantProbabilities kUniformVariants = {1.0 / 3, 1.0 / 3, 1.0 / 3};

Variant sample_variant(Rng& rng, const VariantProbabilities& probs = kUniformVariants);

// Token ids. Layout: the four specials, then one atomic label token per class
// of each task, the SBDH names, the prompt words, then training-split words
// by descending frequency (ties lexicographic).
class Vocabulary {
public:
  static Vocabulary build(const std::vector<std::string>& training_texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t id(std::string_view token) const;  // unk fallback
  std::optional<std::int32_t> find(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t cls() const { return 0; }
  std::int32_t sep() const { return 1; }
  std::int32_t mask() const { return 2; }
  std::int32_t unk() const { return 3; }
  std::int32_t label_token(Task t, int code) const;
  // Task and class of a label-token id, if it is one.
  std::optional<std::pair<Task, int>> label_of(std::int32_t id) const;

  std::uint64_t hash() const;

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Internal vocabulary entry for a label token, e.g. "<presence:pending>".
std::string label_token_string(Task t, int code);

enum class SlotState : std::uint8_t { masked, revealed };

struct Slot {
  std::size_t index = 0;
  SlotState state = SlotState::masked;
  int label = -1;  // class code when revealed
};

struct EncodedInput {
  std::vector<std::int32_t> ids;
  std::optional<Slot> presence_slot;
  std::optional<Slot> period_slot;
  std::optional<Variant> variant;  // set iff the input carries the prompt
  bool truncated = false;

  bool has_prompt() const { return variant.has_value(); }
  const std::optional<Slot>& slot(Task t) const {
    return t == Task::presence ? presence_slot : period_slot;
  }
  // A task is supervised unless its slot carries a revealed label.
  bool task_masked(Task t) const {
    const auto& s = slot(t);
    return !s || s->state == SlotState::masked;
  }
};

// Tokens from the first [SEP] onward (SBDH tags and prompt) are never
// truncated; base-text tokens are dropped from the right. Throws
// EncodingError if the protected tail alone exceeds max_len.
EncodedInput encode(std::string_view text, const Vocabulary& vocab,
                    std::size_t max_len = kDefaultMaxLen);

// Substitutes slot tokens of a prompt-bearing encoding for another variant.
// Equivalent to re-encoding build_prompted_input(base, variant, gold).
EncodedInput with_variant(const EncodedInput& in, Variant variant, const LabelPair& gold,
                          const Vocabulary& vocab);

struct Reveal {
  Task task;
  int label;
};
EncodedInput with_reveal(const EncodedInput& in, const Reveal& reveal, const Vocabulary& vocab);

// Keyword lists per category, matched as whole-token sequences.
class Lexicon {
public:
  static const Lexicon& builtin();
  // Lines of "category: keyword1, keyword2"; '#' comments allowed.
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);

  std::vector<Sbdh> match(std::string_view text) const;
  const std::map<Sbdh, std::vector<std::string>>& entries() const { return entries_; }

private:
  std::map<Sbdh, std::vector<std::string>> entries_;
};

enum class ProviderKind : std::uint8_t { gold, lexicon, noisy, none };

struct SbdhProvider {
  ProviderKind kind = ProviderKind::gold;
  double flip_rate = 0.0;  // noisy: chance each absent tag is added
  double drop_rate = 0.0;  // noisy: chance each gold tag is dropped
  std::uint64_t seed = 0;
  std::shared_ptr<const Lexicon> lexicon;  // builtin when null
  // Categories the provider may emit; ablations narrow this.
  std::bitset<kNumSbdh> allowed = std::bitset<kNumSbdh>().set();

  static SbdhProvider gold_tags() { return {}; }
  static SbdhProvider noisy(double flip, double drop, std::uint64_t seed) {
    SbdhProvider p;
    p.kind = ProviderKind::noisy;
    p.flip_rate = flip;
    p.drop_rate = drop;
    p.seed = seed;
    return p;
  }
  static SbdhProvider of_kind(ProviderKind k) {
    SbdhProvider p;
    p.kind = k;
    return p;
  }
};

std::string_view provider_name(ProviderKind k);
std::optional<ProviderKind> parse_provider(std::string_view name);

// Canonical category order. Noisy output is a pure function of
// (seed, example id).
std::vector<Sbdh> provide_sbdh(const SbdhProvider& provider, const Example& ex);

enum class Mode : std::uint8_t { plain, kiresh, prompt, kiresh_prompt };

std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view name);
inline bool mode_has_prompt(Mode m) { return m == Mode::prompt || m == Mode::kiresh_prompt; }
inline bool mode_has_kiresh(Mode m) { return m == Mode::kiresh || m == Mode::kiresh_prompt; }

// The text fed to the model for an example under a mode. Prompt modes use
// `variant` (both_masked at inference); other modes ignore it.
std::string build_model_text(const Example& ex, Mode mode, const SbdhProvider& provider,
                             Variant variant = Variant::both_masked);

}  // namespace kiresh
