#include "kiresh/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kiresh/error.hpp"
#include "kiresh/keyvalue.hpp"

namespace kiresh {

namespace {

constexpr std::array<std::string_view, 4> kSpecials = {kCls, kSep, kMask, kUnk};
constexpr std::array<std::string_view, 6> kPromptWords = {"the", "eviction", "presence",
                                                          "is",  ".",        "period"};
// Token layout of the prompt tail, counted back from the end.
constexpr std::size_t kPromptTokens = 13;

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == '[') {
      bool special = false;
      for (auto s : kSpecials) {
        if (text.substr(i, s.size()) == s) {
          flush();
          out.emplace_back(s);
          i += s.size();
          special = true;
          break;
        }
      }
      if (special) continue;
    }
    if (std::isspace(c)) {
      flush();
    } else if (is_word_char(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
    ++i;
  }
  flush();
  return out;
}

std::string build_kiresh_input(std::string_view sentence, const std::vector<Sbdh>& sbdh) {
  std::string out(kCls);
  out += ' ';
  out += sentence;
  for (auto c : sbdh) {
    out += ' ';
    out += kSep;
    out += ' ';
    out += sbdh_name(c);
  }
  return out;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::both_masked: return "both_masked";
    case Variant::presence_revealed: return "presence_revealed";
    case Variant::period_revealed: return "period_revealed";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (auto v : {Variant::both_masked, Variant::presence_revealed, Variant::period_revealed})
    if (variant_name(v) == name) return v;
  return std::nullopt;
}

std::string build_prompted_input(std::string_view base, Variant variant,
                                 const std::optional<LabelPair>& gold) {
  if (variant != Variant::both_masked && !gold)
    throw EncodingError(std::string(variant_name(variant)) + " requires a gold label");
  const std::string_view presence = variant == Variant::presence_revealed
                                        ? presence_name(gold->presence)
                                        : kMask;
  const std::string_view period =
      variant == Variant::period_revealed ? period_name(gold->period) : kMask;
  std::string out(base);
  out += " [SEP] The eviction presence is ";
  out += presence;
  out += " . The eviction period is ";
  out += period;
  out += " .";
  return out;
}

Variant sample_variant(Rng& rng, const VariantProbabilities& probs) {
  const double u = rng.uniform();
  if (u < probs[0]) return Variant::both_masked;
  if (u < probs[0] + probs[1]) return Variant::presence_revealed;
  if (probs[2] > 0.0) return Variant::period_revealed;
  return probs[1] > 0.0 ? Variant::presence_revealed : Variant::both_masked;
}

// ---------------------------------------------------------------------------
// Vocabulary

std::string label_token_string(Task t, int code) {
  return "<" + std::string(task_name(t)) + ":" + std::string(label_name(t, code)) + ">";
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second)
      throw EncodingError("duplicate vocabulary token '" + v.tokens_[i] + "'");
  }
  for (std::size_t i = 0; i < kSpecials.size(); ++i)
    if (v.tokens_.size() <= i || v.tokens_[i] != kSpecials[i])
      throw EncodingError("vocabulary must start with the special tokens");
  for (auto t : {Task::presence, Task::period})
    for (std::size_t k = 0; k < num_classes(t); ++k)
      if (!v.find(label_token_string(t, static_cast<int>(k))))
        throw EncodingError("vocabulary lacks label tokens");
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& training_texts) {
  std::vector<std::string> tokens(kSpecials.begin(), kSpecials.end());
  for (auto t : {Task::presence, Task::period})
    for (std::size_t k = 0; k < num_classes(t); ++k)
      tokens.push_back(label_token_string(t, static_cast<int>(k)));
  for (auto c : all_sbdh()) tokens.emplace_back(sbdh_name(c));
  for (auto w : kPromptWords) tokens.emplace_back(w);

  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& text : training_texts)
    for (auto& tok : tokenize(text)) ++freq[tok];
  std::vector<std::pair<std::string, std::size_t>> words;
  for (auto& [w, n] : freq)
    if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) words.emplace_back(w, n);
  std::sort(words.begin(), words.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (auto& [w, n] : words) tokens.push_back(w);
  return from_tokens(std::move(tokens));
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  return find(token).value_or(unk());
}

std::int32_t Vocabulary::label_token(Task t, int code) const {
  // Label tokens directly follow the specials.
  const std::size_t offset = kSpecials.size() + (t == Task::presence ? 0 : kNumPresence);
  return static_cast<std::int32_t>(offset + static_cast<std::size_t>(code));
}

std::optional<std::pair<Task, int>> Vocabulary::label_of(std::int32_t id) const {
  const auto base = static_cast<std::int32_t>(kSpecials.size());
  if (id >= base && id < base + static_cast<std::int32_t>(kNumPresence))
    return std::pair{Task::presence, id - base};
  const auto pbase = base + static_cast<std::int32_t>(kNumPresence);
  if (id >= pbase && id < pbase + static_cast<std::int32_t>(kNumPeriod))
    return std::pair{Task::period, id - pbase};
  return std::nullopt;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a("\n", h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

struct PromptMatch {
  std::size_t start;  // index of the joining [SEP]
  std::string presence_token, period_token;
};

std::optional<PromptMatch> find_prompt(const std::vector<std::string>& toks) {
  if (toks.size() < kPromptTokens) return std::nullopt;
  const std::size_t s = toks.size() - kPromptTokens;
  static const std::array<std::string_view, kPromptTokens> pattern = {
      "[SEP]", "the", "eviction", "presence", "is", "", ".",
      "the",   "eviction", "period", "is", "", "."};
  for (std::size_t k = 0; k < kPromptTokens; ++k)
    if (!pattern[k].empty() && toks[s + k] != pattern[k]) return std::nullopt;
  return PromptMatch{s, toks[s + 5], toks[s + 11]};
}

Slot make_slot(Task t, const std::string& tok, std::size_t index) {
  if (tok == kMask) return Slot{index, SlotState::masked, -1};
  const auto code = parse_label(t, tok);
  if (!code)
    throw EncodingError("'" + tok + "' is neither [MASK] nor a " + std::string(task_name(t)) +
                        " label");
  return Slot{index, SlotState::revealed, *code};
}

std::int32_t slot_id(Task t, const Slot& s, const Vocabulary& vocab) {
  return s.state == SlotState::masked ? vocab.mask() : vocab.label_token(t, s.label);
}

Variant variant_of(const Slot& presence, const Slot& period) {
  const bool p = presence.state == SlotState::revealed;
  const bool q = period.state == SlotState::revealed;
  if (p && q) throw EncodingError("both prompt slots are revealed");
  return p ? Variant::presence_revealed : q ? Variant::period_revealed : Variant::both_masked;
}

}  // namespace

EncodedInput encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  auto toks = tokenize(text);
  if (toks.empty() || toks.front() != kCls) toks.insert(toks.begin(), std::string(kCls));

  const auto prompt = find_prompt(toks);
  if (prompt) {
    // The prompt must be the only one.
    std::vector<std::string> head(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(prompt->start));
    for (std::size_t i = 0; i + 4 < head.size(); ++i)
      if (head[i] == "the" && head[i + 1] == "eviction" && head[i + 3] == "is" &&
          (head[i + 2] == "presence" || head[i + 2] == "period") &&
          (head[i + 4] == kMask || parse_label(head[i + 2] == "presence" ? Task::presence : Task::period, head[i + 4])))
        throw EncodingError("input contains more than one prompt slot per task");
  }

  std::size_t tail_start = toks.size();
  for (std::size_t i = 1; i < toks.size(); ++i)
    if (toks[i] == kSep) {
      tail_start = i;
      break;
    }
  const std::size_t tail_len = toks.size() - tail_start;
  if (1 + tail_len > max_len)
    throw EncodingError("prompt and SBDH tokens (" + std::to_string(1 + tail_len) +
                        ") exceed max_len " + std::to_string(max_len));
  const std::size_t base_len = tail_start - 1;
  const std::size_t keep = std::min(base_len, max_len - 1 - tail_len);

  EncodedInput out;
  out.truncated = keep < base_len;
  out.ids.reserve(1 + keep + tail_len);
  out.ids.push_back(vocab.cls());
  for (std::size_t i = 1; i < 1 + keep; ++i) out.ids.push_back(vocab.id(toks[i]));
  const std::size_t shift = base_len - keep;
  for (std::size_t i = tail_start; i < toks.size(); ++i) out.ids.push_back(vocab.id(toks[i]));

  if (prompt) {
    const std::size_t p_idx = prompt->start + 5 - shift;
    const std::size_t q_idx = prompt->start + 11 - shift;
    out.presence_slot = make_slot(Task::presence, prompt->presence_token, p_idx);
    out.period_slot = make_slot(Task::period, prompt->period_token, q_idx);
    out.ids[p_idx] = slot_id(Task::presence, *out.presence_slot, vocab);
    out.ids[q_idx] = slot_id(Task::period, *out.period_slot, vocab);
    out.variant = variant_of(*out.presence_slot, *out.period_slot);
  }
  return out;
}

EncodedInput with_variant(const EncodedInput& in, Variant variant, const LabelPair& gold,
                          const Vocabulary& vocab) {
  if (!in.has_prompt()) throw ContractError("with_variant needs a prompt-bearing input");
  EncodedInput out = in;
  auto& p = *out.presence_slot;
  auto& q = *out.period_slot;
  p.state = variant == Variant::presence_revealed ? SlotState::revealed : SlotState::masked;
  p.label = p.state == SlotState::revealed ? gold.code(Task::presence) : -1;
  q.state = variant == Variant::period_revealed ? SlotState::revealed : SlotState::masked;
  q.label = q.state == SlotState::revealed ? gold.code(Task::period) : -1;
  out.ids[p.index] = slot_id(Task::presence, p, vocab);
  out.ids[q.index] = slot_id(Task::period, q, vocab);
  out.variant = variant;
  return out;
}

EncodedInput with_reveal(const EncodedInput& in, const Reveal& reveal, const Vocabulary& vocab) {
  if (!in.has_prompt()) throw ContractError("reveal needs a prompt-bearing input");
  LabelPair gold;
  Variant v;
  if (reveal.task == Task::presence) {
    gold.presence = static_cast<Presence>(reveal.label);
    v = Variant::presence_revealed;
  } else {
    gold.period = static_cast<Period>(reveal.label);
    v = Variant::period_revealed;
  }
  return with_variant(in, v, gold, vocab);
}

// ---------------------------------------------------------------------------
// SBDH providers

namespace {

constexpr std::string_view kBuiltinLexicon = R"(# keyword lists for the lexicon provider
housing_instability: homeless, shelter, couch surfing, unstably housed
food_insecurity: food pantry, not having enough food, food stamps, hungry
financial_insecurity: behind on bills, limited income, cannot afford, financial strain
employment_insecurity: unemployed, laid off, lost his job, lost her job
legal_problems: court date, probation, lawyer, legal aid
barriers_to_care: no phone, transportation, missed appointments
transitions_of_care: discharged, admission, transferred
pain: pain
patient_disability: wheelchair, disability, disabled
social_isolation: lives alone, isolated, no family support
psychiatric_symptoms: depression, anxiety, ptsd, psychosis
substance_abuse: alcohol, cocaine, opioid, substance use
suicidal_behaviors: suicidal, suicide, self-harm
)";

bool contains_sequence(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = parse(kBuiltinLexicon);
  return lex;
}

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto colon = t.find(':');
    if (colon == std::string::npos) throw ParseError(line_no, "expected 'category: keywords'");
    const std::string name = trim(t.substr(0, colon));
    const auto cat = parse_sbdh(name);
    if (!cat) throw ParseError(line_no, "unknown sbdh category '" + name + "'");
    auto& list = lex.entries_[*cat];
    for (auto& kw : split_list(t.substr(colon + 1))) list.push_back(lowercase(kw));
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<Sbdh> Lexicon::match(std::string_view text) const {
  const auto toks = tokenize(text);
  std::vector<Sbdh> out;
  for (const auto& [cat, keywords] : entries_) {
    for (const auto& kw : keywords) {
      if (contains_sequence(toks, tokenize(kw))) {
        out.push_back(cat);
        break;
      }
    }
  }
  return out;
}

std::string_view provider_name(ProviderKind k) {
  switch (k) {
    case ProviderKind::gold: return "gold";
    case ProviderKind::lexicon: return "lexicon";
    case ProviderKind::noisy: return "noisy";
    case ProviderKind::none: return "none";
  }
  return "?";
}

std::optional<ProviderKind> parse_provider(std::string_view name) {
  for (auto k : {ProviderKind::gold, ProviderKind::lexicon, ProviderKind::noisy, ProviderKind::none})
    if (provider_name(k) == name) return k;
  return std::nullopt;
}

std::vector<Sbdh> provide_sbdh(const SbdhProvider& provider, const Example& ex) {
  std::vector<Sbdh> tags;
  switch (provider.kind) {
    case ProviderKind::none: return tags;
    case ProviderKind::gold: tags = ex.sbdh; break;
    case ProviderKind::lexicon:
      tags = (provider.lexicon ? *provider.lexicon : Lexicon::builtin()).match(ex.text);
      break;
    case ProviderKind::noisy: {
      Rng rng(derive_seed(provider.seed, fnv1a(ex.id)));
      for (auto c : all_sbdh()) {
        const double u = rng.uniform();
        if (ex.has_sbdh(c) ? u >= provider.drop_rate : u < provider.flip_rate) tags.push_back(c);
      }
      break;
    }
  }
  canonicalize_sbdh(tags);
  std::erase_if(tags, [&](Sbdh c) { return !provider.allowed.test(static_cast<std::size_t>(c)); });
  return tags;
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::plain: return "plain";
    case Mode::kiresh: return "kiresh";
    case Mode::prompt: return "prompt";
    case Mode::kiresh_prompt: return "kiresh_prompt";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view name) {
  for (auto m : {Mode::plain, Mode::kiresh, Mode::prompt, Mode::kiresh_prompt})
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

std::string build_model_text(const Example& ex, Mode mode, const SbdhProvider& provider,
                             Variant variant) {
  const std::vector<Sbdh> tags =
      mode_has_kiresh(mode) ? provide_sbdh(provider, ex) : std::vector<Sbdh>{};
  std::string base = build_kiresh_input(ex.text, tags);
  if (!mode_has_prompt(mode)) return base;
  return build_prompted_input(base, variant, ex.gold);
}

}  // namespace kiresh
