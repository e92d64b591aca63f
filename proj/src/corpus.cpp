#include "kiresh/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kiresh/error.hpp"
#include "kiresh/keyvalue.hpp"
#include "kiresh/rng.hpp"

namespace kiresh {

using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::none: return "none";
    case Split::train: return "train";
    case Split::eval: return "eval";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "eval") return Split::eval;
  if (name == "test") return Split::test;
  if (name == "none") return Split::none;
  return std::nullopt;
}

bool Example::has_sbdh(Sbdh c) const {
  return std::find(sbdh.begin(), sbdh.end(), c) != sbdh.end();
}

SplitSizes Dataset::split_sizes() const {
  SplitSizes s;
  for (const auto& ex : examples) {
    switch (ex.split) {
      case Split::train: ++s.train; break;
      case Split::eval: ++s.eval; break;
      case Split::test: ++s.test; break;
      case Split::none: ++s.unassigned; break;
    }
  }
  return s;
}

std::vector<const Example*> Dataset::in_split(Split s) const {
  std::vector<const Example*> out;
  for (const auto& ex : examples)
    if (ex.split == s) out.push_back(&ex);
  return out;
}

void canonicalize_sbdh(std::vector<Sbdh>& tags) {
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
}

namespace {

const std::string& require_string(const json& obj, const char* field,
                                  std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + field + "'");
  if (!it->is_string())
    throw ParseError(line, std::string("field '") + field + "' must be a string");
  return it->get_ref<const std::string&>();
}

Example parse_example(const json& obj, std::size_t line, const IngestOptions& opts,
                      std::size_t& warnings) {
  if (!obj.is_object()) throw ParseError(line, "record is not a JSON object");
  Example ex;
  if (const auto it = obj.find("id"); it != obj.end()) {
    if (!it->is_string()) throw ParseError(line, "field 'id' must be a string");
    ex.id = it->get<std::string>();
  } else {
    ex.id = "line-" + std::to_string(line);
  }
  ex.text = require_string(obj, "text", line);
  if (trim(ex.text).empty()) throw ParseError(line, "text is empty");

  const std::string& presence = require_string(obj, "presence", line);
  const std::string& period = require_string(obj, "period", line);
  const auto p = parse_presence(presence, opts.scheme);
  if (!p) throw ParseError(line, "unknown presence label '" + presence + "'");
  const auto t = parse_period(period, opts.scheme);
  if (!t) throw ParseError(line, "unknown period label '" + period + "'");
  ex.gold = {*p, *t};
  switch (validate_pair(ex.gold, opts.policy)) {
    case Verdict::rejected:
      throw ParseError(line, "label pair (" + period + ", " + presence +
                                 ") rejected by strict policy");
    case Verdict::accepted_with_warning: ++warnings; break;
    case Verdict::accepted: break;
  }

  if (const auto it = obj.find("sbdh"); it != obj.end()) {
    if (!it->is_array()) throw ParseError(line, "field 'sbdh' must be an array");
    for (const auto& tag : *it) {
      if (!tag.is_string()) throw ParseError(line, "sbdh entries must be strings");
      const auto c = parse_sbdh(tag.get_ref<const std::string&>());
      if (!c)
        throw ParseError(line, "unknown sbdh category '" + tag.get<std::string>() + "'");
      ex.sbdh.push_back(*c);
    }
    canonicalize_sbdh(ex.sbdh);
  }
  if (const auto it = obj.find("split"); it != obj.end()) {
    if (!it->is_string()) throw ParseError(line, "field 'split' must be a string");
    const auto s = parse_split(it->get_ref<const std::string&>());
    if (!s) throw ParseError(line, "unknown split '" + it->get<std::string>() + "'");
    ex.split = *s;
  }
  for (const auto& [key, value] : obj.items()) {
    if (key == "id" || key == "text" || key == "sbdh" || key == "presence" ||
        key == "period" || key == "split")
      continue;
    ex.extra[key] = value;
  }
  return ex;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl, const IngestOptions& opts) {
  Dataset ds;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    Example ex = parse_example(obj, line_no, opts, ds.combination_warnings);
    if (!seen.insert(ex.id).second)
      throw ParseError(line_no, "duplicate id '" + ex.id + "'");
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset ingest(const std::filesystem::path& path, const IngestOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), opts);
}

std::string serialize_example(const Example& ex, LabelScheme scheme) {
  json obj = ex.extra.is_object() ? ex.extra : json::object();
  obj["id"] = ex.id;
  obj["text"] = ex.text;
  json tags = json::array();
  for (auto c : ex.sbdh) tags.push_back(std::string(sbdh_name(c)));
  obj["sbdh"] = std::move(tags);
  obj["presence"] = std::string(presence_name(ex.gold.presence, scheme));
  obj["period"] = std::string(period_name(ex.gold.period, scheme));
  if (ex.split != Split::none) obj["split"] = std::string(split_name(ex.split));
  return obj.dump();
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path,
                   LabelScheme scheme) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write dataset '" + path.string() + "'");
  for (const auto& ex : ds.examples) out << serialize_example(ex, scheme) << '\n';
}

const std::vector<std::string>& default_eviction_keywords() {
  static const std::vector<std::string> kw = {
      "notice to mutual rescission", "notice to pay rent", "notice to vacate",
      "writ of possession",          "summary process",    "summary judgment",
      "unlawful detainer"};
  return kw;
}

std::vector<KeywordMatch> keyword_filter(const std::vector<std::string>& texts,
                                         const std::vector<std::string>& keywords) {
  std::vector<std::string> lowered;
  lowered.reserve(keywords.size());
  for (const auto& k : keywords) lowered.push_back(lowercase(k));

  std::vector<KeywordMatch> out;
  for (const auto& text : texts) {
    const std::string hay = lowercase(text);
    KeywordMatch m{text, {}};
    for (const auto& k : lowered)
      if (!k.empty() && hay.find(k) != std::string::npos) m.keywords.push_back(k);
    if (!m.keywords.empty()) out.push_back(std::move(m));
  }
  return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f) {
  const std::array<double, 3> frac = {f.train, f.eval, f.test};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = frac[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

Dataset split(const Dataset& ds, const SplitFractions& f, std::uint64_t seed) {
  if (ds.size() < 3) throw InputError("split needs at least 3 examples");
  if (f.train < 0 || f.eval < 0 || f.test < 0 ||
      std::abs(f.train + f.eval + f.test - 1.0) > 1e-9)
    throw InputError("split fractions must be non-negative and sum to 1");

  const auto counts = split_counts(ds.size(), f);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, fnv1a("split")));
  rng.shuffle(order);

  Dataset out = ds;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Split s = k < counts[0]               ? Split::train
                    : k < counts[0] + counts[1] ? Split::eval
                                                : Split::test;
    out.examples[order[k]].split = s;
  }
  return out;
}

Dataset subsample_train(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InputError("subsample fraction must be in (0, 1]");
  if (fraction == 1.0) return ds;

  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.examples[i].split == Split::train) train_idx.push_back(i);
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(train_idx.size()) - 1e-9));

  Rng rng(derive_seed(seed, fnv1a("subsample")));
  rng.shuffle(train_idx);
  std::vector<bool> kept(ds.size(), true);
  for (std::size_t k = keep; k < train_idx.size(); ++k) kept[train_idx[k]] = false;

  Dataset out;
  out.provenance = ds.provenance;
  out.generator_seed = ds.generator_seed;
  out.combination_warnings = ds.combination_warnings;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (kept[i]) out.examples.push_back(ds.examples[i]);
  return out;
}

}  // namespace kiresh
