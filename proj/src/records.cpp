#include "kiresh/records.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kiresh/calibration.hpp"
#include "kiresh/error.hpp"
#include "kiresh/keyvalue.hpp"

namespace kiresh {

using nlohmann::json;

std::vector<double> ProbRecord::logits(Task t) const {
  if (t == Task::presence) return {presence_logits.begin(), presence_logits.end()};
  return {period_logits.begin(), period_logits.end()};
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int argmax(const std::vector<double>& v) { return argmax(std::span<const double>(v)); }

namespace {

std::vector<json> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
  }
  return out;
}

LabelPair gold_from(const json& j, std::size_t line) {
  try {
    const auto p = parse_presence(j.at("presence").get<std::string>());
    const auto t = parse_period(j.at("period").get<std::string>());
    if (!p || !t) throw ParseError(line, "unknown gold label");
    return {*p, *t};
  } catch (const json::exception& e) {
    throw ParseError(line, e.what());
  }
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* field, std::size_t line) {
  const auto& a = j.at(field);
  if (!a.is_array() || a.size() != N)
    throw ParseError(line, std::string(field) + " must have " + std::to_string(N) + " entries");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<double>();
  return out;
}

void write_lines(const std::vector<json>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  for (const auto& j : lines) out << j.dump() << '\n';
}

json gold_json(json j, const LabelPair& gold) {
  j["presence"] = std::string(presence_name(gold.presence));
  j["period"] = std::string(period_name(gold.period));
  return j;
}

}  // namespace

void write_logits(const std::vector<ProbRecord>& records, const std::filesystem::path& path) {
  std::vector<json> lines;
  for (const auto& r : records)
    lines.push_back(gold_json({{"id", r.id},
                               {"presence_logits", r.presence_logits},
                               {"period_logits", r.period_logits}},
                              r.gold));
  write_lines(lines, path);
}

std::vector<ProbRecord> read_logits(const std::filesystem::path& path) {
  std::vector<ProbRecord> out;
  std::size_t line = 0;
  for (const auto& j : read_lines(path)) {
    ++line;
    try {
      ProbRecord r;
      r.id = j.at("id").get<std::string>();
      r.presence_logits = fixed_array<kNumPresence>(j, "presence_logits", line);
      r.period_logits = fixed_array<kNumPeriod>(j, "period_logits", line);
      r.gold = gold_from(j, line);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
  return out;
}

void write_probabilities(const std::vector<ProbabilityRecord>& records,
                         const std::filesystem::path& path) {
  std::vector<json> lines;
  for (const auto& r : records)
    lines.push_back(gold_json({{"id", r.id},
                               {"presence_probs", r.presence_probs},
                               {"period_probs", r.period_probs}},
                              r.gold));
  write_lines(lines, path);
}

std::vector<ProbabilityRecord> read_any_probabilities(const std::filesystem::path& path) {
  std::vector<ProbabilityRecord> out;
  std::size_t line = 0;
  for (const auto& j : read_lines(path)) {
    ++line;
    try {
      ProbabilityRecord r;
      r.id = j.at("id").get<std::string>();
      r.gold = gold_from(j, line);
      if (j.contains("presence_probs")) {
        const auto p = fixed_array<kNumPresence>(j, "presence_probs", line);
        const auto q = fixed_array<kNumPeriod>(j, "period_probs", line);
        r.presence_probs.assign(p.begin(), p.end());
        r.period_probs.assign(q.begin(), q.end());
      } else {
        const auto p = fixed_array<kNumPresence>(j, "presence_logits", line);
        const auto q = fixed_array<kNumPeriod>(j, "period_logits", line);
        r.presence_probs = scaled_softmax(p, 1.0);
        r.period_probs = scaled_softmax(q, 1.0);
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
  return out;
}

std::vector<ProbabilityRecord> read_probabilities(const std::filesystem::path& path) {
  return read_any_probabilities(path);
}

}  // namespace kiresh
