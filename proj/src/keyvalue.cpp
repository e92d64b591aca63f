#include "kiresh/keyvalue.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kiresh/error.hpp"

namespace kiresh {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find(sep, start);
    const std::size_t end = pos == std::string_view::npos ? s.size() : pos;
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

KeyValue KeyValue::parse(std::string_view text) {
  KeyValue kv;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(line_no, "expected key = value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    kv.entries_[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValue KeyValue::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool KeyValue::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

void KeyValue::set(const std::string& key, std::string value) {
  entries_[key] = std::move(value);
}

std::string KeyValue::get_string(const std::string& key,
                                 const std::string& fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': bad number '" + v + "'");
  return out;
}

}  // namespace

double KeyValue::get_double(const std::string& key, double fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_number<double>(key, it->second);
}

std::int64_t KeyValue::get_int(const std::string& key, std::int64_t fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_number<std::int64_t>(key, it->second);
}

std::uint64_t KeyValue::get_uint(const std::string& key, std::uint64_t fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return parse_number<std::uint64_t>(key, it->second);
}

bool KeyValue::get_bool(const std::string& key, bool fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string v = lowercase(it->second);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': bad boolean '" + it->second + "'");
}

std::vector<std::string> KeyValue::get_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  return split_list(it->second);
}

std::vector<double> KeyValue::get_double_list(
    const std::string& key, const std::vector<double>& fallback) const {
  used_.insert(key);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second))
    out.push_back(parse_number<double>(key, item));
  return out;
}

std::map<std::string, std::string> KeyValue::with_prefix(
    const std::string& prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) {
      used_.insert(k);
      out.emplace(k.substr(prefix.size()), v);
    }
  }
  return out;
}

std::vector<std::string> KeyValue::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

}  // namespace kiresh
