#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kiresh {

// Flat `key = value` configuration. '#' starts a comment; blank lines are
// ignored. Every lookup marks its key as used so callers can reject typos.
class KeyValue {
public:
  KeyValue() = default;
  static KeyValue parse(std::string_view text);
  static KeyValue load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  // Keys starting with `prefix`, with the prefix removed.
  std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::vector<std::string> unused_keys() const;
  void mark_used(const std::string& key) const { used_.insert(key); }

private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');
std::string lowercase(std::string_view s);

}  // namespace kiresh
