#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace refldiff {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented `section.key = value` settings. '#' starts a comment, blank
// lines are ignored, and a key may appear only once.
class Config {
 public:
  using Schema = std::vector<std::pair<std::string, std::string>>;  // key, default

  static Config parse(std::string_view text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Rejects keys the schema does not list and fills in missing defaults.
  void apply_schema(const Schema& schema);

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  // Comma-separated lists.
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<long long> get_ints(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  // Sorted `key = value` lines; parses back to the same config.
  std::string to_string() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace refldiff
