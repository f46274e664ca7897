#pragma once

// Flat key=value run configuration for the command-line tool. One entry per
// line, '#' starts a comment. Every key has a default; `seed` has none and
// must be given for the train commands.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cavenet::cli {

struct KeyDoc {
  const char* key;
  const char* fallback;  // default value as text; "" for unset
  const char* help;
};

const std::vector<KeyDoc>& config_keys();

class RunConfig {
 public:
  RunConfig() = default;

  // Throws ConfigError naming the line for malformed, duplicate or unknown keys.
  static RunConfig parse(std::string_view text, const std::string& origin = "config");
  static RunConfig load(const std::string& path);

  // Throws ConfigError for an unknown key.
  void set(const std::string& key, std::string value);
  // Explicit value, or the documented default.
  std::string get(const std::string& key) const;
  bool is_set(const std::string& key) const { return values_.count(key) != 0; }

  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  // ConfigError when unset.
  std::uint64_t require_seed() const;
  std::uint64_t seed_or(std::uint64_t fallback) const;

  // "key=value" lines for the given keys with resolved values, for hashing.
  std::string canonical(const std::vector<std::string>& keys) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cavenet::cli
