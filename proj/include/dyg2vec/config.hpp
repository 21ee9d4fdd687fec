#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dyg {

/// Flat key = value run configuration. Every key has a documented default;
/// unknown keys are rejected. Lines starting with '#' are comments.
class RunConfig {
 public:
  RunConfig();

  /// Reads a config file over the current values.
  void load_file(const std::string& path);
  /// Parses `key = value` text over the current values.
  void load_text(const std::string& text, const std::string& origin = "<text>");
  /// Sets one key. Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value" overrides (CLI flags win over the file).
  void apply_overrides(const std::vector<std::string>& assignments);

  const std::string& get(const std::string& key) const;
  std::string str(const std::string& key) const { return get(key); }
  long long integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<long long> int_list(const std::string& key) const;

  /// Sorted `key = value` lines; stable across runs, used for hashing.
  std::string resolved() const;
  std::uint64_t hash() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

/// Default seed: the DYG_SEED environment variable when set, else 0.
std::uint64_t default_seed();

}  // namespace dyg
