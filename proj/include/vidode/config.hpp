#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace vidode {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Keys are dotted (`ode.rtol`, `loss.lambda_a`, ...).
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Entries of `other` override ours.
  void merge(const Config& other);

  /// Canonical text: sorted `key=value` lines.
  std::string dump() const;
  /// FNV-1a 64-bit over dump().
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace vidode
