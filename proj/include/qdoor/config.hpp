#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qdoor/bench.hpp"

namespace qdoor {

/// Flat dotted-key configuration. Text is either `key = value` lines with '#'
/// comments, or a JSON object (nested objects flatten to dotted keys).
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Sorted `key=value` lines; the hash is FNV-1a over this text.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// Throws ConfigError for keys outside the known set.
  void check_known_keys() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> entries_;
};

TrainConfig train_config_from(const Config& c);
/// Trigger index defaults to the last of `feature_dim` features.
PoisonPlan poison_plan_from(const Config& c, int feature_dim);
EvalConfig eval_config_from(const Config& c);

}  // namespace qdoor
