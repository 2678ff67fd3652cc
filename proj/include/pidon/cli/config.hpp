#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pidon/fields/fields.hpp"

namespace pidon::cli {

/// Resolved experiment configuration: "section.key" -> value. The key set is
/// fixed by the presets; anything else is rejected.
class Config {
 public:
  Config() = default;
  explicit Config(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  std::size_t count(const std::string& key) const;  ///< non-negative integer (accepts 1e4)
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Overrides an existing key; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  void merge(const Config& overrides);

  fields::Benchmark benchmark() const { return fields::parse_benchmark(str("run.benchmark")); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// INI text: [section] headers, key = value lines, `comments` as leading # lines.
  std::string to_ini(const std::vector<std::string>& comments = {}) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Parses key = value lines under [section] headers; '#' and ';' start comments.
/// Returns "section.key" pairs without checking them against a preset.
Config parse_ini(const std::string& text, const std::string& origin);
Config load_config_file(const std::filesystem::path& path);

std::vector<std::string> preset_names();
/// Every key, fully populated: paper-text, paper-table or desk for one benchmark.
Config preset(fields::Benchmark b, const std::string& name);

/// Git-style blob hash: sha1("blob <size>\0" + content), hex encoded.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace pidon::cli
