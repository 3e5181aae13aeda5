#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace comve::cli {

// Flat key-value configuration. Files hold "key = value" lines; a "[section]"
// header prefixes the keys that follow with "section.". '#' starts a comment.
// Every lookup records the value it resolved to (defaults included), so the
// snapshot written next to a run's artifacts replays that run on its own.
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text, const std::string& source = "<string>");

  void set(const std::string& key, const std::string& value);
  // Parses "key=value"; throws ConfigError otherwise.
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::optional<std::string> optional(const std::string& key) const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<std::filesystem::path> optional_path(const std::string& key) const;
  // Path that must exist when the command starts.
  std::filesystem::path existing_path(const std::string& key) const;
  std::optional<std::filesystem::path> optional_existing_path(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

  // Explicit values plus resolved defaults, sorted by key.
  std::string serialize() const;
  void write_snapshot(const std::filesystem::path& path) const;

 private:
  void record(const std::string& key, const std::string& value) const;

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

}  // namespace comve::cli
