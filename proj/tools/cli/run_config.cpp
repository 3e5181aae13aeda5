#include "cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "comve/corpus_io.hpp"
#include "comve/error.hpp"

namespace comve::cli {
namespace {

constexpr const char* kModule = "config";

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(kModule, "field '" + key + "': expected " + expected + ", got '" + value + "'");
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(kModule, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError(kModule, source + ":" + std::to_string(lineno) + ": malformed section");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(kModule, source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(kModule, source + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(t.substr(eq + 1));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ConfigError(kModule, "expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::record(const std::string& key, const std::string& value) const {
  resolved_[key] = value;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  const std::string v = it == values_.end() ? fallback : it->second;
  record(key, v);
  return v;
}

std::optional<std::string> RunConfig::optional(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return std::nullopt;
  record(key, it->second);
  return it->second;
}

std::string RunConfig::require(const std::string& key) const {
  auto v = optional(key);
  if (!v) throw ConfigError(kModule, "missing required field '" + key + "'");
  return *v;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    record(key, std::to_string(fallback));
    return fallback;
  }
  int v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "an integer");
  record(key, s);
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    record(key, std::to_string(fallback));
    return fallback;
  }
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "a non-negative integer");
  record(key, s);
  return v;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    std::ostringstream os;
    os.precision(17);
    os << fallback;
    record(key, os.str());
    return fallback;
  }
  const auto& s = it->second;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) bad(key, s, "a number");
    record(key, s);
    return v;
  } catch (const std::logic_error&) {
    bad(key, s, "a number");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    record(key, fallback ? "true" : "false");
    return fallback;
  }
  const auto& s = it->second;
  bool v;
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    v = true;
  } else if (s == "false" || s == "0" || s == "no" || s == "off") {
    v = false;
  } else {
    bad(key, s, "a boolean");
  }
  record(key, s);
  return v;
}

std::optional<std::filesystem::path> RunConfig::optional_path(const std::string& key) const {
  auto v = optional(key);
  if (!v) return std::nullopt;
  return std::filesystem::path(*v);
}

std::filesystem::path RunConfig::existing_path(const std::string& key) const {
  const std::filesystem::path p(require(key));
  if (!std::filesystem::exists(p)) {
    throw ConfigError(kModule, "field '" + key + "': path does not exist: " + p.string());
  }
  return p;
}

std::optional<std::filesystem::path> RunConfig::optional_existing_path(const std::string& key) const {
  if (!optional(key)) return std::nullopt;
  return existing_path(key);
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto v = optional(key);
  if (!v) return out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> all = resolved_;
  for (const auto& [k, v] : values_) all[k] = v;
  std::string out = "# resolved configuration\n";
  for (const auto& [k, v] : all) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(kModule, "cannot write config snapshot " + path.string());
  out << serialize();
}

}  // namespace comve::cli
