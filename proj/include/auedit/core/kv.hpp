#pragma once

// Flat key=value text files: one pair per line, '#' starts a comment line.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "auedit/core/error.hpp"
#include "auedit/core/tensor.hpp"

namespace auedit {

class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text, const std::string& origin = "<text>") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::format, origin + ":" + std::to_string(lineno) + ": expected key=value");
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::missing_artifact, "no such file: " + path.string());
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void save(const std::filesystem::path& path) const { detail::write_text_atomic(path, to_string()); }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : map_) out += k + "=" + v + "\n";
    return out;
  }

  bool has(const std::string& key) const { return map_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { map_[key] = value; }
  void set(const std::string& key, const char* value) { map_[key] = value; }
  void set(const std::string& key, double value) { map_[key] = fmt::format("{}", value); }
  void set(const std::string& key, std::uint64_t value) { map_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { map_[key] = std::to_string(value); }

  const std::string& get(const std::string& key) const {
    auto it = map_.find(key);
    if (it == map_.end()) fail(ErrorKind::invalid_argument, "missing key: " + key);
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    auto it = map_.find(key);
    return it == map_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }
  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  std::uint64_t get_u64(const std::string& key) const { return parse_u64(key, get(key)); }
  std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
  }

  const std::map<std::string, std::string>& entries() const { return map_; }

  static double parse_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::invalid_argument, "key " + key + ": not a number: '" + s + "'");
    }
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      fail(ErrorKind::invalid_argument, "key " + key + ": not an unsigned integer: '" + s + "'");
    return v;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> map_;
};

}  // namespace auedit
