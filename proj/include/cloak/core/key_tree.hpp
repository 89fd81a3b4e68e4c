#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace cloak {

// Flat key tree: dotted keys mapped to scalar text values. The file format
// is one "section.sub.key = value" per line, '#' comments, blank lines
// ignored. Later assignments win.
class KeyTree {
 public:
  static KeyTree parse(const std::string& text);
  static KeyTree load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, bool value);
  void merge(const KeyTree& other);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  // Canonical serialization: sorted keys, one per line.
  std::string to_string() const;
  std::uint64_t hash() const;

  friend bool operator==(const KeyTree&, const KeyTree&) = default;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double value);

}  // namespace cloak
