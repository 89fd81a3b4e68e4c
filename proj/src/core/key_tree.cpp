#include "cloak/core/key_tree.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cloak/core/hash.hpp"

namespace cloak {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

KeyTree KeyTree::parse(const std::string& text) {
  KeyTree tree;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    tree.values_[key] = trim(line.substr(eq + 1));
  }
  return tree;
}

KeyTree KeyTree::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void KeyTree::set(const std::string& key, double value) { values_[key] = format_double(value); }
void KeyTree::set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
void KeyTree::set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

void KeyTree::merge(const KeyTree& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> KeyTree::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyTree::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double KeyTree::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not a number: " + *v);
  }
}

std::int64_t KeyTree::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long i = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not an integer: " + *v);
  }
}

std::uint64_t KeyTree::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long i = std::stoull(*v, &used);
    if (used != v->size() || v->front() == '-') throw std::invalid_argument("bad");
    return i;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not an unsigned integer: " + *v);
  }
}

bool KeyTree::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw std::runtime_error("config key '" + key + "': not a boolean: " + *v);
}

std::string KeyTree::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t KeyTree::hash() const {
  Fnv1a h;
  h.update(to_string());
  return h.digest();
}

}  // namespace cloak
