#include "cloak/core/log.hpp"

#include <atomic>
#include <iostream>

namespace cloak {
namespace {
std::atomic<bool> g_quiet{false};
}

void log_warning(std::string_view message) { std::cerr << "[warn] " << message << '\n'; }

void log_info(std::string_view message) {
  if (!g_quiet) std::cerr << "[info] " << message << '\n';
}

void set_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace cloak
