#pragma once

#include <string_view>

namespace cloak {

void log_warning(std::string_view message);
void log_info(std::string_view message);

// Silences info output (warnings are always printed).
void set_quiet(bool quiet);

}  // namespace cloak
