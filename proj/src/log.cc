#include "plrl/log.h"

#include <atomic>
#include <iostream>

namespace plrl {
namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarning};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warning(std::string_view message) {
  if (g_level >= LogLevel::kWarning) std::clog << "warning: " << message << '\n';
}

void log_info(std::string_view message) {
  if (g_level >= LogLevel::kInfo) std::clog << message << '\n';
}

}  // namespace plrl
