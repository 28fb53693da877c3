#ifndef PLRL_LOG_H_
#define PLRL_LOG_H_

#include <string_view>

namespace plrl {

enum class LogLevel { kQuiet = 0, kWarning = 1, kInfo = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Writes to stderr when the level is enabled.
void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace plrl

#endif  // PLRL_LOG_H_
