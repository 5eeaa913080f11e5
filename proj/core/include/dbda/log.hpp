#pragma once

#include <cstdio>

namespace dbda {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

// Level comes from the DBDA_LOG environment variable (quiet|info|debug),
// read once on first use. Default is info.
LogLevel log_level();

void set_log_level(LogLevel level);

bool log_enabled(LogLevel level);

// printf-style, writes to stderr with a severity tag when the configured
// level admits the message.
void log_info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void log_debug(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace dbda
