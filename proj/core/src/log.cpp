#include "dbda/log.hpp"

#include <cstdarg>
#include <cstdlib>
#include <cstring>

namespace dbda {

namespace {

LogLevel g_level = LogLevel::info;
bool g_initialized = false;

void init_from_env() {
  if (g_initialized) return;
  g_initialized = true;
  const char* env = std::getenv("DBDA_LOG");
  if (!env) return;
  if (std::strcmp(env, "quiet") == 0) {
    g_level = LogLevel::quiet;
  } else if (std::strcmp(env, "info") == 0) {
    g_level = LogLevel::info;
  } else if (std::strcmp(env, "debug") == 0) {
    g_level = LogLevel::debug;
  }
  // Unknown values keep the default rather than failing a run over logging.
}

void vlog(const char* tag, const char* fmt, va_list ap) {
  std::fprintf(stderr, "[%s] ", tag);
  std::vfprintf(stderr, fmt, ap);
  std::fputc('\n', stderr);
}

}  // namespace

LogLevel log_level() {
  init_from_env();
  return g_level;
}

void set_log_level(LogLevel level) {
  g_initialized = true;
  g_level = level;
}

bool log_enabled(LogLevel level) {
  return static_cast<int>(log_level()) >= static_cast<int>(level);
}

void log_info(const char* fmt, ...) {
  if (!log_enabled(LogLevel::info)) return;
  va_list ap;
  va_start(ap, fmt);
  vlog("info", fmt, ap);
  va_end(ap);
}

void log_debug(const char* fmt, ...) {
  if (!log_enabled(LogLevel::debug)) return;
  va_list ap;
  va_start(ap, fmt);
  vlog("debug", fmt, ap);
  va_end(ap);
}

}  // namespace dbda
