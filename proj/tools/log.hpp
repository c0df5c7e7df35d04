#pragma once

#include <cstdio>
#include <string>

namespace nscli {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::info;
  return level;
}

inline bool parse_log_level(const std::string& name, LogLevel& out) {
  if (name == "error") out = LogLevel::error;
  else if (name == "warn") out = LogLevel::warn;
  else if (name == "info") out = LogLevel::info;
  else if (name == "debug") out = LogLevel::debug;
  else return false;
  return true;
}

template <typename... Args>
void log_at(LogLevel level, const char* tag, const char* fmt, Args... args) {
  if (level > log_level()) return;
  std::fprintf(stderr, "[%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

#define NSCLI_ERROR(...) ::nscli::log_at(::nscli::LogLevel::error, "error", __VA_ARGS__)
#define NSCLI_WARN(...) ::nscli::log_at(::nscli::LogLevel::warn, "warn", __VA_ARGS__)
#define NSCLI_INFO(...) ::nscli::log_at(::nscli::LogLevel::info, "info", __VA_ARGS__)
#define NSCLI_DEBUG(...) ::nscli::log_at(::nscli::LogLevel::debug, "debug", __VA_ARGS__)

}  // namespace nscli
