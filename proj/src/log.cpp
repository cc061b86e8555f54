#include "windgen/log.hpp"

#include <iostream>
#include <mutex>

namespace windgen {

namespace {

std::mutex g_mutex;
LogLevel g_level = LogLevel::kWarning;
LogSink g_sink = stderr_log_sink();

}  // namespace

LogSink stderr_log_sink() {
  return [](LogLevel level, std::string_view m) {
    std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << m << '\n';
  };
}

void set_log_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void set_log_level(LogLevel min_level) {
  std::lock_guard lock(g_mutex);
  g_level = min_level;
}

void log_message(LogLevel level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (level < g_level || !g_sink) return;
  g_sink(level, message);
}

}  // namespace windgen
