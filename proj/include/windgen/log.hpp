#pragma once

#include <functional>
#include <string_view>

namespace windgen {

enum class LogLevel { kDebug, kInfo, kWarning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink; an empty sink silences logging.
void set_log_sink(LogSink sink);
/// Sink writing to stderr; installed by default.
LogSink stderr_log_sink();
void set_log_level(LogLevel min_level);
void log_message(LogLevel level, std::string_view message);

inline void log_info(std::string_view m) { log_message(LogLevel::kInfo, m); }
inline void log_warning(std::string_view m) { log_message(LogLevel::kWarning, m); }

}  // namespace windgen
