#pragma once

#include <functional>
#include <string>

namespace kdeas {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Default sink writes one JSON object per line to stderr, keeping the
// result streams (stdout, output files) free of diagnostics.
void log_message(LogLevel level, const std::string& msg);

void set_log_level(LogLevel level);
LogLevel log_level();

// Swap the sink (tests use this to capture warnings). Returns the old sink.
LogSink set_log_sink(LogSink sink);

inline void log_warn(const std::string& msg) { log_message(LogLevel::kWarn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::kDebug, msg); }

}  // namespace kdeas
