#include "kdeashmm/log.hpp"

#include <iostream>
#include <mutex>

namespace kdeas {

namespace {

std::mutex g_mutex;
LogLevel g_level = LogLevel::kWarn;
LogSink g_sink;

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kError: return "error";
  }
  return "?";
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void log_message(LogLevel level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (static_cast<int>(level) < static_cast<int>(g_level)) return;
  if (g_sink) {
    g_sink(level, msg);
    return;
  }
  std::cerr << "{\"level\":\"" << level_name(level) << "\",\"msg\":\""
            << json_escape(msg) << "\"}\n";
}

void set_log_level(LogLevel level) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_level = level;
}

LogLevel log_level() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_level;
}

LogSink set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::swap(g_sink, sink);
  return sink;
}

}  // namespace kdeas
