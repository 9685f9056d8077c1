#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace cat {

// Log level is read once from CAT_LOG_LEVEL (error|warn|info|debug).
// Unknown or unset values fall back to warn.

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("CAT_LOG_LEVEL");
    if (v == nullptr) return LogLevel::Warn;
    if (std::strcmp(v, "error") == 0) return LogLevel::Error;
    if (std::strcmp(v, "warn") == 0) return LogLevel::Warn;
    if (std::strcmp(v, "info") == 0) return LogLevel::Info;
    if (std::strcmp(v, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Warn;
}

inline LogLevel& log_level() {
    static LogLevel level = log_level_from_env();
    return level;
}

inline void log_line(LogLevel lvl, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[cat:%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

inline void log_error(const std::string& msg) { log_line(LogLevel::Error, msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log_line(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_line(LogLevel::Debug, msg); }

}  // namespace cat
