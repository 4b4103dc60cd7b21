#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace owal::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::warn};
  return level;
}

inline void set_level(Level l) { threshold().store(l); }

inline void write(Level l, std::string_view msg) {
  if (l < threshold().load()) return;
  static std::mutex mu;
  static constexpr const char* tags[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(mu);
  std::clog << "[owal " << tags[static_cast<int>(l)] << "] " << msg << '\n';
}

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }

}  // namespace owal::log
