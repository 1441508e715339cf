#pragma once

#include <atomic>
#include <iostream>
#include <sstream>
#include <string>

namespace shazam::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

inline std::atomic<int>& level_ref() {
  static std::atomic<int> level{static_cast<int>(Level::Warn)};
  return level;
}

inline void set_level(Level level) { level_ref() = static_cast<int>(level); }
inline bool enabled(Level level) { return static_cast<int>(level) <= level_ref().load(); }

// Counts every warning regardless of verbosity so tests can observe them.
inline std::atomic<long>& warning_count() {
  static std::atomic<long> count{0};
  return count;
}

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
void warn(const Args&... args) {
  ++warning_count();
  if (enabled(Level::Warn)) std::cerr << "warning: " << concat(args...) << '\n';
}

template <typename... Args>
void info(const Args&... args) {
  if (enabled(Level::Info)) std::cerr << concat(args...) << '\n';
}

template <typename... Args>
void debug(const Args&... args) {
  if (enabled(Level::Debug)) std::cerr << "debug: " << concat(args...) << '\n';
}

}  // namespace shazam::log
