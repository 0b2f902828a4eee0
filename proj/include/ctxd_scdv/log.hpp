#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace ctxd {

using LogSink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
inline LogSink& warning_sink() {
  static LogSink sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}
inline bool& info_enabled() {
  static bool enabled = false;
  return enabled;
}
}  // namespace detail

inline void log_warning(const std::string& msg) {
  std::lock_guard lock(detail::log_mutex());
  detail::warning_sink()(msg);
}

inline void log_info(const std::string& msg) {
  std::lock_guard lock(detail::log_mutex());
  if (detail::info_enabled()) std::cerr << msg << '\n';
}

inline void set_verbose(bool on) {
  std::lock_guard lock(detail::log_mutex());
  detail::info_enabled() = on;
}

/// Replaces the warning sink for the lifetime of the guard (used by tests and
/// by the CLI's --quiet flag).
class ScopedWarningSink {
 public:
  explicit ScopedWarningSink(LogSink sink) {
    std::lock_guard lock(detail::log_mutex());
    previous_ = std::exchange(detail::warning_sink(), std::move(sink));
  }
  ~ScopedWarningSink() {
    std::lock_guard lock(detail::log_mutex());
    detail::warning_sink() = std::move(previous_);
  }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

 private:
  LogSink previous_;
};

}  // namespace ctxd
