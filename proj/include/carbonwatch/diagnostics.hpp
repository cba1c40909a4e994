#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace carbonwatch {

enum class Severity { info, warning, error };

const char* to_string(Severity s);

/// Thread-safe fan-out of warnings and errors to any number of sinks.
/// Every message is also retained so callers (and tests) can inspect what
/// happened during a session.
class Diagnostics {
 public:
  using Sink = std::function<void(Severity, const std::string&)>;

  struct Entry {
    Severity severity;
    std::string message;
  };

  void add_sink(Sink sink);

  void report(Severity severity, const std::string& message);
  void info(const std::string& message) { report(Severity::info, message); }
  void warn(const std::string& message) { report(Severity::warning, message); }
  void error(const std::string& message) { report(Severity::error, message); }

  std::vector<Entry> entries() const;
  std::size_t count(Severity severity) const;
  /// True if any retained message contains `needle`.
  bool contains(const std::string& needle) const;

 private:
  mutable std::mutex mutex_;
  std::vector<Sink> sinks_;
  std::vector<Entry> entries_;
};

}  // namespace carbonwatch
