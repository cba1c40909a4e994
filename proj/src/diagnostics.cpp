#include "carbonwatch/diagnostics.hpp"

#include <algorithm>

namespace carbonwatch {

const char* to_string(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::warning: return "warning";
    case Severity::error: return "error";
  }
  return "unknown";
}

void Diagnostics::add_sink(Sink sink) {
  std::lock_guard lock(mutex_);
  sinks_.push_back(std::move(sink));
}

void Diagnostics::report(Severity severity, const std::string& message) {
  std::vector<Sink> sinks;
  {
    std::lock_guard lock(mutex_);
    entries_.push_back({severity, message});
    sinks = sinks_;
  }
  for (const auto& sink : sinks) {
    try {
      sink(severity, message);
    } catch (...) {
    }
  }
}

std::vector<Diagnostics::Entry> Diagnostics::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t Diagnostics::count(Severity severity) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(),
      [&](const Entry& e) { return e.severity == severity; }));
}

bool Diagnostics::contains(const std::string& needle) const {
  std::lock_guard lock(mutex_);
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) {
    return e.message.find(needle) != std::string::npos;
  });
}

}  // namespace carbonwatch
