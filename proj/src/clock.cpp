#include "carbonwatch/clock.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

namespace carbonwatch {

double SteadyClock::now() const {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

bool SteadyClock::wait_until(double deadline, const std::function<bool()>& wake) {
  using namespace std::chrono;
  const auto when = steady_clock::time_point(
      duration_cast<steady_clock::duration>(duration<double>(deadline)));
  std::unique_lock lock(mutex_);
  return cv_.wait_until(lock, when, [&] { return wake(); });
}

void SteadyClock::notify() {
  std::lock_guard lock(mutex_);
  cv_.notify_all();
}

double ManualClock::now() const {
  std::lock_guard lock(mutex_);
  return now_;
}

bool ManualClock::wait_until(double deadline, const std::function<bool()>& wake) {
  std::unique_lock lock(mutex_);
  const auto id = next_id_++;
  parked_[id] = {deadline, &wake};
  --active_;
  cv_.notify_all();
  bool woken = false;
  cv_.wait(lock, [&] {
    if (wake()) {
      woken = true;
      return true;
    }
    return now_ >= deadline;
  });
  parked_.erase(id);
  ++active_;
  return woken;
}

void ManualClock::notify() {
  std::lock_guard lock(mutex_);
  cv_.notify_all();
}

void ManualClock::worker_spawned() {
  std::lock_guard lock(mutex_);
  ++active_;
}

void ManualClock::worker_exited() {
  std::lock_guard lock(mutex_);
  --active_;
  cv_.notify_all();
}

bool ManualClock::quiescent_locked() const {
  if (active_ > 0) return false;
  return std::all_of(parked_.begin(), parked_.end(), [&](const auto& entry) {
    const auto& [deadline, wake] = entry.second;
    return deadline > now_ && !(*wake)();
  });
}

void ManualClock::settle() {
  std::unique_lock lock(mutex_);
  cv_.notify_all();
  cv_.wait(lock, [&] { return quiescent_locked(); });
}

void ManualClock::advance(double seconds) {
  std::unique_lock lock(mutex_);
  const double target = now_ + std::max(0.0, seconds);
  for (;;) {
    cv_.notify_all();
    cv_.wait(lock, [&] { return quiescent_locked(); });
    double next = std::numeric_limits<double>::infinity();
    for (const auto& [id, entry] : parked_) next = std::min(next, entry.first);
    if (next > target) break;
    now_ = std::max(now_, next);
  }
  now_ = target;
  cv_.notify_all();
  cv_.wait(lock, [&] { return quiescent_locked(); });
}

}  // namespace carbonwatch
