#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>

namespace carbonwatch {

/// Monotonic time source shared by the tracker and its background workers.
///
/// Workers never sleep directly; they park in `wait_until`, which returns
/// once the deadline passes or `wake` becomes true after a `notify()`.
/// This lets tests substitute ManualClock and step virtual time
/// deterministically.
class Clock {
 public:
  virtual ~Clock() = default;

  /// Seconds on a monotonic timeline.
  virtual double now() const = 0;

  /// Returns true if woken by `wake`, false if the deadline passed.
  virtual bool wait_until(double deadline, const std::function<bool()>& wake) = 0;

  /// Wakes parked waiters so they re-evaluate their predicates.
  virtual void notify() = 0;

  /// Bookkeeping for threads that park on this clock. Must be called by the
  /// spawning thread before the worker starts; `worker_exited` by the
  /// worker itself as its last action.
  virtual void worker_spawned() {}
  virtual void worker_exited() {}
};

class SteadyClock final : public Clock {
 public:
  double now() const override;
  bool wait_until(double deadline, const std::function<bool()>& wake) override;
  void notify() override;

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
};

/// Virtual clock for tests. Time only moves through `advance`, which steps
/// through every parked deadline in order and waits for the woken workers
/// to finish their work and park again before moving on.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(double start = 0.0) : now_(start) {}

  double now() const override;
  bool wait_until(double deadline, const std::function<bool()>& wake) override;
  void notify() override;
  void worker_spawned() override;
  void worker_exited() override;

  void advance(double seconds);
  /// Blocks until every registered worker is parked with nothing due.
  void settle();

 private:
  bool quiescent_locked() const;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  double now_;
  int active_ = 0;
  // parked waiter id -> (deadline, predicate)
  std::map<unsigned long, std::pair<double, const std::function<bool()>*>> parked_;
  unsigned long next_id_ = 0;
};

}  // namespace carbonwatch
