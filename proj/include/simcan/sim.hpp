#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "simcan/errors.hpp"

namespace simcan::sim {

using Time = std::uint64_t;  // simulated microseconds

/// Single-threaded discrete-event executor. Events at equal timestamps run
/// in scheduling order, which is itself deterministic, so a whole run is a
/// pure function of the scenario and seed.
class Simulation {
 public:
  Time now() const { return now_; }

  void schedule(Time at, std::function<void()> fn) {
    if (at < now_) at = now_;
    queue_.push(Event{at, next_seq_++, std::move(fn)});
  }

  void schedule_in(Time delay, std::function<void()> fn) {
    schedule(now_ + delay, std::move(fn));
  }

  bool step() {
    if (queue_.empty()) return false;
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.at;
    ev.fn();
    return true;
  }

  /// Run every event with timestamp <= horizon; the clock ends at horizon.
  void run_until(Time horizon) {
    while (!queue_.empty() && queue_.top().at <= horizon) step();
    if (now_ < horizon) now_ = horizon;
  }

 private:
  struct Event {
    Time at;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Event& o) const {
      if (at != o.at) return at > o.at;
      return seq > o.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  Time now_ = 0;
  std::uint64_t next_seq_ = 0;
};

}  // namespace simcan::sim
