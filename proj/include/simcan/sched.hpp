#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"
#include "simcan/frame.hpp"
#include "simcan/keys.hpp"

namespace simcan::sched {

using sim::Time;

/// Abstract per-operation cost model, microseconds. MAC cost follows
/// c0 + c1 * digest_bits + c2 * input_blocks unless a per-frame override is
/// present; calibration constants live in scenario files, not here.
struct CostModel {
  double mac_c0_us = 0.0;
  double mac_c1_us_per_bit = 0.0;
  double mac_c2_us_per_block = 0.0;
  double compare_us = 1.0;
  std::map<std::uint32_t, double> mac_override_us;

  double mac_cost_us(std::uint32_t frame_raw_id, int digest_bits,
                     std::size_t mac_input_len) const {
    auto it = mac_override_us.find(frame_raw_id);
    if (it != mac_override_us.end()) return it->second;
    const double blocks = std::ceil(static_cast<double>(mac_input_len) / 16.0);
    return mac_c0_us + mac_c1_us_per_bit * digest_bits +
           mac_c2_us_per_block * blocks;
  }
};

/// Digests precomputed by the background task for predicted payloads of
/// steady-state frames, keyed by (frame id, counter).
class SpeculationCache {
 public:
  struct Entry {
    Bytes predicted_data;
    Bytes digest;
  };

  const Entry* find(std::uint32_t id, std::uint16_t counter) const {
    auto it = entries_.find(Key{id, counter});
    return it == entries_.end() ? nullptr : &it->second;
  }

  void put(std::uint32_t id, std::uint16_t counter, Entry e) {
    entries_[Key{id, counter}] = std::move(e);
  }

  bool contains(std::uint32_t id, std::uint16_t counter) const {
    return entries_.count(Key{id, counter}) > 0;
  }

  void erase(std::uint32_t id, std::uint16_t counter) {
    entries_.erase(Key{id, counter});
  }

  /// Drop every digest for one frame id (the key it was computed under
  /// rolled, or the frame left steady state).
  void invalidate(std::uint32_t id) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (it->first.id == id)
        it = entries_.erase(it);
      else
        ++it;
    }
  }

  /// Drop digests outside the acceptance window [last+1, last+window].
  void prune(std::uint32_t id, std::uint16_t last, int window) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (it->first.id == id) {
        const std::uint16_t delta =
            static_cast<std::uint16_t>(it->first.counter - last);
        if (delta == 0 || delta > window) {
          it = entries_.erase(it);
          continue;
        }
      }
      ++it;
    }
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Key {
    std::uint32_t id;
    std::uint16_t counter;
    bool operator<(const Key& o) const {
      if (id != o.id) return id < o.id;
      return counter < o.counter;
    }
  };
  std::map<Key, Entry> entries_;
};

enum class Verdict { AUTHENTIC_SPECULATED, AUTHENTIC_RECOMPUTED, REJECTED };

enum class RejectReason { NONE, REPLAY, BAD_MAC, KEY_DEPRECATED, NO_KEY };

inline std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::AUTHENTIC_SPECULATED: return "AUTHENTIC_SPECULATED";
    case Verdict::AUTHENTIC_RECOMPUTED: return "AUTHENTIC_RECOMPUTED";
    case Verdict::REJECTED: return "REJECTED";
  }
  return "?";
}

inline std::string_view reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::NONE: return "NONE";
    case RejectReason::REPLAY: return "REPLAY";
    case RejectReason::BAD_MAC: return "BAD_MAC";
    case RejectReason::KEY_DEPRECATED: return "KEY_DEPRECATED";
    case RejectReason::NO_KEY: return "NO_KEY";
  }
  return "?";
}

struct VerifyOutcome {
  Verdict verdict = Verdict::REJECTED;
  RejectReason reason = RejectReason::NONE;
  double cost_us = 0.0;
  bool speculation_attempted = false;  // a cached digest existed for the counter
};

/// Receiver-side verification. Counter replay check first, then the
/// speculative comparison (payload and digest must both match the cached
/// prediction), then the standard recompute-and-compare flow. Only an
/// accepted frame advances the counter state.
inline VerifyOutcome verify_frame(const wire::PublicFrame& frame,
                                  const crypto::KeyMaterial& mac_key,
                                  keys::KeyStatus key_status,
                                  const crypto::MacAlgo& algo,
                                  SpeculationCache* cache,
                                  std::uint16_t* last_counter, int counter_window,
                                  const CostModel& cost) {
  VerifyOutcome out;
  if (last_counter != nullptr) {
    const std::uint16_t delta =
        static_cast<std::uint16_t>(frame.counter - *last_counter);
    if (delta == 0 || delta > counter_window) {
      out.reason = RejectReason::REPLAY;
      return out;
    }
  }
  if (key_status == keys::KeyStatus::DEPRECATED) {
    out.reason = RejectReason::KEY_DEPRECATED;
    return out;
  }

  if (cache != nullptr) {
    if (const auto* e = cache->find(frame.id.raw, frame.counter)) {
      out.speculation_attempted = true;
      out.cost_us += cost.compare_us;
      if (bytes_equal(e->predicted_data, frame.data) &&
          bytes_equal(e->digest, frame.digest)) {
        out.verdict = Verdict::AUTHENTIC_SPECULATED;
        if (last_counter) *last_counter = frame.counter;
        cache->erase(frame.id.raw, frame.counter);
        return out;
      }
    }
  }

  const Bytes msg = wire::public_mac_input(frame.data, frame.counter);
  const Bytes expect = crypto::mac(algo, mac_key, msg);
  out.cost_us += cost.mac_cost_us(frame.id.raw, algo.digest_len_bits, msg.size()) +
                 cost.compare_us;
  if (bytes_equal(expect, frame.digest)) {
    out.verdict = Verdict::AUTHENTIC_RECOMPUTED;
    if (last_counter) *last_counter = frame.counter;
  } else {
    out.reason = RejectReason::BAD_MAC;
  }
  return out;
}

/// A steady-state frame registered for speculation.
struct RegisteredFrame {
  std::uint32_t id = 0;
  Bytes seed_data;  // prediction before any frame has been accepted
};

/// Everything the verification pipeline needs, plus running tallies.
struct VerifyEnv {
  CostModel cost;
  crypto::MacAlgo algo{crypto::MacVariant::CMAC_AES256, 128};
  std::function<const keys::PLKeyEntry*(std::uint32_t id)> key_for;
  bool speculation = false;
  bool sabotage_predictions = false;  // experiment hook: force every miss
  int counter_window = 8;
  std::vector<RegisteredFrame> registered;

  SpeculationCache cache;
  std::map<std::uint32_t, std::uint16_t> last_counter;
  std::map<std::uint32_t, Bytes> last_data;

  std::uint64_t spec_hits = 0;
  std::uint64_t spec_misses = 0;
  std::uint64_t accepted_speculated = 0;
  std::uint64_t accepted_recomputed = 0;
  std::uint64_t rejected = 0;

  std::uint16_t& counter_slot(std::uint32_t id) {
    auto it = last_counter.find(id);
    if (it == last_counter.end())
      it = last_counter.emplace(id, std::uint16_t{0xffff}).first;
    return it->second;
  }

  bool is_registered(std::uint32_t id) const {
    for (const auto& r : registered)
      if (r.id == id) return true;
    return false;
  }

  const Bytes* prediction_for(std::uint32_t id) const {
    auto it = last_data.find(id);
    if (it != last_data.end()) return &it->second;
    for (const auto& r : registered)
      if (r.id == id) return &r.seed_data;
    return nullptr;
  }

  VerifyOutcome process(const wire::PublicFrame& frame) {
    const keys::PLKeyEntry* entry = key_for ? key_for(frame.id.raw) : nullptr;
    VerifyOutcome out;
    if (entry == nullptr) {
      out.reason = RejectReason::NO_KEY;
      ++rejected;
      return out;
    }
    const crypto::KeyMaterial mac_key =
        algo.variant == crypto::MacVariant::CMAC_AES256
            ? crypto::expand_to_aes_key(entry->key)
            : entry->key;
    out = verify_frame(frame, mac_key, entry->status, algo,
                       speculation ? &cache : nullptr, &counter_slot(frame.id.raw),
                       counter_window, cost);
    if (out.verdict == Verdict::AUTHENTIC_SPECULATED) {
      ++accepted_speculated;
      ++spec_hits;
      last_data[frame.id.raw] = frame.data;
      cache.prune(frame.id.raw, frame.counter, counter_window);
    } else if (out.verdict == Verdict::AUTHENTIC_RECOMPUTED) {
      ++accepted_recomputed;
      if (speculation && is_registered(frame.id.raw)) ++spec_misses;
      last_data[frame.id.raw] = frame.data;
      cache.prune(frame.id.raw, frame.counter, counter_window);
    } else {
      ++rejected;
      if (speculation && out.speculation_attempted) ++spec_misses;
    }
    return out;
  }
};

/// One background precompute step: the first missing digest in some
/// registered frame's window. Returns the charged cost, or nullopt when the
/// cache is already full.
inline std::optional<double> speculate_one(VerifyEnv& env) {
  for (const auto& reg : env.registered) {
    const keys::PLKeyEntry* entry = env.key_for ? env.key_for(reg.id) : nullptr;
    if (!entry || entry->status != keys::KeyStatus::ACTIVE) continue;
    const Bytes* predicted = env.prediction_for(reg.id);
    if (!predicted) continue;
    const std::uint16_t last =
        env.last_counter.count(reg.id) ? env.last_counter[reg.id] : 0xffff;
    for (int k = 1; k <= env.counter_window; ++k) {
      const std::uint16_t c = static_cast<std::uint16_t>(last + k);
      if (env.cache.contains(reg.id, c)) continue;
      Bytes data = *predicted;
      if (env.sabotage_predictions && !data.empty()) data[0] ^= 0xff;
      const crypto::KeyMaterial mac_key =
          env.algo.variant == crypto::MacVariant::CMAC_AES256
              ? crypto::expand_to_aes_key(entry->key)
              : entry->key;
      const Bytes msg = wire::public_mac_input(data, c);
      SpeculationCache::Entry e;
      e.predicted_data = data;
      e.digest = crypto::mac(env.algo, mac_key, msg);
      env.cache.put(reg.id, c, std::move(e));
      return env.cost.mac_cost_us(reg.id, env.algo.digest_len_bits, msg.size());
    }
  }
  return std::nullopt;
}

/// Fill the cache within an idle budget; partial fill is fine, a later miss
/// just falls back to the standard flow. An op runs only if it fits whole
/// inside the remaining budget, so background work never spills into the
/// next release.
inline double background_speculate(VerifyEnv& env, double idle_budget_us) {
  double spent = 0.0;
  while (true) {
    // cost of the next missing slot, without computing the digest yet
    std::optional<double> next_cost;
    for (const auto& reg : env.registered) {
      const keys::PLKeyEntry* entry = env.key_for ? env.key_for(reg.id) : nullptr;
      if (!entry || entry->status != keys::KeyStatus::ACTIVE) continue;
      const Bytes* predicted = env.prediction_for(reg.id);
      if (!predicted) continue;
      const std::uint16_t last =
          env.last_counter.count(reg.id) ? env.last_counter[reg.id] : 0xffff;
      for (int k = 1; k <= env.counter_window; ++k) {
        const std::uint16_t c = static_cast<std::uint16_t>(last + k);
        if (!env.cache.contains(reg.id, c)) {
          next_cost = env.cost.mac_cost_us(reg.id, env.algo.digest_len_bits,
                                           predicted->size() + 2);
          break;
        }
      }
      if (next_cost) break;
    }
    if (!next_cost) break;
    if (spent + *next_cost > idle_budget_us) break;
    auto charged = speculate_one(env);
    if (!charged) break;
    spent += *charged;
  }
  return spent;
}

// ---------------------------------------------------------------------------
// Fixed-priority run-to-completion scheduler
// ---------------------------------------------------------------------------

struct FixedWork {
  double us = 0.0;
};

struct VerifyWork {
  wire::PublicFrame frame;
};

using WorkItem = std::variant<FixedWork, VerifyWork>;

/// Statically-declared task. Priority 0 is the background/idle slot; higher
/// numbers preempt lower ones. FIFO among equal priorities.
struct TaskSpec {
  std::string name;
  int priority = 1;
  Time period_us = 0;  // 0 = event-driven, single release at t = 0
  std::function<std::vector<WorkItem>(std::uint64_t release_idx)> work;
};

enum class TraceKind { START, PREEMPT, END, MISS, BG_START, BG_END };

inline std::string_view trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::START: return "START";
    case TraceKind::PREEMPT: return "PREEMPT";
    case TraceKind::END: return "END";
    case TraceKind::MISS: return "MISS";
    case TraceKind::BG_START: return "BG_START";
    case TraceKind::BG_END: return "BG_END";
  }
  return "?";
}

struct TraceEvent {
  double time_us = 0.0;
  std::string task;
  TraceKind kind = TraceKind::START;
};

struct UtilizationReport {
  double horizon_us = 0.0;
  std::map<std::string, double> task_busy_us;
  double realtime_busy_us = 0.0;
  double background_busy_us = 0.0;
  double realtime_cpu_pct = 0.0;
  double background_cpu_pct = 0.0;
  std::uint64_t deadline_misses = 0;
  std::uint64_t spec_hits = 0;
  std::uint64_t spec_misses = 0;
  std::uint64_t accepted_speculated = 0;
  std::uint64_t accepted_recomputed = 0;
  std::uint64_t rejected = 0;
};

struct ScheduleResult {
  UtilizationReport report;
  std::vector<TraceEvent> trace;
};

/// Deterministic interpretation of a task set over a horizon. Background
/// work (zero-priority tasks and speculative digest precomputation) runs
/// only in idle gaps and never into the next release.
inline ScheduleResult run_schedule(const std::vector<TaskSpec>& tasks,
                                   Time horizon_us, VerifyEnv* env = nullptr) {
  struct Job {
    std::size_t task_idx;
    std::uint64_t release_idx;
    double release;
    double deadline;
    bool started = false;
    bool done = false;
    bool missed = false;
    double remaining = 0.0;
  };

  ScheduleResult result;
  auto& rep = result.report;
  rep.horizon_us = static_cast<double>(horizon_us);

  std::vector<Job> jobs;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto& t = tasks[ti];
    if (t.period_us == 0) {
      jobs.push_back(Job{ti, 0, 0.0, rep.horizon_us});
    } else {
      for (std::uint64_t k = 0; k * t.period_us < horizon_us; ++k)
        jobs.push_back(Job{ti, k, static_cast<double>(k * t.period_us),
                           static_cast<double>((k + 1) * t.period_us)});
    }
  }

  auto evaluate = [&](Job& j) {
    double total = 0.0;
    const auto items = tasks[j.task_idx].work
                           ? tasks[j.task_idx].work(j.release_idx)
                           : std::vector<WorkItem>{};
    for (const auto& item : items) {
      if (std::holds_alternative<FixedWork>(item)) {
        total += std::get<FixedWork>(item).us;
      } else {
        if (env == nullptr)
          raise(Err::INTERNAL, "VerifyWork requires a VerifyEnv");
        total += env->process(std::get<VerifyWork>(item).frame).cost_us;
      }
    }
    j.remaining = total;
  };

  auto pick = [&](double now) -> Job* {
    Job* best = nullptr;
    for (auto& j : jobs) {
      if (j.done || j.release > now) continue;
      if (tasks[j.task_idx].priority <= 0) continue;
      if (!best) {
        best = &j;
        continue;
      }
      const int bp = tasks[best->task_idx].priority;
      const int jp = tasks[j.task_idx].priority;
      if (jp > bp || (jp == bp && (j.release < best->release ||
                                   (j.release == best->release &&
                                    j.task_idx < best->task_idx)))) {
        best = &j;
      }
    }
    return best;
  };

  auto next_release_after = [&](double now) -> double {
    double next = rep.horizon_us;
    for (const auto& j : jobs)
      if (!j.done && j.release > now) next = std::min(next, j.release);
    return next;
  };

  auto charge = [&](const std::string& name, double us, bool realtime) {
    rep.task_busy_us[name] += us;
    if (realtime)
      rep.realtime_busy_us += us;
    else
      rep.background_busy_us += us;
  };

  auto record_miss = [&](Job& j, double when) {
    if (j.missed) return;
    j.missed = true;
    ++rep.deadline_misses;
    result.trace.push_back({when, tasks[j.task_idx].name, TraceKind::MISS});
  };

  // Background (priority 0) released jobs run in idle gaps, one whole item
  // at a time, interleaved with speculative digest precomputation.
  auto run_idle = [&](double from, double until) -> double {
    double t = from;
    bool opened = false;
    auto open = [&] {
      if (!opened) {
        result.trace.push_back({t, "background", TraceKind::BG_START});
        opened = true;
      }
    };
    // zero-priority task items first
    for (auto& j : jobs) {
      if (j.done || j.release > t || tasks[j.task_idx].priority > 0) continue;
      if (!j.started) {
        j.started = true;
        evaluate(j);
      }
      if (j.remaining > 0 && t + j.remaining <= until) {
        open();
        charge(tasks[j.task_idx].name, j.remaining, false);
        t += j.remaining;
        j.remaining = 0;
        j.done = true;
        result.trace.push_back({t, tasks[j.task_idx].name, TraceKind::END});
      }
    }
    // then speculation
    if (env != nullptr && env->speculation) {
      const double spent = background_speculate(*env, until - t);
      if (spent > 0) {
        open();
        charge("background", spent, false);
        t += spent;
      }
    }
    if (opened)
      result.trace.push_back({t, "background", TraceKind::BG_END});
    return t;
  };

  double now = 0.0;
  while (now < rep.horizon_us) {
    Job* j = pick(now);
    if (j == nullptr) {
      const double nr = next_release_after(now);
      run_idle(now, nr);
      now = nr;
      continue;
    }
    if (!j->started) {
      j->started = true;
      evaluate(*j);
      result.trace.push_back({now, tasks[j->task_idx].name, TraceKind::START});
      if (j->remaining == 0.0) {
        j->done = true;
        result.trace.push_back({now, tasks[j->task_idx].name, TraceKind::END});
        continue;
      }
    }
    const double nr = next_release_after(now);
    const double finish = now + j->remaining;
    const double run_to = std::min(finish, nr);
    if (j->deadline > now && j->deadline <= run_to && finish > j->deadline)
      record_miss(*j, j->deadline);
    charge(tasks[j->task_idx].name, run_to - now, true);
    j->remaining -= run_to - now;
    // reaching the finish instant completes the job; (now + rem) - now need
    // not reproduce rem exactly in floating point, so the residue is dropped
    if (run_to == finish || j->remaining <= 1e-9) {
      j->remaining = 0;
      j->done = true;
      if (run_to > j->deadline) record_miss(*j, j->deadline);
      result.trace.push_back({run_to, tasks[j->task_idx].name, TraceKind::END});
    } else if (run_to == nr) {
      Job* next = pick(nr);
      if (next != nullptr && next != j &&
          tasks[next->task_idx].priority > tasks[j->task_idx].priority)
        result.trace.push_back({nr, tasks[j->task_idx].name, TraceKind::PREEMPT});
    }
    now = run_to;
  }

  // jobs still incomplete at the horizon missed any deadline they had
  for (auto& j : jobs)
    if (!j.done && j.deadline <= rep.horizon_us &&
        tasks[j.task_idx].priority > 0)
      record_miss(j, j.deadline);

  if (env != nullptr) {
    rep.spec_hits = env->spec_hits;
    rep.spec_misses = env->spec_misses;
    rep.accepted_speculated = env->accepted_speculated;
    rep.accepted_recomputed = env->accepted_recomputed;
    rep.rejected = env->rejected;
  }
  rep.realtime_cpu_pct = 100.0 * rep.realtime_busy_us / rep.horizon_us;
  rep.background_cpu_pct = 100.0 * rep.background_busy_us / rep.horizon_us;
  return result;
}

}  // namespace simcan::sched
