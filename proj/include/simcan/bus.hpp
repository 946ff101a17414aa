#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "simcan/bytes.hpp"
#include "simcan/errors.hpp"
#include "simcan/frame.hpp"
#include "simcan/sim.hpp"

namespace simcan::bus {

using sim::Time;
using NodeId = int;

struct BusConfig {
  wire::BusKind kind = wire::BusKind::PUBLIC;
  std::uint64_t arbitration_baud = 500'000;
  std::uint64_t data_baud = 2'000'000;
  std::size_t queue_depth = 64;
  // Arbitration-phase bit count charged per frame at the arbitration baud;
  // payload bits ride at the data baud.
  std::uint32_t header_bits = 70;

  void validate() const {
    if (arbitration_baud == 0 || data_baud < arbitration_baud)
      raise(Err::SCHEMA_ERROR, "data_baud must be >= arbitration_baud");
    if (data_baud > 8'000'000)
      raise(Err::SCHEMA_ERROR, "data_baud above the 8 Mbps ceiling");
  }
};

enum class EventKind { TX_START, TX_END, RX_DELIVER, DROPPED };

inline std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::TX_START: return "TX_START";
    case EventKind::TX_END: return "TX_END";
    case EventKind::RX_DELIVER: return "RX_DELIVER";
    case EventKind::DROPPED: return "DROPPED";
  }
  return "?";
}

struct BusEvent {
  Time time_us = 0;
  EventKind kind = EventKind::TX_START;
  std::uint32_t frame_raw_id = 0;
  NodeId origin = -1;
  NodeId dest = -1;  // RX_DELIVER only
  std::uint64_t tx_seq = 0;
  std::uint32_t tag = 0;  // opaque submitter tag (attack ground truth)
  Bytes bytes;
};

struct TapDecision {
  enum class Action { PASS, DROP, REPLACE } action = Action::PASS;
  Bytes replacement;

  static TapDecision pass() { return {}; }
  static TapDecision drop() { return {Action::DROP, {}}; }
  static TapDecision replace(Bytes b) { return {Action::REPLACE, std::move(b)}; }
};

struct TapPosition {
  enum class Kind { AT_OBD, DOWNSTREAM_OF } kind = Kind::AT_OBD;
  NodeId node = -1;  // DOWNSTREAM_OF only

  bool operator<(const TapPosition& o) const {
    if (kind != o.kind) return kind < o.kind;
    return node < o.node;
  }
};

struct TapContext {
  NodeId origin = -1;
  std::uint32_t frame_raw_id = 0;
  std::uint64_t tx_seq = 0;
};

/// Interception point. An OBD tap sees every frame; a downstream tap sees
/// frames originated by the split-off node plus the ids routed toward it.
struct TapPoint {
  TapPosition position;
  std::set<std::uint32_t> toward_ids;  // DOWNSTREAM_OF: inbound ids it can touch
  std::function<TapDecision(const TapContext&, const Bytes&)> handler;
};

/// One CAN-FD bus segment: ID arbitration, configurable baud rates, taps.
class VirtualBus {
 public:
  VirtualBus(sim::Simulation& sim, std::string name, BusConfig cfg)
      : sim_(sim), name_(std::move(name)), cfg_(cfg) {
    cfg_.validate();
  }

  const std::string& name() const { return name_; }
  const BusConfig& config() const { return cfg_; }

  using RxHandler = std::function<void(const BusEvent&)>;

  void subscribe(NodeId node, RxHandler handler) {
    subscribers_[node] = std::move(handler);
  }

  void install_tap(TapPoint tap) {
    if (taps_.count(tap.position))
      raise(Err::SCHEMA_ERROR, "tap position already occupied");
    taps_.emplace(tap.position, std::move(tap));
  }

  Time tx_duration_us(std::size_t nbytes) const {
    const std::uint64_t head =
        ceil_div(std::uint64_t(cfg_.header_bits) * 1'000'000, cfg_.arbitration_baud);
    const std::uint64_t data =
        ceil_div(std::uint64_t(nbytes) * 8 * 1'000'000, cfg_.data_baud);
    return head + data;
  }

  /// Queue a frame for transmission at the current simulation time.
  /// Returns false (and counts an overload) when the queue is full.
  bool submit(NodeId node, wire::FrameId id, Bytes bytes, std::uint32_t tag = 0) {
    if (pending_.size() >= cfg_.queue_depth) {
      ++overloads_;
      return false;
    }
    pending_.push_back(Pending{id.raw, node, next_enqueue_++, tag, std::move(bytes)});
    if (!busy_ && !arbitration_scheduled_) {
      arbitration_scheduled_ = true;
      sim_.schedule(sim_.now(), [this] { arbitrate(); });
    }
    return true;
  }

  /// Fraction of the trailing window the bus spent transmitting.
  double load(Time window_us) const {
    if (window_us == 0) raise(Err::ZERO_WINDOW, "bus load needs a non-empty window");
    const Time end = sim_.now();
    const Time start = end > window_us ? end - window_us : 0;
    const Time span = end - start;
    if (span == 0) raise(Err::ZERO_WINDOW, "bus load needs elapsed time");
    std::uint64_t busy = 0;
    for (const auto& iv : busy_intervals_) {
      const Time s = std::max(iv.first, start);
      const Time e = std::min(iv.second, end);
      if (e > s) busy += e - s;
    }
    if (busy_ && busy_until_ > end) {
      // in-flight frame: charge the elapsed part
      const Time s = std::max(current_tx_start_, start);
      if (end > s) busy += end - s;
    }
    return static_cast<double>(busy) / static_cast<double>(span);
  }

  const std::vector<BusEvent>& events() const { return events_; }
  std::uint64_t overloads() const { return overloads_; }
  std::uint64_t frames_transmitted() const { return tx_count_; }

 private:
  struct Pending {
    std::uint32_t raw_id;
    NodeId origin;
    std::uint64_t enq;
    std::uint32_t tag;
    Bytes bytes;
  };

  static std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
    return (a + b - 1) / b;
  }

  void arbitrate() {
    arbitration_scheduled_ = false;
    if (busy_ || pending_.empty()) return;
    auto best = std::min_element(
        pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) {
          if (a.raw_id != b.raw_id) return a.raw_id < b.raw_id;
          if (a.origin != b.origin) return a.origin < b.origin;
          return a.enq < b.enq;
        });
    Pending frame = std::move(*best);
    pending_.erase(best);
    busy_ = true;
    const Time start = sim_.now();
    const Time dur = tx_duration_us(frame.bytes.size());
    current_tx_start_ = start;
    busy_until_ = start + dur;
    const std::uint64_t seq = tx_count_++;
    log(BusEvent{start, EventKind::TX_START, frame.raw_id, frame.origin, -1, seq,
                 frame.tag, frame.bytes});
    sim_.schedule(start + dur, [this, frame = std::move(frame), seq] {
      finish_tx(frame, seq);
    });
  }

  void finish_tx(const Pending& frame, std::uint64_t seq) {
    busy_ = false;
    busy_intervals_.emplace_back(current_tx_start_, sim_.now());
    log(BusEvent{sim_.now(), EventKind::TX_END, frame.raw_id, frame.origin, -1,
                 seq, frame.tag, frame.bytes});

    Bytes delivered = frame.bytes;
    bool dropped = false;
    for (auto& [pos, tap] : taps_) {
      if (!tap_applies(pos, tap, frame)) continue;
      TapDecision d = tap.handler(TapContext{frame.origin, frame.raw_id, seq},
                                  delivered);
      if (d.action == TapDecision::Action::DROP) {
        dropped = true;
        break;
      }
      if (d.action == TapDecision::Action::REPLACE)
        delivered = std::move(d.replacement);
    }

    if (dropped) {
      log(BusEvent{sim_.now(), EventKind::DROPPED, frame.raw_id, frame.origin,
                   -1, seq, frame.tag, delivered});
    } else {
      for (const auto& [node, handler] : subscribers_) {
        if (node == frame.origin) continue;
        BusEvent ev{sim_.now(),   EventKind::RX_DELIVER, frame.raw_id,
                    frame.origin, node,                  seq,
                    frame.tag,    delivered};
        log(ev);
        if (handler) handler(ev);
      }
    }

    if (!pending_.empty() && !arbitration_scheduled_) {
      arbitration_scheduled_ = true;
      sim_.schedule(sim_.now(), [this] { arbitrate(); });
    }
  }

  bool tap_applies(const TapPosition& pos, const TapPoint& tap,
                   const Pending& frame) const {
    if (pos.kind == TapPosition::Kind::AT_OBD) return true;
    return frame.origin == pos.node || tap.toward_ids.count(frame.raw_id) > 0;
  }

  void log(BusEvent ev) { events_.push_back(std::move(ev)); }

  sim::Simulation& sim_;
  std::string name_;
  BusConfig cfg_;
  std::map<NodeId, RxHandler> subscribers_;
  std::map<TapPosition, TapPoint> taps_;
  std::deque<Pending> pending_;
  std::vector<BusEvent> events_;
  std::vector<std::pair<Time, Time>> busy_intervals_;
  bool busy_ = false;
  bool arbitration_scheduled_ = false;
  Time busy_until_ = 0;
  Time current_tx_start_ = 0;
  std::uint64_t next_enqueue_ = 0;
  std::uint64_t tx_count_ = 0;
  std::uint64_t overloads_ = 0;
};

}  // namespace simcan::bus
