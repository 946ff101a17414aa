#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "simcan/runtime.hpp"

namespace simcan::attack {

using net::FrameLabel;
using net::NodeId;
using sim::Time;

/// Everything an adversary gets: bus read/write at tap points, raw frame
/// submission, hardware substitution and gateway tampering. Key stores are
/// not reachable through this surface.
class AttackSurface {
 public:
  explicit AttackSurface(net::Network& nw) : nw_(nw) {}

  void schedule(Time at, std::function<void()> fn) {
    nw_.simulation().schedule(at, std::move(fn));
  }

  Time now() const { return const_cast<net::Network&>(nw_).simulation().now(); }

  void install_tap(const std::string& segment, bus::TapPoint tap) {
    nw_.install_tap(segment, std::move(tap));
  }

  bool submit(const std::string& segment, std::uint32_t raw_id, Bytes bytes,
              FrameLabel label) {
    return nw_.attacker_submit(segment, raw_id, std::move(bytes), label);
  }

  void swap_hardware(const std::string& node_name, Bytes foreign_secret) {
    nw_.substitute_hardware(nw_.node_id(node_name), std::move(foreign_secret));
  }

  void tamper_gateway(bool suppress_reaction, const std::string& starve_node) {
    nw_.tamper_gateway(suppress_reaction,
                       starve_node.empty() ? -1 : nw_.node_id(starve_node));
  }

  void set_label(const std::string& segment, std::uint64_t tx_seq, FrameLabel l) {
    nw_.set_label(segment, tx_seq, l);
  }

  /// Full passive bus visibility (the sniffing half of the MitM).
  const std::vector<bus::BusEvent>& bus_events(const std::string& segment) const {
    return nw_.bus(segment).events();
  }

  NodeId node_id(const std::string& name) const { return nw_.node_id(name); }
  std::uint64_t horizon_us() const { return nw_.config().horizon_us; }

 private:
  net::Network& nw_;
};

using SurfacePtr = std::shared_ptr<AttackSurface>;

namespace detail {

inline Bytes deterministic_mutation(const Bytes& bytes) {
  Bytes m = bytes;
  // corrupt the first data byte, leaving the counter field intact so the
  // mutation survives the replay check and dies on the digest
  const std::size_t idx = m.size() > 2 ? 2 : 0;
  if (!m.empty()) m[idx] ^= 0xff;
  return m;
}

/// Latest genuine transmission of one id, used to craft plausible forgeries.
inline const Bytes* last_tx_of(const AttackSurface& s, const std::string& segment,
                               std::uint32_t id) {
  const auto& evs = s.bus_events(segment);
  for (auto it = evs.rbegin(); it != evs.rend(); ++it)
    if (it->kind == bus::EventKind::TX_END && it->frame_raw_id == id &&
        it->origin != net::Network::kAttackerId)
      return &it->bytes;
  return nullptr;
}

inline Bytes forged_frame(const AttackSurface& s, const std::string& segment,
                          std::uint32_t id, RandomSource& rng,
                          std::size_t fallback_len) {
  Bytes out;
  if (const Bytes* last = last_tx_of(s, segment, id)) {
    out = *last;
    const std::uint16_t counter = static_cast<std::uint16_t>(get_u16_be(out, 0) + 1);
    out[0] = static_cast<std::uint8_t>(counter >> 8);
    out[1] = static_cast<std::uint8_t>(counter & 0xff);
    // scramble a slice of the data region; the stale digest gives it away
    for (std::size_t i = 2; i < std::min<std::size_t>(out.size(), 10); ++i)
      out[i] = rng.next_byte();
  } else {
    out = rng.bytes(fallback_len);
    out[0] = 0;
    out[1] = 0;
  }
  return out;
}

/// Periodic submission chain; keeps itself alive through the captures.
inline void submit_chain(SurfacePtr s, std::string segment, std::uint32_t id,
                         Bytes fixed_data, std::size_t fallback_len, Time at,
                         Time period, Time stop,
                         std::shared_ptr<RandomSource> rng, FrameLabel label) {
  s->schedule(at, [=] {
    if (stop != 0 && s->now() > stop) return;
    Bytes frame = fixed_data.empty()
                      ? forged_frame(*s, segment, id, *rng, fallback_len)
                      : fixed_data;
    s->submit(segment, id, std::move(frame), label);
    submit_chain(s, segment, id, fixed_data, fallback_len, at + period, period,
                 stop, rng, label);
  });
}

inline void install_mitm(const SurfacePtr& s, const scn::AttackSpec& a) {
  bus::TapPoint tap;
  if (a.kind == scn::AttackSpec::Kind::MITM_OBD) {
    tap.position = {bus::TapPosition::Kind::AT_OBD, -1};
  } else {
    tap.position = {bus::TapPosition::Kind::DOWNSTREAM_OF, s->node_id(a.victim)};
    tap.toward_ids = a.mutate_ids;  // inbound ids the split can reach
    for (auto id : a.suppress_ids) tap.toward_ids.insert(id);
    for (auto id : a.pass_ids) tap.toward_ids.insert(id);
  }
  tap.handler = [s, a](const bus::TapContext& ctx, const Bytes& bytes) {
    const Time now = s->now();
    if (now < a.start_us || (a.stop_us != 0 && now > a.stop_us))
      return bus::TapDecision::pass();
    if (a.suppress_ids.count(ctx.frame_raw_id)) {
      s->set_label(a.segment, ctx.tx_seq, FrameLabel::SUPPRESSED);
      return bus::TapDecision::drop();
    }
    if (a.mutate_ids.count(ctx.frame_raw_id)) {
      s->set_label(a.segment, ctx.tx_seq, FrameLabel::MUTATED);
      return bus::TapDecision::replace(deterministic_mutation(bytes));
    }
    return bus::TapDecision::pass();
  };
  s->install_tap(a.segment, std::move(tap));

  if (a.inject_id && a.inject_period_us > 0) {
    submit_chain(s, a.segment, *a.inject_id, a.inject_data, 62,
                 a.start_us == 0 ? a.inject_period_us : a.start_us,
                 a.inject_period_us, a.stop_us,
                 std::make_shared<RandomSource>(0xfeedull ^ *a.inject_id),
                 FrameLabel::INJECTED);
  }
}

inline void install_replay(const SurfacePtr& s, const scn::AttackSpec& a) {
  s->schedule(a.replay_at_us, [s, a] {
    std::vector<std::pair<std::uint32_t, Bytes>> recorded;
    for (const auto& ev : s->bus_events(a.segment))
      if (ev.kind == bus::EventKind::TX_END && ev.time_us >= a.record_start_us &&
          ev.time_us <= a.record_end_us &&
          ev.origin != net::Network::kAttackerId)
        recorded.emplace_back(ev.frame_raw_id, ev.bytes);
    for (auto& [id, bytes] : recorded)
      s->submit(a.segment, id, std::move(bytes), FrameLabel::REPLAYED);
  });
}

inline void install_flood(const SurfacePtr& s, const scn::AttackSpec& a) {
  if (a.flood_rate_fps == 0) return;
  const std::uint32_t id =
      a.flood_target_id ? *a.flood_target_id : a.flood_id.value_or(0x1);
  submit_chain(s, a.segment, id, {}, a.flood_payload_len,
               a.start_us, 1'000'000 / a.flood_rate_fps, a.stop_us,
               std::make_shared<RandomSource>(0xd005ull ^ id),
               FrameLabel::INJECTED);
}

inline void install_hw_replace(const SurfacePtr& s, const scn::AttackSpec& a) {
  s->schedule(a.swap_at_us, [s, victim = a.victim, secret = a.foreign_secret] {
    s->swap_hardware(victim, secret);
  });
}

inline void install_tamper(const SurfacePtr& s, const scn::AttackSpec& a) {
  s->schedule(a.start_us, [s, suppress = a.suppress_reaction,
                           starve = a.starve_target] {
    s->tamper_gateway(suppress, starve);
  });
}

}  // namespace detail

/// Wire every scripted adversary of the scenario into the network. Must run
/// before Network::run(); the scheduled closures keep their surfaces alive.
inline void install(net::Network& nw) {
  for (const auto& a : nw.config().attacks) {
    auto surface = std::make_shared<AttackSurface>(nw);
    switch (a.kind) {
      case scn::AttackSpec::Kind::MITM_OBD:
      case scn::AttackSpec::Kind::MITM_DOWNSTREAM:
        detail::install_mitm(surface, a);
        break;
      case scn::AttackSpec::Kind::REPLAY:
        detail::install_replay(surface, a);
        break;
      case scn::AttackSpec::Kind::DOS_FLOOD:
        detail::install_flood(surface, a);
        break;
      case scn::AttackSpec::Kind::HW_REPLACE:
        detail::install_hw_replace(surface, a);
        break;
      case scn::AttackSpec::Kind::TAMPER_SGTW:
        detail::install_tamper(surface, a);
        break;
    }
  }
}

struct DetectionStats {
  std::uint64_t tp = 0;  // attack frames rejected
  std::uint64_t fp = 0;  // benign frames rejected
  std::uint64_t fn = 0;  // attack frames accepted
  std::uint64_t tn = 0;  // benign frames accepted

  double precision() const {
    return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  double recall() const {
    return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
};

/// Detection quality per ground-truth label, computed strictly from
/// (label x receiver decision) pairs.
inline std::map<std::string, DetectionStats> detection_metrics(
    const net::Network& nw) {
  std::map<std::string, DetectionStats> out;
  for (const auto& v : nw.verdicts()) {
    const FrameLabel label = nw.label_of(v.segment, v.tx_seq);
    const bool is_attack = label == FrameLabel::MUTATED ||
                           label == FrameLabel::INJECTED ||
                           label == FrameLabel::REPLAYED;
    auto& all = out["all"];
    if (is_attack) {
      auto& k = out[std::string(frame_label_name(label))];
      if (v.accepted) {
        ++k.fn;
        ++all.fn;
      } else {
        ++k.tp;
        ++all.tp;
      }
    } else {
      if (v.accepted)
        ++all.tn;
      else
        ++all.fp;
    }
  }
  return out;
}

/// Frame-dump lines with a trailing ground-truth label column.
inline std::vector<std::string> labeled_dump(net::Network& nw,
                                             const std::string& segment) {
  std::vector<std::string> out;
  const auto& b = nw.bus(segment);
  for (const auto& ev : b.events()) {
    if (ev.kind != bus::EventKind::TX_END) continue;
    std::string line = wire::dump_line(ev.time_us, b.config().kind,
                                       ev.frame_raw_id, ev.bytes);
    line += '\t';
    line += frame_label_name(nw.label_of(segment, ev.tx_seq));
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace simcan::attack
