#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simcan/bus.hpp"
#include "simcan/bytes.hpp"
#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"
#include "simcan/frame.hpp"
#include "simcan/keys.hpp"
#include "simcan/provisioning.hpp"
#include "simcan/rng.hpp"
#include "simcan/scenario.hpp"
#include "simcan/sched.hpp"
#include "simcan/sim.hpp"

namespace simcan::net {

using bus::NodeId;
using keys::Level;
using sim::Time;

// Ground-truth labels threaded through bus transmissions.
enum class FrameLabel : std::uint32_t {
  BENIGN = 0,
  SUPPRESSED = 1,
  MUTATED = 2,
  INJECTED = 3,
  REPLAYED = 4,
};

inline std::string_view frame_label_name(FrameLabel l) {
  switch (l) {
    case FrameLabel::BENIGN: return "BENIGN";
    case FrameLabel::SUPPRESSED: return "SUPPRESSED";
    case FrameLabel::MUTATED: return "MUTATED";
    case FrameLabel::INJECTED: return "INJECTED";
    case FrameLabel::REPLAYED: return "REPLAYED";
  }
  return "?";
}

struct VerdictRecord {
  Time time_us = 0;
  NodeId node = -1;
  std::string segment;
  std::uint32_t frame_raw_id = 0;
  std::uint64_t tx_seq = 0;
  bool accepted = false;
  sched::Verdict verdict = sched::Verdict::REJECTED;
  sched::RejectReason reason = sched::RejectReason::NONE;
};

struct ViolationRecord {
  Time time_us = 0;
  std::string node;
  std::uint32_t frame_raw_id = 0;
  std::string reason;
};

struct TranscriptRecord {
  int step = 0;
  std::string direction;  // "gw->node" | "node->gw"
  wire::SecureMsgType msg_type = wire::SecureMsgType::DISCOVERY;
  std::string sender;
  std::size_t body_len = 0;  // ciphertext length
};

struct ChallengeRecord {
  Time time_us = 0;
  Level level = 0;
  std::string target;
  std::string verdict;  // AUTHENTIC | VIOLATION | SGTW_SUSPECT
  std::map<std::string, std::string> verifiers;
};

struct SessionSummary {
  std::string node;
  Level level = 0;
  prov::SessionState state = prov::SessionState::IDLE;
  Time completed_at_us = 0;
  int attempts = 0;
};

/// Single verify-task CPU bookkeeping per node: one periodic window, busy
/// time accumulated as frames are checked, overruns counted as deadline
/// misses, leftover time feeds the background speculation task.
struct CpuAccount {
  Time period_us = 25'000;
  Time window_start = 0;
  double busy_us = 0.0;
  double carry_us = 0.0;
  std::uint64_t misses = 0;
  std::uint64_t windows = 0;
  double realtime_total_us = 0.0;
  double background_total_us = 0.0;

  template <typename FillFn>
  void roll_to(Time now, FillFn&& fill_idle) {
    while (window_start + period_us <= now) {
      const double total = carry_us + busy_us;
      const double cap = static_cast<double>(period_us);
      if (total > cap) {
        ++misses;
        carry_us = total - cap;
      } else {
        carry_us = 0.0;
        const double idle = cap - total;
        background_total_us += fill_idle(idle);
      }
      busy_us = 0.0;
      window_start += period_us;
      ++windows;
    }
  }

  void charge(double cost_us) {
    busy_us += cost_us;
    realtime_total_us += cost_us;
  }

  double realtime_pct(Time horizon_us) const {
    return horizon_us == 0 ? 0.0
                           : 100.0 * realtime_total_us / static_cast<double>(horizon_us);
  }
};

class Network;

namespace detail {

struct FrameRuntime {
  scn::FrameSpec spec;
  NodeId sender = -1;
  std::vector<NodeId> receivers;      // verifying receivers on the frame's segment
  std::vector<NodeId> routed_targets; // receivers living behind a sub-domain gateway
  std::string routed_segment;         // segment those targets live on
};

struct PendingChallenge {
  crypto::Nonce nonce;
  NodeId target = -1;
  Time deadline_us = 0;
  bool responded = false;
  bool pass = false;
};

struct NodeState {
  NodeId id = -1;
  std::string name;
  scn::Role role = scn::Role::SECURE_NODE;
  Level level = 5;
  bool sub_domain_member = false;
  keys::KeyStore store;
  RandomSource rng{0};

  // provisioning, node side
  std::optional<crypto::KeyMaterial> sess_priv, sess_pub;
  std::optional<crypto::KeyMaterial> sess_transport;
  std::optional<Bytes> sess_ecdh;
  std::optional<crypto::Nonce> sess_nonce_gw;
  bool provisioned = false;

  // receive pipeline
  sched::SpeculationCache cache;
  std::map<std::uint32_t, std::uint16_t> last_counter;
  std::map<std::uint32_t, Bytes> last_data;
  std::map<std::uint32_t, int> consec_fail;
  CpuAccount cpu;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t spec_hits = 0;
  std::uint64_t spec_misses = 0;
  double verify_cost_us = 0.0;
  bool resync_requested = false;
  std::set<std::uint32_t> resync_spent_ids;  // one staleness probe per id

  // transmit
  std::map<std::uint32_t, std::uint16_t> tx_counters;
  std::map<std::uint32_t, std::uint32_t> tx_variant;

  // digest-length transition fallback: previous length and switch instant,
  // honoured only for one grace window after the switch
  std::map<Level, std::pair<int, Time>> prev_digest_bits;

  // hardware-signature verifier state
  std::map<Level, PendingChallenge> observed_challenge;
  std::map<Level, std::uint64_t> challenge_gen;
  std::map<Level, std::map<NodeId, std::uint64_t>> challenge_counts;
  std::map<Level, std::uint64_t> shares_seen;
  std::map<Level, std::deque<NodeId>> recent_targets;  // selection monitor window
  std::map<Level, Time> reaction_watch;
  bool sgtw_suspect = false;
  bool mute_challenge = false;  // fault-injection hook

  std::uint64_t decrypt_failures = 0;
};

struct GatewayState {
  std::vector<prov::DiscoveryRecord> discovery;
  bool discovery_closed = false;
  Time discovery_quiet_us = 3'000;
  std::uint64_t discovery_generation = 0;
  std::size_t session_cursor = 0;
  std::optional<prov::ProvisioningSession> session;
  std::uint64_t session_generation = 0;
  std::map<NodeId, crypto::KeyMaterial> shared_keys;
  bool provisioning_done = false;
  Time provisioning_done_at = 0;
  std::vector<SessionSummary> sessions;
  int max_attempts = 3;
  Time step_timeout_us = 10'000;

  // hardware-signature rounds, serialized per level
  struct Round {
    std::vector<NodeId> order;
    std::size_t cursor = 0;
    std::optional<PendingChallenge> active;
    Bytes expected;
    std::uint64_t generation = 0;
  };
  std::map<Level, Round> rounds;
  std::map<Level, std::uint64_t> rounds_completed;

  // Post-violation trust state. A downgraded node keeps only levels below
  // the compromised one; non-authentic hardware drops out entirely
  // (effective level beyond the configured range).
  std::map<NodeId, Level> effective_level;

  bool suppress_reaction = false;
  NodeId starve_target = -1;
};

}  // namespace detail

/// The simulated vehicle network: buses, one secure gateway, secure nodes,
/// optional sub-domain gateways and legacy nodes, all driven by one
/// deterministic event loop.
class Network {
 public:
  explicit Network(scn::ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    build();
  }

  // buses and agent closures hold references into this object
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void run() {
    schedule_bootstrap();
    sim_.run_until(cfg_.horizon_us);
    finalize();
  }

  // -- introspection ---------------------------------------------------------

  sim::Simulation& simulation() { return sim_; }
  const scn::ScenarioConfig& config() const { return cfg_; }

  bus::VirtualBus& bus(const std::string& name) {
    auto it = buses_.find(name);
    if (it == buses_.end()) raise(Err::SCHEMA_ERROR, "unknown bus " + name);
    return *it->second;
  }

  NodeId node_id(const std::string& name) const {
    for (const auto& n : nodes_)
      if (n.name == name) return n.id;
    raise(Err::SCHEMA_ERROR, "unknown node " + name);
  }

  const detail::NodeState& node(NodeId id) const { return nodes_.at(id); }
  detail::NodeState& node_mut(NodeId id) { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  NodeId gateway_id() const { return gateway_id_; }
  const detail::GatewayState& gateway() const { return gw_; }

  Time provisioning_latency_us() const {
    return gw_.provisioning_done ? gw_.provisioning_done_at : 0;
  }
  bool provisioning_done() const { return gw_.provisioning_done; }

  const std::vector<SessionSummary>& sessions() const { return gw_.sessions; }
  const std::vector<VerdictRecord>& verdicts() const { return verdicts_; }
  const std::vector<ViolationRecord>& violations() const { return violations_; }
  const std::vector<TranscriptRecord>& transcript() const { return transcript_; }
  const std::vector<ChallengeRecord>& challenges() const { return challenges_; }
  const std::vector<keys::KeyAuditEvent>& key_audit() const { return key_audit_; }

  std::uint64_t roll_broadcasts(Level level) const {
    auto it = roll_frames_.find(level);
    return it == roll_frames_.end() ? 0 : it->second;
  }

  const std::map<std::pair<std::string, std::uint64_t>, FrameLabel>& labels() const {
    return labels_;
  }

  void set_label(const std::string& segment, std::uint64_t tx_seq, FrameLabel l) {
    labels_[{segment, tx_seq}] = l;
  }

  FrameLabel label_of(const std::string& segment, std::uint64_t tx_seq) const {
    auto it = labels_.find({segment, tx_seq});
    return it == labels_.end() ? FrameLabel::BENIGN : it->second;
  }

  // -- attack-harness surface -------------------------------------------------
  // Adversaries act only through these: bus taps, raw submissions, and agent
  // substitution. No key material flows out.

  static constexpr NodeId kAttackerId = 0x7f;

  void install_tap(const std::string& segment, bus::TapPoint tap) {
    bus(segment).install_tap(std::move(tap));
  }

  bool attacker_submit(const std::string& segment, std::uint32_t raw_id,
                       Bytes bytes, FrameLabel label) {
    auto& b = bus(segment);
    return b.submit(kAttackerId,
                    wire::FrameId(raw_id, b.config().kind), std::move(bytes),
                    static_cast<std::uint32_t>(label));
  }

  /// Hardware-replacement swap: the platform keeps its provisioned flash
  /// image (PL keys), only the carmaker secret differs.
  void substitute_hardware(NodeId victim, Bytes foreign_secret) {
    nodes_.at(victim).store.set_carmaker_secret(
        crypto::KeyMaterial(std::move(foreign_secret), crypto::KeyKind::CARMAKER_KEY));
  }

  void tamper_gateway(bool suppress_reaction, NodeId starve_target) {
    gw_.suppress_reaction = suppress_reaction;
    gw_.starve_target = starve_target;
  }

  // -- protocol operations exposed for tests ---------------------------------

  void trigger_roll(Level level) { do_roll(level); }

  void trigger_violation(NodeId node, Level level) { on_violation(node, level); }

  void enter_short_mode() { broadcast_short_mode(true); }
  void exit_short_mode() { broadcast_short_mode(false); }

  wire::PublicFrame send_signed(NodeId node, std::uint32_t frame_raw_id) {
    auto it = frames_.find(frame_raw_id);
    if (it == frames_.end()) raise(Err::SCHEMA_ERROR, "unknown frame id");
    return emit_frame(it->second, nodes_.at(node), next_payload(it->second, nodes_.at(node)));
  }

 private:
  // -------------------------------------------------------------------------
  // construction
  // -------------------------------------------------------------------------

  void build() {
    RandomSource master(cfg_.seed);
    for (const auto& b : cfg_.buses) {
      bus::BusConfig bc;
      bc.kind = b.secure ? wire::BusKind::SECURE : wire::BusKind::PUBLIC;
      bc.arbitration_baud = b.arbitration_baud;
      bc.data_baud = b.data_baud;
      bc.queue_depth = b.queue_depth;
      bc.header_bits = b.header_bits;
      buses_.emplace(b.name,
                     std::make_unique<bus::VirtualBus>(sim_, b.name, bc));
    }

    gw_.max_attempts = cfg_.keys.provisioning_attempts;
    nodes_.resize(cfg_.nodes.size());
    for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
      const auto& ns = cfg_.nodes[i];
      auto& st = nodes_[i];
      st.id = static_cast<NodeId>(i);
      st.name = ns.name;
      st.role = ns.role;
      st.level = ns.level;
      st.rng = master.fork();
      st.store = keys::KeyStore(ns.level, cfg_.keys.capacity_bytes);
      st.cpu.period_us = cfg_.tasks.verify_period_us;
      st.store.set_carmaker_secret(carmaker_secret_for(ns.carmaker));
      if (ns.role == scn::Role::SGTW) gateway_id_ = st.id;
      for (const auto& sub : cfg_.subdomains)
        if (sub.member_levels.count(ns.level) && ns.role == scn::Role::SECURE_NODE &&
            on_bus(ns, sub.segment))
          st.sub_domain_member = true;
    }
    traffic_rng_ = master.fork();

    for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
      const auto& ns = cfg_.nodes[i];
      for (const auto& bname : ns.buses) {
        const NodeId id = static_cast<NodeId>(i);
        const std::string seg = bname;
        buses_.at(bname)->subscribe(id, [this, id, seg](const bus::BusEvent& ev) {
          on_rx(id, seg, ev);
        });
      }
    }

    for (const auto& fs : cfg_.frames) {
      detail::FrameRuntime fr;
      fr.spec = fs;
      fr.sender = node_id(fs.sender);
      std::vector<NodeId> wanted;
      if (fs.receivers.empty()) {
        for (const auto& n : nodes_)
          if (n.id != fr.sender && n.id != gateway_id_ &&
              (n.role == scn::Role::SECURE_NODE ||
               n.role == scn::Role::SUBDOMAIN_GATEWAY))
            wanted.push_back(n.id);
      } else {
        for (const auto& rname : fs.receivers) wanted.push_back(node_id(rname));
      }
      for (NodeId r : wanted) {
        if (on_bus(cfg_.nodes[r], fs.segment)) {
          fr.receivers.push_back(r);
        } else {
          fr.routed_targets.push_back(r);
          for (const auto& bname : cfg_.nodes[r].buses)
            if (buses_.at(bname)->config().kind == wire::BusKind::PUBLIC)
              fr.routed_segment = bname;
        }
      }
      frames_.emplace(fs.id, std::move(fr));
    }
  }

  bool on_bus(const scn::NodeSpec& n, const std::string& segment) const {
    return std::find(n.buses.begin(), n.buses.end(), segment) != n.buses.end();
  }

  crypto::KeyMaterial carmaker_secret_for(const std::string& carmaker) {
    auto it = carmaker_secrets_.find(carmaker);
    if (it == carmaker_secrets_.end()) {
      // stable per-carmaker secret derived from the name (plant programming)
      it = carmaker_secrets_
               .emplace(carmaker, crypto::kdf({to_bytes(carmaker)}, "CARMAKER", 32,
                                              crypto::KeyKind::CARMAKER_KEY))
               .first;
    }
    return it->second;
  }

  // -------------------------------------------------------------------------
  // bootstrap scheduling
  // -------------------------------------------------------------------------

  void schedule_bootstrap() {
    sim_.schedule(0, [this] { start_discovery(); });
    for (const auto& n : nodes_)
      if (n.role == scn::Role::SECURE_NODE ||
          n.role == scn::Role::SUBDOMAIN_GATEWAY)
        schedule_join_check(n.id, 500'000);
    for (const auto& re : cfg_.roll_events)
      sim_.schedule(re.at_us, [this, re] {
        if (gw_.provisioning_done) do_roll(re.level);
      });
    for (const auto& v : cfg_.violations) {
      const NodeId nid = node_id(v.node);
      sim_.schedule(v.at_us, [this, nid, lvl = v.level] {
        if (gw_.provisioning_done) on_violation(nid, lvl);
      });
    }
    if (cfg_.short_mode_at_us > 0)
      sim_.schedule(cfg_.short_mode_at_us, [this] {
        if (gw_.provisioning_done) broadcast_short_mode(true);
      });
  }

  void finalize() {
    for (auto& n : nodes_) {
      if (n.role == scn::Role::SECURE_NODE || n.role == scn::Role::SUBDOMAIN_GATEWAY)
        n.cpu.roll_to(cfg_.horizon_us, [&](double idle) {
          return fill_speculation(n, idle);
        });
    }
  }

  // -------------------------------------------------------------------------
  // secure-frame plumbing
  // -------------------------------------------------------------------------

  wire::FrameId secure_frame_id(NodeId node) const {
    // the gateway gets the most privileged arbitration slot
    const std::uint32_t raw =
        node == gateway_id_ ? 0x100 : 0x110 + static_cast<std::uint32_t>(node);
    return wire::FrameId(raw, wire::BusKind::SECURE);
  }

  void send_secure(NodeId from, wire::SecureMsgType type, const Bytes& body,
                   const crypto::KeyMaterial& key) {
    detail::NodeState& n = nodes_.at(from);
    wire::SecureFrame f;
    f.id = secure_frame_id(from);
    f.sender = static_cast<std::uint8_t>(from);
    f.msg_type = type;
    const Bytes ivb = n.rng.bytes(16);
    std::copy(ivb.begin(), ivb.end(), f.iv.begin());
    f.body = body;
    Bytes bytes = wire::encode_secure(f, key);
    const std::size_t ct_len = bytes.size() - wire::WireLayout::kSecureBodyOffset -
                               wire::WireLayout::kSecureTagLen;
    transcript_.push_back(TranscriptRecord{
        ++transcript_step_,
        from == gateway_id_ ? "gw->node" : "node->gw", type, n.name, ct_len});
    buses_.at("secure")->submit(from, f.id, std::move(bytes));
  }

  std::optional<wire::SecureFrame> try_decode(
      const Bytes& bytes, const std::vector<const crypto::KeyMaterial*>& candidates,
      detail::NodeState& rx) {
    for (const auto* k : candidates) {
      if (k == nullptr) continue;
      try {
        return wire::decode_secure(bytes, *k);
      } catch (const SimError&) {
        continue;
      }
    }
    ++rx.decrypt_failures;
    return std::nullopt;
  }

  /// Decode against every privilege-level key the receiver holds and report
  /// which level's key matched (the frame's protection level).
  std::optional<std::pair<wire::SecureFrame, Level>> try_decode_leveled(
      const Bytes& bytes, detail::NodeState& rx) {
    for (Level lvl : rx.store.held_levels()) {
      try {
        return std::make_pair(wire::decode_secure(bytes, rx.store.entry(lvl)->key),
                              lvl);
      } catch (const SimError&) {
      }
      if (const keys::PLKeyEntry* g = rx.store.grace_entry(lvl)) {
        try {
          return std::make_pair(wire::decode_secure(bytes, g->key), lvl);
        } catch (const SimError&) {
        }
      }
    }
    ++rx.decrypt_failures;
    return std::nullopt;
  }

  // -------------------------------------------------------------------------
  // discovery + provisioning (gateway side)
  // -------------------------------------------------------------------------

  void start_discovery() {
    prov::DiscoveryBody req;
    req.kind = prov::DiscoveryBody::Kind::REQUEST;
    send_secure(gateway_id_, wire::SecureMsgType::DISCOVERY,
                prov::encode_discovery(req), prov::bootstrap_key());
    arm_discovery_close();
  }

  void arm_discovery_close() {
    const std::uint64_t gen = ++gw_.discovery_generation;
    sim_.schedule_in(5'000, [this, gen] {
      if (gen == gw_.discovery_generation && !gw_.discovery_closed)
        close_discovery();
    });
  }

  void on_discovery_response(NodeId sender, const prov::DiscoveryBody& body) {
    if (body.kind == prov::DiscoveryBody::Kind::RESYNC) {
      handle_resync_request(sender);
      return;
    }
    if (gw_.discovery_closed) {
      // hot join: a node that slept through discovery announces itself
      // later and gets its own provisioning session
      if (gw_.provisioning_done && !gw_.shared_keys.count(sender) &&
          !gw_.session) {
        gw_.discovery.push_back(
            prov::DiscoveryRecord{sender, body.level, body.sub_domain_member});
        gw_.session_cursor = gw_.discovery.size() - 1;
        start_next_session();
      }
      return;
    }
    for (const auto& r : gw_.discovery)
      if (r.node == sender)
        raise(Err::DUPLICATE_NODE, "duplicate discovery response from " +
                                       nodes_.at(sender).name);
    gw_.discovery.push_back(
        prov::DiscoveryRecord{sender, body.level, body.sub_domain_member});
    // quiet-period close: rearm after every response
    const std::uint64_t gen = ++gw_.discovery_generation;
    sim_.schedule_in(gw_.discovery_quiet_us, [this, gen] {
      if (gen == gw_.discovery_generation && !gw_.discovery_closed)
        close_discovery();
    });
  }

  void close_discovery() {
    gw_.discovery_closed = true;
    if (gw_.discovery.empty())
      raise(Err::EMPTY_NETWORK, "no secure nodes answered discovery");
    std::sort(gw_.discovery.begin(), gw_.discovery.end(),
              [](const auto& a, const auto& b) { return a.node < b.node; });

    auto& gwn = nodes_.at(gateway_id_);
    auto generated = keys::generate_pl_keys(gwn.rng, cfg_.keys.levels,
                                            key_len_for_levels(), 0,
                                            cfg_.keys.capacity_bytes);
    for (auto& [lvl, e] : generated) {
      e.key = crypto::KeyMaterial(gwn.rng.bytes(level_key_len(lvl)),
                                  crypto::KeyKind::PL_KEY);
      e.rolling_period_us = level_rolling_period(lvl);
      gwn.store.install(lvl, e);
      if (cfg_.keys.provision_short) {
        keys::PLKeyEntry s;
        s.key = crypto::KeyMaterial(gwn.rng.bytes(cfg_.keys.short_key_len),
                                    crypto::KeyKind::PL_KEY);
        s.epoch = 0;
        gwn.store.install_short(lvl, s);
      }
      audit(lvl, e.epoch, "GEN", {});
    }
    start_next_session();
  }

  std::size_t key_len_for_levels() const { return cfg_.keys.key_len; }

  std::size_t level_key_len(Level lvl) const {
    for (const auto& s : cfg_.subdomains)
      if (s.member_levels.count(lvl)) return s.key_len;
    return cfg_.keys.key_len;
  }

  Time level_rolling_period(Level lvl) const {
    if (cfg_.keys.rolling_period_us == 0) return 0;
    for (const auto& s : cfg_.subdomains)
      if (s.member_levels.count(lvl))
        return cfg_.keys.rolling_period_us / cfg_.keys.subdomain_rolling_divisor;
    return cfg_.keys.rolling_period_us;
  }

  void start_next_session() {
    if (gw_.session_cursor >= gw_.discovery.size()) {
      finish_provisioning();
      return;
    }
    const auto& rec = gw_.discovery[gw_.session_cursor];
    gw_.session = prov::ProvisioningSession{};
    gw_.session->node = rec.node;
    gw_.session->node_level = rec.declared_level;
    gw_.session->state = prov::SessionState::DISCOVERED;
    gw_.session->attempt = 0;
    begin_attempt();
  }

  void begin_attempt() {
    auto& s = *gw_.session;
    ++s.attempt;
    auto& gwn = nodes_.at(gateway_id_);
    auto [priv, pub] = crypto::ecdh_keypair(gwn.rng);  // fresh pair per node & attempt
    s.gw_private = priv;
    s.gw_public = pub;
    s.node_public.reset();
    s.nonce_gw.reset();
    s.nonce_node.reset();
    s.transport_key.reset();
    s.established_shared_key.reset();
    s.keys_sent = 0;
    s.keys_acked = 0;
    prov::PubKeyBody body{s.node, pub.bytes};
    send_secure(gateway_id_, wire::SecureMsgType::PUBKEY_G,
                prov::encode_pubkey(body), prov::bootstrap_key());
    s.state = prov::SessionState::KEYPAIR_SENT;
    arm_session_deadline();
  }

  void arm_session_deadline() {
    const std::uint64_t gen = ++gw_.session_generation;
    sim_.schedule_in(gw_.step_timeout_us, [this, gen] {
      if (gen == gw_.session_generation && gw_.session &&
          gw_.session->state != prov::SessionState::KEYS_DELIVERED)
        session_timeout();
    });
  }

  void session_timeout() {
    auto& s = *gw_.session;
    if (s.attempt >= gw_.max_attempts) {
      s.state = prov::SessionState::FAILED;
      gw_.sessions.push_back(SessionSummary{nodes_.at(s.node).name, s.node_level,
                                            s.state, sim_.now(), s.attempt});
      ++gw_.session_cursor;
      start_next_session();
      return;
    }
    // exponential backoff: 10, 20, 40 ms
    const Time backoff = 10'000ull << (s.attempt - 1);
    reset_node_session(s.node);
    sim_.schedule_in(backoff, [this, gen = gw_.session_generation] {
      if (gw_.session && gw_.session->state != prov::SessionState::KEYS_DELIVERED &&
          gw_.session->state != prov::SessionState::FAILED)
        begin_attempt();
    });
    ++gw_.session_generation;  // cancel the stale deadline
  }

  void reset_node_session(NodeId node) {
    auto& n = nodes_.at(node);
    n.sess_priv.reset();
    n.sess_pub.reset();
    n.sess_transport.reset();
    n.sess_ecdh.reset();
    n.sess_nonce_gw.reset();
  }

  void on_pubkey_n(NodeId sender, const prov::PubKeyBody& body) {
    if (!gw_.session || gw_.session->node != sender) return;
    auto& s = *gw_.session;
    if (s.state != prov::SessionState::KEYPAIR_SENT) return;
    crypto::KeyMaterial peer(body.key, crypto::KeyKind::ECC_PUBLIC);
    Bytes shared;
    try {
      shared = crypto::ecdh_shared(*s.gw_private, peer);
    } catch (const SimError&) {
      session_timeout();  // low-order key: treat as failed step, retry
      return;
    }
    s.node_public = peer;
    s.ecdh_basis = shared;
    s.transport_key = prov::derive_transport_key(shared);
    s.state = prov::SessionState::PEER_KEY_RECEIVED;
    auto& gwn = nodes_.at(gateway_id_);
    s.nonce_gw = crypto::Nonce::generate(gwn.rng);
    send_secure(gateway_id_, wire::SecureMsgType::SECRET_G,
                prov::encode_secret(*s.nonce_gw), *s.transport_key);
    arm_session_deadline();
  }

  void on_secret_n(NodeId sender, const crypto::Nonce& nonce) {
    if (!gw_.session || gw_.session->node != sender) return;
    auto& s = *gw_.session;
    if (s.state != prov::SessionState::PEER_KEY_RECEIVED) return;
    s.nonce_node = nonce;
    s.state = prov::SessionState::SECRETS_EXCHANGED;
    s.established_shared_key =
        prov::derive_shared_key(*s.ecdh_basis, *s.nonce_gw, *s.nonce_node);
    gw_.shared_keys[s.node] = *s.established_shared_key;
    s.state = prov::SessionState::KSH_ESTABLISHED;
    deliver_keys(s);
    arm_session_deadline();
  }

  void deliver_keys(prov::ProvisioningSession& s) {
    auto& gwn = nodes_.at(gateway_id_);
    if (s.node_level < gwn.store.own_level())
      raise(Err::PRIVILEGE_VIOLATION, "delivery below gateway privilege");
    for (Level lvl = s.node_level; lvl <= cfg_.keys.levels; ++lvl) {
      const keys::PLKeyEntry* e = gwn.store.entry(lvl);
      if (!e) continue;
      prov::KeyDeliveryBody body;
      body.kind = prov::KeyDeliveryBody::Kind::ENTRY;
      body.level = lvl;
      body.epoch = e->epoch;
      body.is_short = false;
      body.key = e->key.bytes;
      send_secure(gateway_id_, wire::SecureMsgType::KEY_DELIVERY,
                  prov::encode_key_delivery(body), *s.established_shared_key);
      ++s.keys_sent;
      if (cfg_.keys.provision_short) {
        const keys::PLKeyEntry* sh = gwn.store.short_entry(lvl);
        if (sh) {
          prov::KeyDeliveryBody sb;
          sb.kind = prov::KeyDeliveryBody::Kind::ENTRY;
          sb.level = lvl;
          sb.epoch = sh->epoch;
          sb.is_short = true;
          sb.key = sh->key.bytes;
          send_secure(gateway_id_, wire::SecureMsgType::KEY_DELIVERY,
                      prov::encode_key_delivery(sb), *s.established_shared_key);
          ++s.keys_sent;
        }
      }
    }
  }

  void on_delivery_ack(NodeId sender) {
    if (!gw_.session || gw_.session->node != sender) return;
    auto& s = *gw_.session;
    if (s.state != prov::SessionState::KSH_ESTABLISHED) return;
    ++s.keys_acked;
    if (s.keys_acked < s.keys_sent) return;
    s.state = prov::SessionState::KEYS_DELIVERED;
    ++gw_.session_generation;  // cancel deadline
    gw_.sessions.push_back(SessionSummary{nodes_.at(s.node).name, s.node_level,
                                          s.state, sim_.now(), s.attempt});
    ++gw_.session_cursor;
    start_next_session();
  }

  void finish_provisioning() {
    gw_.session.reset();
    if (gw_.provisioning_done) return;  // hot-join sessions end up here too
    gw_.provisioning_done = true;
    gw_.provisioning_done_at = sim_.now();
    start_rolling_timers();
    start_traffic();
    if (cfg_.challenge.enabled) start_challenge_rounds();
  }

  /// Periodic self-announcement of still-unprovisioned nodes: covers late
  /// power-up (missed discovery) and failed sessions alike.
  void schedule_join_check(NodeId node, Time at) {
    sim_.schedule(at, [this, node, at] {
      if (at >= cfg_.horizon_us) return;
      auto& n = nodes_.at(node);
      if (!n.provisioned) {
        prov::DiscoveryBody resp;
        resp.kind = prov::DiscoveryBody::Kind::RESPONSE;
        resp.level = n.level;
        resp.sub_domain_member = n.sub_domain_member;
        send_secure(n.id, wire::SecureMsgType::DISCOVERY,
                    prov::encode_discovery(resp), prov::bootstrap_key());
      }
      schedule_join_check(node, at + 500'000);
    });
  }

  void handle_resync_request(NodeId node) {
    if (!gw_.provisioning_done) return;
    auto it = gw_.shared_keys.find(node);
    if (it == gw_.shared_keys.end()) return;  // unknown node: needs full session
    const Level lvl0 = effective_level_of(node);
    if (lvl0 > cfg_.keys.levels) return;  // removed from the trust set
    auto& gwn = nodes_.at(gateway_id_);
    for (Level lvl = lvl0; lvl <= cfg_.keys.levels; ++lvl) {
      const keys::PLKeyEntry* e = gwn.store.entry(lvl);
      if (!e) continue;
      prov::KeyDeliveryBody body;
      body.kind = prov::KeyDeliveryBody::Kind::ENTRY;
      body.level = lvl;
      body.epoch = e->epoch;
      body.key = e->key.bytes;
      send_secure(gateway_id_, wire::SecureMsgType::KEY_DELIVERY,
                  prov::encode_key_delivery(body), it->second);
    }
    audit(0, 0, "RESYNC", {nodes_.at(node).name});
  }

  // -------------------------------------------------------------------------
  // rolling / deprecation / short mode
  // -------------------------------------------------------------------------

  void start_rolling_timers() {
    if (cfg_.keys.rolling_period_us == 0) return;
    for (Level lvl = 1; lvl <= cfg_.keys.levels; ++lvl) {
      const Time period = level_rolling_period(lvl);
      if (period == 0) continue;
      schedule_roll(lvl, period);
    }
  }

  void schedule_roll(Level lvl, Time period) {
    sim_.schedule_in(period, [this, lvl, period] {
      if (sim_.now() >= cfg_.horizon_us) return;
      do_roll(lvl);
      schedule_roll(lvl, period);
    });
  }

  void do_roll(Level level) {
    auto& gwn = nodes_.at(gateway_id_);
    const keys::PLKeyEntry* old_entry = gwn.store.entry(level);
    if (!old_entry) raise(Err::NO_SUCH_LEVEL, "roll of unknown level");
    if (old_entry->status == keys::KeyStatus::DEPRECATED) {
      // deprecated keys must not carry a roll; the per-node path already ran
      return;
    }
    const crypto::KeyMaterial old_key = old_entry->key;
    keys::PLKeyEntry next;
    next.key = crypto::KeyMaterial(gwn.rng.bytes(old_entry->key_len()),
                                   crypto::KeyKind::PL_KEY);
    next.epoch = old_entry->epoch + 1;
    next.status = keys::KeyStatus::ACTIVE;
    next.rolling_period_us = old_entry->rolling_period_us;

    prov::KeyRollBody body{level, next.epoch, next.key.bytes};
    send_secure(gateway_id_, wire::SecureMsgType::KEY_ROLL,
                prov::encode_key_roll(body), old_key);
    ++roll_frames_[level];
    gwn.store.install(level, next);
    arm_grace_drop(gwn, level);
    invalidate_cache_for_level(gwn, level);
    audit(level, next.epoch, "ROLL", {"broadcast"});
  }

  void arm_grace_drop(detail::NodeState& n, Level level) {
    sim_.schedule_in(cfg_.keys.grace_us, [this, id = n.id, level] {
      nodes_.at(id).store.drop_grace(level);
    });
  }

  Level effective_level_of(NodeId node) const {
    auto it = gw_.effective_level.find(node);
    return it == gw_.effective_level.end() ? nodes_.at(node).level : it->second;
  }

  /// Gateway reaction to violation evidence. A key-compromise downgrade
  /// pushes the node one level past the compromised one; a hardware
  /// violation removes it from the trust set entirely.
  void on_violation(NodeId compromised, Level level, bool hardware = false) {
    auto& gwn = nodes_.at(gateway_id_);
    if (compromised == gateway_id_) {
      violations_.push_back(
          {sim_.now(), gwn.name, 0, "UNRECOVERABLE: evidence against gateway"});
      return;
    }
    const Level downgraded =
        hardware ? cfg_.keys.levels + 1
                 : std::max(effective_level_of(compromised), level + 1);
    gw_.effective_level[compromised] = downgraded;
    std::vector<std::pair<NodeId, Level>> members;
    for (const auto& n : nodes_)
      if (n.id != gateway_id_ && n.id != compromised &&
          effective_level_of(n.id) <= cfg_.keys.levels &&
          (n.role == scn::Role::SECURE_NODE ||
           n.role == scn::Role::SUBDOMAIN_GATEWAY))
        members.push_back({n.id, effective_level_of(n.id)});
    const keys::PLKeyEntry* old_entry = gwn.store.entry(level);
    const crypto::KeyMaterial old_key = old_entry ? old_entry->key
                                                  : crypto::KeyMaterial();
    const std::uint32_t old_epoch = old_entry ? old_entry->epoch : 0;
    keys::KeyRolloverPlan plan =
        keys::deprecate(gwn.store, level, compromised, members, gwn.rng);
    invalidate_cache_for_level(gwn, level);

    // broadcast the deprecation notice under the outgoing key so every
    // holder (including the compromised node) stops trusting it
    prov::DeprecateBody dep{level, old_epoch};
    send_secure(gateway_id_, wire::SecureMsgType::DEPRECATE,
                prov::encode_deprecate(dep), old_key);

    std::vector<std::string> recipient_names;
    for (NodeId r : plan.recipients) {
      auto it = gw_.shared_keys.find(r);
      if (it == gw_.shared_keys.end()) continue;
      prov::KeyDeliveryBody body;
      body.kind = prov::KeyDeliveryBody::Kind::ENTRY;
      body.level = level;
      body.epoch = plan.new_entry.epoch;
      body.key = plan.new_entry.key.bytes;
      send_secure(gateway_id_, wire::SecureMsgType::KEY_DELIVERY,
                  prov::encode_key_delivery(body), it->second);
      recipient_names.push_back(nodes_.at(r).name);
    }
    audit(level, plan.new_entry.epoch, "DEPRECATE", recipient_names);
    violations_.push_back({sim_.now(), nodes_.at(compromised).name, 0,
                           "deprecated level " + std::to_string(level)});

    // let the re-key settle before challenging anyone at this level again
    if (cfg_.challenge.enabled) {
      auto rit = gw_.rounds.find(level);
      if (rit != gw_.rounds.end()) {
        rit->second.active.reset();
        rit->second.order.clear();
        ++rit->second.generation;
      }
      schedule_round(level, sim_.now() + cfg_.challenge.period_us);
    }
  }

  void broadcast_short_mode(bool enable) {
    auto& gwn = nodes_.at(gateway_id_);
    for (Level lvl = 1; lvl <= cfg_.keys.levels; ++lvl) {
      const keys::PLKeyEntry* e = gwn.store.entry(lvl);
      if (!e || !gwn.store.short_entry(lvl)) continue;
      prov::ShortKeyBody body{lvl, enable};
      send_secure(gateway_id_, wire::SecureMsgType::SHORT_KEY,
                  prov::encode_short_key(body), e->key);
      audit(lvl, e->epoch, "SHORT", {enable ? "enter" : "exit"});
    }
    apply_short_mode(gwn, enable);
  }

  void apply_short_mode(detail::NodeState& n, bool enable) {
    std::set<Level> levels;
    for (Level lvl : n.store.held_levels())
      if (n.store.short_entry(lvl)) levels.insert(lvl);
    if (levels.empty()) return;
    for (Level lvl : levels)
      n.prev_digest_bits[lvl] = {digest_bits_now(n, lvl), sim_.now()};
    if (enable)
      n.store.enter_short_key_mode(levels);
    else
      n.store.exit_short_key_mode();
    for (auto& [id, fr] : frames_)
      if (levels.count(fr.spec.level)) n.cache.invalidate(id);
  }

  // -------------------------------------------------------------------------
  // traffic generators
  // -------------------------------------------------------------------------

  void start_traffic() {
    for (auto& [id, fr] : frames_) {
      if (fr.spec.period_us == 0) continue;
      schedule_frame_tx(id, gw_.provisioning_done_at + fr.spec.period_us);
    }
  }

  void schedule_frame_tx(std::uint32_t id, Time at) {
    sim_.schedule(at, [this, id, at] {
      if (at >= cfg_.horizon_us) return;
      auto& fr = frames_.at(id);
      auto& sender = nodes_.at(fr.sender);
      if (sender.role == scn::Role::NON_SECURE) {
        emit_legacy_frame(fr, sender);
      } else if (sender.store.has_level(frame_level(fr, sender))) {
        emit_frame(fr, sender, next_payload(fr, sender));
      }
      schedule_frame_tx(id, at + fr.spec.period_us);
    });
  }

  Level frame_level(const detail::FrameRuntime& fr, const detail::NodeState&) const {
    return fr.spec.level;
  }

  Bytes next_payload(detail::FrameRuntime& fr, detail::NodeState& sender) {
    Bytes data = fr.spec.data;
    if (!fr.spec.steady && data.size() >= 4) {
      // non-steady signal: low bytes wiggle deterministically per emission
      const std::uint32_t v = sender.tx_variant[fr.spec.id]++;
      data[0] = static_cast<std::uint8_t>(v);
      data[1] = static_cast<std::uint8_t>(v >> 8);
      data[2] = static_cast<std::uint8_t>(v >> 16);
      data[3] = static_cast<std::uint8_t>(0xa5 ^ v);
    }
    return data;
  }

  wire::PublicFrame emit_frame(detail::FrameRuntime& fr, detail::NodeState& sender,
                               Bytes data) {
    const Level lvl = frame_level(fr, sender);
    const keys::PLKeyEntry* entry = sender.store.has_level(lvl)
                                        ? &sender.store.select_key(lvl)
                                        : nullptr;
    if (entry == nullptr)
      raise(Err::NOT_PROVISIONED, sender.name + " lacks key for level " +
                                      std::to_string(lvl));
    wire::PublicFrame f;
    f.id = wire::FrameId(fr.spec.id, wire::BusKind::PUBLIC);
    f.counter = sender.tx_counters[fr.spec.id]++;
    f.data = std::move(data);
    const int digest_bits = digest_bits_on_segment(sender, fr.spec.segment, lvl);
    if (cfg_.keys.cmac_enabled) {
      const crypto::MacAlgo algo = algo_for(digest_bits);
      const crypto::KeyMaterial mac_key = mac_key_of(*entry, algo);
      f.digest = crypto::mac(algo, mac_key,
                             wire::public_mac_input(f.data, f.counter));
    } else {
      f.digest = Bytes(static_cast<std::size_t>(digest_bits) / 8, 0);
    }
    buses_.at(fr.spec.segment)
        ->submit(sender.id, f.id, wire::encode_public(f));
    return f;
  }

  void emit_legacy_frame(detail::FrameRuntime& fr, detail::NodeState& sender) {
    // legacy nodes transmit plaintext, no counter, no digest
    Bytes data = fr.spec.data;
    buses_.at(fr.spec.segment)
        ->submit(sender.id, wire::FrameId(fr.spec.id, wire::BusKind::PUBLIC),
                 std::move(data));
  }

  crypto::MacAlgo algo_for(int digest_bits) const {
    if (digest_bits > 128)
      return crypto::MacAlgo(crypto::MacVariant::HASH_MAC_256, digest_bits);
    return crypto::MacAlgo(cfg_.keys.algo, digest_bits);
  }

  static crypto::KeyMaterial mac_key_of(const keys::PLKeyEntry& entry,
                                        const crypto::MacAlgo& algo) {
    if (algo.variant == crypto::MacVariant::CMAC_AES256 && entry.key.size() != 32)
      return crypto::expand_to_aes_key(entry.key);
    return entry.key;
  }

  int digest_bits_now(const detail::NodeState& n, Level lvl) const {
    if (n.store.in_short_mode(lvl)) return cfg_.keys.short_digest_bits;
    return cfg_.keys.digest_bits;
  }

  // -------------------------------------------------------------------------
  // receive paths
  // -------------------------------------------------------------------------

  void on_rx(NodeId node, const std::string& segment, const bus::BusEvent& ev) {
    if (ev.tag != 0)  // attacker submissions carry their ground-truth label
      labels_[{segment, ev.tx_seq}] = static_cast<FrameLabel>(ev.tag);
    if (buses_.at(segment)->config().kind == wire::BusKind::SECURE)
      handle_secure_rx(node, ev);
    else
      handle_public_rx(node, segment, ev);
  }

  // --- secure bus -----------------------------------------------------------

  void handle_secure_rx(NodeId node, const bus::BusEvent& ev) {
    wire::SecureHeader hdr;
    try {
      hdr = wire::peek_secure(ev.bytes);
    } catch (const SimError&) {
      return;  // malformed: not routable
    }
    auto& n = nodes_.at(node);
    if (node == gateway_id_)
      gateway_secure_rx(n, hdr, ev);
    else
      node_secure_rx(n, hdr, ev);
  }

  void gateway_secure_rx(detail::NodeState& gwn, const wire::SecureHeader& hdr,
                         const bus::BusEvent& ev) {
    const NodeId sender = hdr.sender;
    switch (hdr.msg_type) {
      case wire::SecureMsgType::DISCOVERY: {
        auto f = try_decode(ev.bytes, {&prov::bootstrap_key()}, gwn);
        if (!f) return;
        on_discovery_response(sender, prov::decode_discovery(f->body));
        break;
      }
      case wire::SecureMsgType::PUBKEY_N: {
        auto f = try_decode(ev.bytes, {&prov::bootstrap_key()}, gwn);
        if (!f) return;
        on_pubkey_n(sender, prov::decode_pubkey(f->body));
        break;
      }
      case wire::SecureMsgType::SECRET_N: {
        if (!gw_.session || !gw_.session->transport_key) return;
        auto f = try_decode(ev.bytes, {&*gw_.session->transport_key}, gwn);
        if (!f) return;
        on_secret_n(sender, prov::decode_secret(f->body));
        break;
      }
      case wire::SecureMsgType::KEY_DELIVERY: {
        auto it = gw_.shared_keys.find(sender);
        if (it == gw_.shared_keys.end()) return;
        auto f = try_decode(ev.bytes, {&it->second}, gwn);
        if (!f) return;
        if (prov::decode_key_delivery(f->body).kind ==
            prov::KeyDeliveryBody::Kind::ACK)
          on_delivery_ack(sender);
        break;
      }
      case wire::SecureMsgType::CHALLENGE_RESP: {
        gateway_challenge_resp(gwn, sender, ev);
        break;
      }
      default:
        break;
    }
  }

  void node_secure_rx(detail::NodeState& n, const wire::SecureHeader& hdr,
                      const bus::BusEvent& ev) {
    switch (hdr.msg_type) {
      case wire::SecureMsgType::DISCOVERY: {
        if (n.role == scn::Role::NON_SECURE) return;
        auto f = try_decode(ev.bytes, {&prov::bootstrap_key()}, n);
        if (!f) return;
        const auto body = prov::decode_discovery(f->body);
        if (body.kind != prov::DiscoveryBody::Kind::REQUEST) return;
        prov::DiscoveryBody resp;
        resp.kind = prov::DiscoveryBody::Kind::RESPONSE;
        resp.level = n.level;
        resp.sub_domain_member = n.sub_domain_member;
        send_secure(n.id, wire::SecureMsgType::DISCOVERY,
                    prov::encode_discovery(resp), prov::bootstrap_key());
        break;
      }
      case wire::SecureMsgType::PUBKEY_G: {
        auto f = try_decode(ev.bytes, {&prov::bootstrap_key()}, n);
        if (!f) return;
        const auto body = prov::decode_pubkey(f->body);
        if (body.target != n.id) return;
        auto [priv, pub] = crypto::ecdh_keypair(n.rng);
        n.sess_priv = priv;
        n.sess_pub = pub;
        crypto::KeyMaterial gw_pub(body.key, crypto::KeyKind::ECC_PUBLIC);
        try {
          n.sess_ecdh = crypto::ecdh_shared(priv, gw_pub);
        } catch (const SimError&) {
          return;  // low-order gateway key: ignore, gateway will retry
        }
        n.sess_transport = prov::derive_transport_key(*n.sess_ecdh);
        prov::PubKeyBody reply{gateway_id_, pub.bytes};
        send_secure(n.id, wire::SecureMsgType::PUBKEY_N,
                    prov::encode_pubkey(reply), prov::bootstrap_key());
        break;
      }
      case wire::SecureMsgType::SECRET_G: {
        if (!n.sess_transport) return;
        auto f = try_decode(ev.bytes, {&*n.sess_transport}, n);
        if (!f) return;
        n.sess_nonce_gw = prov::decode_secret(f->body);
        const crypto::Nonce nonce_node = crypto::Nonce::generate(n.rng);
        send_secure(n.id, wire::SecureMsgType::SECRET_N,
                    prov::encode_secret(nonce_node), *n.sess_transport);
        n.store.set_shared_with_gateway(
            prov::derive_shared_key(*n.sess_ecdh, *n.sess_nonce_gw, nonce_node));
        break;
      }
      case wire::SecureMsgType::KEY_DELIVERY: {
        const auto& ksh = n.store.shared_with_gateway();
        if (!ksh) return;
        auto f = try_decode(ev.bytes, {&*ksh}, n);
        if (!f) return;
        const auto body = prov::decode_key_delivery(f->body);
        if (body.kind != prov::KeyDeliveryBody::Kind::ENTRY) return;
        keys::PLKeyEntry e;
        e.key = crypto::KeyMaterial(body.key, crypto::KeyKind::PL_KEY);
        e.epoch = body.epoch;
        e.rolling_period_us = level_rolling_period(body.level);
        if (body.is_short)
          n.store.install_short(body.level, e);
        else {
          n.store.install(body.level, e);
          n.store.drop_grace(body.level);  // delivery replaces, never graces
          invalidate_cache_for_level(n, body.level);
          clear_reaction_watch(n, body.level);
        }
        n.consec_fail.clear();
        n.resync_requested = false;
        n.provisioned = true;
        prov::KeyDeliveryBody ack;
        ack.kind = prov::KeyDeliveryBody::Kind::ACK;
        send_secure(n.id, wire::SecureMsgType::KEY_DELIVERY,
                    prov::encode_key_delivery(ack), *ksh);
        break;
      }
      case wire::SecureMsgType::KEY_ROLL: {
        node_key_roll(n, ev);
        break;
      }
      case wire::SecureMsgType::DEPRECATE: {
        std::vector<const crypto::KeyMaterial*> candidates;
        for (Level lvl : n.store.held_levels())
          candidates.push_back(&n.store.entry(lvl)->key);
        auto f = try_decode(ev.bytes, candidates, n);
        if (!f) return;
        const auto body = prov::decode_deprecate(f->body);
        if (auto* e = n.store.entry_mut(body.level);
            e != nullptr && e->epoch == body.epoch) {
          e->status = keys::KeyStatus::DEPRECATED;
          n.store.drop_grace(body.level);
          invalidate_cache_for_level(n, body.level);
        }
        clear_reaction_watch(n, body.level);
        break;
      }
      case wire::SecureMsgType::SHORT_KEY: {
        std::vector<const crypto::KeyMaterial*> candidates;
        for (Level lvl : n.store.held_levels())
          candidates.push_back(&n.store.entry(lvl)->key);
        auto f = try_decode(ev.bytes, candidates, n);
        if (!f) return;
        const auto body = prov::decode_short_key(f->body);
        if (!n.store.has_level(body.level)) return;
        apply_short_mode(n, body.enable);
        break;
      }
      case wire::SecureMsgType::CHALLENGE:
        node_challenge(n, ev);
        break;
      case wire::SecureMsgType::CHALLENGE_SHARE:
        node_challenge_share(n, ev);
        break;
      case wire::SecureMsgType::CHALLENGE_RESP:
        node_challenge_resp(n, ev);
        break;
      default:
        break;
    }
  }

  void node_key_roll(detail::NodeState& n, const bus::BusEvent& ev) {
    std::vector<const crypto::KeyMaterial*> candidates;
    for (Level lvl : n.store.held_levels())
      candidates.push_back(&n.store.entry(lvl)->key);
    auto f = try_decode(ev.bytes, candidates, n);
    if (!f) {
      // a roll is circulating for a key this node does not hold at the
      // current epoch: re-provision over the pairwise key
      if (n.provisioned) request_resync(n);
      return;
    }
    const auto body = prov::decode_key_roll(f->body);
    const keys::PLKeyEntry* cur = n.store.entry(body.level);
    if (!cur) return;
    if (body.epoch != cur->epoch + 1) {
      request_resync(n);  // epoch gap
      return;
    }
    keys::PLKeyEntry e;
    e.key = crypto::KeyMaterial(body.key, crypto::KeyKind::PL_KEY);
    e.epoch = body.epoch;
    e.rolling_period_us = cur->rolling_period_us;
    n.store.install(body.level, e);
    arm_grace_drop(n, body.level);
    invalidate_cache_for_level(n, body.level);
  }

  void request_resync(detail::NodeState& n) {
    if (n.resync_requested) return;
    n.resync_requested = true;
    prov::DiscoveryBody body;
    body.kind = prov::DiscoveryBody::Kind::RESYNC;
    body.level = n.level;
    send_secure(n.id, wire::SecureMsgType::DISCOVERY, prov::encode_discovery(body),
                prov::bootstrap_key());
  }

  void invalidate_cache_for_level(detail::NodeState& n, Level level) {
    for (const auto& [id, fr] : frames_)
      if (fr.spec.level == level) n.cache.invalidate(id);
  }

  void clear_reaction_watch(detail::NodeState& n, Level level) {
    n.reaction_watch.erase(level);
  }

  // --- public bus ------------------------------------------------------------

  void handle_public_rx(NodeId node, const std::string& segment,
                        const bus::BusEvent& ev) {
    auto& n = nodes_.at(node);
    auto it = frames_.find(ev.frame_raw_id);
    if (it == frames_.end()) return;  // unknown id: plaintext passthrough
    auto& fr = it->second;
    if (n.role == scn::Role::NON_SECURE) return;

    if (n.role == scn::Role::SUBDOMAIN_GATEWAY && !fr.routed_targets.empty() &&
        segment == fr.spec.segment) {
      route_subdomain(n, fr, segment, ev);
    }

    const bool primary_rx =
        segment == fr.spec.segment &&
        std::find(fr.receivers.begin(), fr.receivers.end(), node) !=
            fr.receivers.end();
    const bool routed_rx =
        segment == fr.routed_segment &&
        std::find(fr.routed_targets.begin(), fr.routed_targets.end(), node) !=
            fr.routed_targets.end();
    if (primary_rx || routed_rx) verify_in(n, fr, segment, ev);
  }

  void verify_in(detail::NodeState& n, detail::FrameRuntime& fr,
                 const std::string& segment, const bus::BusEvent& ev) {
    n.cpu.roll_to(sim_.now(),
                  [&](double idle) { return fill_speculation(n, idle); });

    const Level lvl = level_on_segment(fr, segment);
    VerdictRecord rec;
    rec.time_us = sim_.now();
    rec.node = n.id;
    rec.segment = segment;
    rec.frame_raw_id = ev.frame_raw_id;
    rec.tx_seq = ev.tx_seq;

    if (!cfg_.keys.cmac_enabled) {
      // authentication disabled: structural decode only, everything passes
      rec.accepted = true;
      rec.verdict = sched::Verdict::AUTHENTIC_RECOMPUTED;
      ++n.accepted;
      verdicts_.push_back(rec);
      return;
    }

    const keys::PLKeyEntry* entry =
        n.store.has_level(lvl) ? n.store.entry(lvl) : nullptr;
    if (n.store.in_short_mode(lvl) && n.store.short_entry(lvl))
      entry = n.store.short_entry(lvl);
    if (entry == nullptr) {
      rec.accepted = false;
      rec.reason = sched::RejectReason::NO_KEY;
      ++n.rejected;
      verdicts_.push_back(rec);
      return;
    }

    const int digest_bits = digest_bits_on_segment(n, segment, lvl);
    sched::VerifyOutcome out = attempt_verify(n, fr, ev, *entry, digest_bits, lvl);

    if (out.verdict == sched::Verdict::REJECTED &&
        out.reason == sched::RejectReason::BAD_MAC) {
      // in-flight frames across a roll verify under the grace copy
      if (const keys::PLKeyEntry* g = n.store.grace_entry(lvl)) {
        sched::VerifyOutcome again =
            attempt_verify(n, fr, ev, *g, digest_bits, lvl, /*use_cache=*/false);
        out.cost_us += again.cost_us;
        if (again.verdict != sched::Verdict::REJECTED) {
          out.verdict = again.verdict;
          out.reason = sched::RejectReason::NONE;
        }
      }
    }
    if (out.verdict == sched::Verdict::REJECTED &&
        out.reason == sched::RejectReason::BAD_MAC) {
      // digest-length transition fallback, valid for one grace window after
      // a mode switch; the fallback length selects its matching key entry
      auto pd = n.prev_digest_bits.find(lvl);
      if (pd != n.prev_digest_bits.end() && pd->second.first != digest_bits &&
          sim_.now() <= pd->second.second + cfg_.keys.grace_us) {
        const int fb_bits = pd->second.first;
        const keys::PLKeyEntry* fb_entry =
            (fb_bits == cfg_.keys.short_digest_bits && n.store.short_entry(lvl))
                ? n.store.short_entry(lvl)
                : n.store.entry(lvl);
        if (fb_entry != nullptr) {
          sched::VerifyOutcome again = attempt_verify(
              n, fr, ev, *fb_entry, fb_bits, lvl, /*use_cache=*/false);
          out.cost_us += again.cost_us;
          if (again.verdict != sched::Verdict::REJECTED) {
            out.verdict = again.verdict;
            out.reason = sched::RejectReason::NONE;
          }
        }
      }
    }

    n.cpu.charge(out.cost_us);
    n.verify_cost_us += out.cost_us;

    rec.verdict = out.verdict;
    rec.reason = out.reason;
    rec.accepted = out.verdict != sched::Verdict::REJECTED;
    verdicts_.push_back(rec);

    if (rec.accepted) {
      ++n.accepted;
      if (out.verdict == sched::Verdict::AUTHENTIC_SPECULATED) ++n.spec_hits;
      else if (cfg_.tasks.speculation && fr.spec.steady) ++n.spec_misses;
      n.consec_fail[ev.frame_raw_id] = 0;
      n.resync_spent_ids.erase(ev.frame_raw_id);
    } else {
      ++n.rejected;
      if (cfg_.tasks.speculation && out.speculation_attempted) ++n.spec_misses;
      violations_.push_back({sim_.now(), n.name, ev.frame_raw_id,
                             std::string(sched::reject_reason_name(out.reason))});
      // persistent failures on one id might mean a missed roll; probe once,
      // then treat further failures as hostile traffic
      if (out.reason == sched::RejectReason::BAD_MAC &&
          ++n.consec_fail[ev.frame_raw_id] >= 3 && n.provisioned &&
          n.resync_spent_ids.insert(ev.frame_raw_id).second)
        request_resync(n);
    }
  }

  sched::VerifyOutcome attempt_verify(detail::NodeState& n,
                                      detail::FrameRuntime& fr,
                                      const bus::BusEvent& ev,
                                      const keys::PLKeyEntry& entry,
                                      int digest_bits, Level lvl,
                                      bool use_cache = true) {
    (void)lvl;
    wire::PublicFrame f;
    try {
      f = wire::decode_public(ev.bytes, digest_bits,
                              wire::FrameId(ev.frame_raw_id, wire::BusKind::PUBLIC));
    } catch (const SimError&) {
      sched::VerifyOutcome bad;
      bad.reason = sched::RejectReason::BAD_MAC;
      return bad;
    }
    const crypto::MacAlgo algo = algo_for(digest_bits);
    const crypto::KeyMaterial mac_key = mac_key_of(entry, algo);
    const bool speculate =
        use_cache && cfg_.tasks.speculation && fr.spec.steady;
    std::uint16_t* counter_slot = nullptr;
    if (cfg_.keys.rolling_counter) {
      auto cit = n.last_counter.find(ev.frame_raw_id);
      if (cit == n.last_counter.end())
        cit = n.last_counter.emplace(ev.frame_raw_id, std::uint16_t{0xffff}).first;
      counter_slot = &cit->second;
    }
    sched::CostModel cm = cost_model();
    sched::VerifyOutcome out = sched::verify_frame(
        f, mac_key, entry.status, algo, speculate ? &n.cache : nullptr,
        counter_slot, cfg_.keys.counter_window, cm);
    if (out.verdict != sched::Verdict::REJECTED) {
      n.last_data[ev.frame_raw_id] = f.data;
      n.cache.prune(ev.frame_raw_id, f.counter, cfg_.keys.counter_window);
    }
    return out;
  }

  sched::CostModel cost_model() const {
    sched::CostModel cm;
    cm.mac_c0_us = cfg_.tasks.mac_c0_us;
    cm.mac_c1_us_per_bit = cfg_.tasks.mac_c1_us_per_bit;
    cm.mac_c2_us_per_block = cfg_.tasks.mac_c2_us_per_block;
    cm.compare_us = cfg_.tasks.compare_us;
    cm.mac_override_us = cfg_.tasks.mac_override_us;
    return cm;
  }

  double fill_speculation(detail::NodeState& n, double idle_budget_us) {
    if (!cfg_.tasks.speculation) return 0.0;
    double spent = 0.0;
    const sched::CostModel cm = cost_model();
    for (const auto& [id, fr] : frames_) {
      if (!fr.spec.steady) continue;
      const bool primary =
          std::find(fr.receivers.begin(), fr.receivers.end(), n.id) !=
          fr.receivers.end();
      const bool routed =
          std::find(fr.routed_targets.begin(), fr.routed_targets.end(), n.id) !=
          fr.routed_targets.end();
      if (!primary && !routed) continue;
      const std::string& seg = primary ? fr.spec.segment : fr.routed_segment;
      const Level lvl = level_on_segment(fr, seg);
      const keys::PLKeyEntry* entry =
          n.store.has_level(lvl) ? n.store.entry(lvl) : nullptr;
      if (!entry || entry->status != keys::KeyStatus::ACTIVE) continue;
      const Bytes* predicted = nullptr;
      auto ld = n.last_data.find(id);
      if (ld != n.last_data.end())
        predicted = &ld->second;
      else
        predicted = &fr.spec.data;
      const int digest_bits = digest_bits_on_segment(n, seg, lvl);
      const crypto::MacAlgo algo = algo_for(digest_bits);
      const crypto::KeyMaterial mac_key = mac_key_of(*entry, algo);
      std::uint16_t last = 0xffff;
      auto lc = n.last_counter.find(id);
      if (lc != n.last_counter.end()) last = lc->second;
      for (int k = 1; k <= cfg_.keys.counter_window; ++k) {
        const std::uint16_t c = static_cast<std::uint16_t>(last + k);
        if (n.cache.contains(id, c)) continue;
        const double op_cost =
            cm.mac_cost_us(id, algo.digest_len_bits, predicted->size() + 2);
        if (spent + op_cost > idle_budget_us) return spent;
        sched::SpeculationCache::Entry e;
        e.predicted_data = *predicted;
        e.digest = crypto::mac(algo, mac_key,
                               wire::public_mac_input(*predicted, c));
        n.cache.put(id, c, std::move(e));
        spent += op_cost;
      }
    }
    return spent;
  }

  // -------------------------------------------------------------------------
  // sub-domain routing
  // -------------------------------------------------------------------------

  const scn::SubdomainSpec* subdomain_of_gateway(const detail::NodeState& n) const {
    for (const auto& s : cfg_.subdomains)
      if (s.gateway == n.name) return &s;
    return nullptr;
  }

  const scn::SubdomainSpec* subdomain_of_segment(const std::string& segment) const {
    for (const auto& s : cfg_.subdomains)
      if (s.segment == segment) return &s;
    return nullptr;
  }

  /// Verify an inbound frame under the source-domain key, re-sign under the
  /// destination-domain key. Crossing into a sub-domain shortens the digest;
  /// crossing out restores the full one.
  void route_subdomain(detail::NodeState& gw, detail::FrameRuntime& fr,
                       const std::string& segment, const bus::BusEvent& ev) {
    if (subdomain_of_gateway(gw) == nullptr) return;
    const Level src_lvl = level_on_segment(fr, segment);
    const keys::PLKeyEntry* src_entry =
        gw.store.has_level(src_lvl) ? gw.store.entry(src_lvl) : nullptr;
    if (!src_entry) return;
    const int src_digest = digest_bits_on_segment(gw, segment, src_lvl);
    wire::PublicFrame in;
    try {
      in = wire::decode_public(ev.bytes, src_digest,
                               wire::FrameId(ev.frame_raw_id, wire::BusKind::PUBLIC));
    } catch (const SimError&) {
      violations_.push_back({sim_.now(), gw.name, ev.frame_raw_id, "ROUTE_MALFORMED"});
      return;
    }
    if (cfg_.keys.cmac_enabled) {
      const crypto::MacAlgo src_algo = algo_for(src_digest);
      const Bytes expect = crypto::mac(src_algo, mac_key_of(*src_entry, src_algo),
                                       wire::public_mac_input(in.data, in.counter));
      if (!bytes_equal(expect, in.digest)) {
        violations_.push_back({sim_.now(), gw.name, ev.frame_raw_id, "ROUTE_BAD_MAC"});
        return;
      }
    }
    const std::string dst_segment = fr.routed_segment;
    if (dst_segment.empty() || dst_segment == segment) return;
    const Level dst_lvl = level_on_segment(fr, dst_segment);
    const keys::PLKeyEntry* dst_entry =
        gw.store.has_level(dst_lvl) ? gw.store.entry(dst_lvl) : nullptr;
    if (!dst_entry) return;
    const int dst_digest = digest_bits_on_segment(gw, dst_segment, dst_lvl);
    wire::PublicFrame outf;
    outf.id = wire::FrameId(ev.frame_raw_id, wire::BusKind::PUBLIC);
    outf.counter = gw.tx_counters[ev.frame_raw_id]++;
    outf.data = in.data;
    const crypto::MacAlgo dst_algo = algo_for(dst_digest);
    outf.digest = crypto::mac(dst_algo, mac_key_of(*dst_entry, dst_algo),
                              wire::public_mac_input(outf.data, outf.counter));
    buses_.at(dst_segment)->submit(gw.id, outf.id, wire::encode_public(outf));
  }

  /// Frames crossing a sub-domain boundary are re-signed at the sub-domain's
  /// member level; elsewhere the frame keeps its configured level.
  Level level_on_segment(const detail::FrameRuntime& fr,
                         const std::string& segment) const {
    const scn::SubdomainSpec* s = subdomain_of_segment(segment);
    if (s != nullptr && !s->member_levels.empty() && fr.spec.segment != segment)
      return *s->member_levels.begin();
    return fr.spec.level;
  }

  int digest_bits_on_segment(const detail::NodeState& n, const std::string& segment,
                             Level lvl) const {
    const scn::SubdomainSpec* s = subdomain_of_segment(segment);
    if (s != nullptr) return s->digest_bits;
    return digest_bits_now(n, lvl);
  }

  // -------------------------------------------------------------------------
  // hardware-signature challenge rounds
  // -------------------------------------------------------------------------

  std::vector<NodeId> level_members(Level lvl) const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.id != gateway_id_ && effective_level_of(n.id) == lvl &&
          (n.role == scn::Role::SECURE_NODE ||
           n.role == scn::Role::SUBDOMAIN_GATEWAY))
        out.push_back(n.id);
    return out;
  }

  void start_challenge_rounds() {
    for (Level lvl = 1; lvl <= cfg_.keys.levels; ++lvl) {
      if (level_members(lvl).empty()) continue;
      schedule_round(lvl, gw_.provisioning_done_at + cfg_.challenge.period_us);
    }
  }

  void schedule_round(Level lvl, Time at) {
    sim_.schedule(at, [this, lvl] {
      if (sim_.now() >= cfg_.horizon_us) return;
      begin_round(lvl);
    });
  }

  void begin_round(Level lvl) {
    auto members = level_members(lvl);
    if (members.empty()) return;
    const keys::PLKeyEntry* e = nodes_.at(gateway_id_).store.entry(lvl);
    if (!e || e->status != keys::KeyStatus::ACTIVE) {
      // deprecated level key: defer the whole round to the next period
      schedule_round(lvl, sim_.now() + cfg_.challenge.period_us);
      return;
    }
    auto& round = gw_.rounds[lvl];
    round.order.clear();
    for (NodeId m : members)
      if (m != gw_.starve_target) round.order.push_back(m);
    // seeded shuffle: random order per round, full coverage per round
    auto& rng = nodes_.at(gateway_id_).rng;
    for (std::size_t i = round.order.size(); i > 1; --i)
      std::swap(round.order[i - 1], round.order[rng.below(i)]);
    round.cursor = 0;
    issue_next_challenge(lvl);
  }

  void issue_next_challenge(Level lvl) {
    auto& round = gw_.rounds[lvl];
    if (round.cursor >= round.order.size()) {
      ++gw_.rounds_completed[lvl];
      schedule_round(lvl, sim_.now() + cfg_.challenge.period_us);
      return;
    }
    auto& gwn = nodes_.at(gateway_id_);
    const keys::PLKeyEntry* e = gwn.store.entry(lvl);
    if (!e || e->status != keys::KeyStatus::ACTIVE) {
      schedule_round(lvl, sim_.now() + cfg_.challenge.period_us);
      return;
    }
    const NodeId target = round.order[round.cursor++];
    detail::PendingChallenge pc;
    pc.nonce = crypto::Nonce::generate(gwn.rng);
    pc.target = target;
    pc.deadline_us = sim_.now() + cfg_.challenge.response_deadline_us;
    round.active = pc;
    round.expected = crypto::aes_ecb_encrypt_block(
        *gwn.store.carmaker_secret(), pc.nonce.view());
    const std::uint64_t gen = ++round.generation;

    prov::ChallengeBody cb{target, pc.nonce};
    send_secure(gateway_id_, wire::SecureMsgType::CHALLENGE,
                prov::encode_challenge(cb), e->key);
    send_secure(gateway_id_, wire::SecureMsgType::CHALLENGE_SHARE,
                prov::encode_challenge(cb), e->key);
    sim_.schedule(pc.deadline_us, [this, lvl, gen] {
      auto& r = gw_.rounds[lvl];
      if (r.generation == gen && r.active) close_challenge(lvl);
    });
  }

  void gateway_challenge_resp(detail::NodeState& gwn, NodeId sender,
                              const bus::BusEvent& ev) {
    for (auto& [lvl, round] : gw_.rounds) {
      if (!round.active || round.active->target != sender) continue;
      const keys::PLKeyEntry* e = gwn.store.entry(lvl);
      if (!e) continue;
      auto f = try_decode(ev.bytes, {&e->key}, gwn);
      if (!f) continue;
      const auto body = prov::decode_challenge_resp(f->body);
      if (body.target != sender) continue;
      round.active->responded = true;
      round.active->pass = bytes_equal(body.response, round.expected);
      // close after every subscriber has seen this delivery, so the record
      // captures all verifier verdicts from the same instant
      const Level level = lvl;
      sim_.schedule(sim_.now(), [this, level] { close_challenge(level); });
      return;
    }
  }

  void close_challenge(Level lvl) {
    auto& round = gw_.rounds[lvl];
    if (!round.active) return;
    const detail::PendingChallenge pc = *round.active;
    round.active.reset();
    ++round.generation;

    ChallengeRecord rec;
    rec.time_us = sim_.now();
    rec.level = lvl;
    rec.target = nodes_.at(pc.target).name;
    rec.verifiers["SGTW"] =
        pc.responded ? (pc.pass ? "PASS" : "FAIL") : "TIMEOUT";
    for (NodeId m : level_members(lvl)) {
      if (m == pc.target) continue;
      const auto& st = nodes_.at(m).observed_challenge;
      auto it = st.find(lvl);
      // the nonce pins the entry to THIS challenge; a stale same-target
      // observation from an earlier round must not leak into the record
      if (it != st.end() && it->second.target == pc.target &&
          it->second.nonce == pc.nonce) {
        rec.verifiers[nodes_.at(m).name] =
            it->second.responded ? (it->second.pass ? "PASS" : "FAIL")
                                 : "TIMEOUT";
      }
    }
    // one dissenting verifier suffices for the verdict; the removal of the
    // challenged module additionally needs the gateway's own check to fail,
    // otherwise a single compromised verifier could frame honest modules
    bool violation = false;
    for (const auto& [name, v] : rec.verifiers)
      if (v != "PASS") violation = true;
    rec.verdict = violation ? "VIOLATION" : "AUTHENTIC";
    challenges_.push_back(rec);
    const bool gw_confirmed = rec.verifiers.at("SGTW") != "PASS";

    const std::uint64_t gen_before = round.generation;
    if (violation && gw_confirmed && !gw_.suppress_reaction)
      on_violation(pc.target, lvl, /*hardware=*/true);
    // a reaction clears the round and reschedules it after the re-key
    if (gw_.rounds[lvl].generation == gen_before) issue_next_challenge(lvl);
  }

  void node_challenge(detail::NodeState& n, const bus::BusEvent& ev) {
    auto f = try_decode_leveled(ev.bytes, n);
    if (!f) return;
    const auto body = prov::decode_challenge(f->first.body);
    if (body.target != n.id || n.mute_challenge) return;
    const auto& secret = n.store.carmaker_secret();
    if (!secret) return;  // replaced hardware without any secret stays silent
    const Bytes resp = crypto::aes_ecb_encrypt_block(*secret, body.nonce.view());
    const keys::PLKeyEntry* e = n.store.entry(f->second);
    if (!e) return;
    prov::ChallengeRespBody rb{n.id, resp};
    send_secure(n.id, wire::SecureMsgType::CHALLENGE_RESP,
                prov::encode_challenge_resp(rb), e->key);
  }

  void node_challenge_share(detail::NodeState& n, const bus::BusEvent& ev) {
    auto f = try_decode_leveled(ev.bytes, n);
    if (!f) return;
    const Level lvl = f->second;
    if (lvl != n.level) return;  // verification is local to the node's level
    const auto body = prov::decode_challenge(f->first.body);
    detail::PendingChallenge pc;
    pc.nonce = body.nonce;
    pc.target = body.target;
    pc.deadline_us = sim_.now() + cfg_.challenge.response_deadline_us;
    n.observed_challenge[lvl] = pc;

    // selection monitor: a member absent from a full sliding window of
    // selections has evidence of gateway tampering
    auto& counts = n.challenge_counts[lvl];
    ++counts[body.target];
    ++n.shares_seen[lvl];
    auto& window = n.recent_targets[lvl];
    window.push_back(body.target);
    const std::size_t window_len =
        static_cast<std::size_t>(cfg_.challenge.monitor_rounds) *
        (counts.size() + 1);
    while (window.size() > window_len) window.pop_front();
    if (window.size() == window_len &&
        std::find(window.begin(), window.end(), n.id) == window.end() &&
        !n.sgtw_suspect) {
      n.sgtw_suspect = true;
      violations_.push_back(
          {sim_.now(), n.name, 0, "SGTW_SUSPECT: never challenged"});
    }

    const std::uint64_t gen = ++n.challenge_gen[lvl];
    if (body.target != n.id) {
      sim_.schedule(pc.deadline_us, [this, id = n.id, lvl, gen,
                                     target = body.target] {
        auto& nn = nodes_.at(id);
        if (nn.challenge_gen[lvl] != gen) return;  // a newer share superseded it
        auto it = nn.observed_challenge.find(lvl);
        if (it != nn.observed_challenge.end() && it->second.target == target &&
            !it->second.responded)
          verifier_detected_fail(nn, lvl);
      });
    }
  }

  void node_challenge_resp(detail::NodeState& n, const bus::BusEvent& ev) {
    auto f = try_decode_leveled(ev.bytes, n);
    if (!f) return;
    if (f->second != n.level) return;
    const auto body = prov::decode_challenge_resp(f->first.body);
    auto it = n.observed_challenge.find(n.level);
    if (it == n.observed_challenge.end()) return;
    auto& pc = it->second;
    if (pc.target != body.target || pc.responded) return;
    const auto& secret = n.store.carmaker_secret();
    if (!secret) return;
    const Bytes expected = crypto::aes_ecb_encrypt_block(*secret, pc.nonce.view());
    pc.responded = true;
    pc.pass = bytes_equal(expected, body.response);
    if (!pc.pass) verifier_detected_fail(n, n.level);
  }

  void verifier_detected_fail(detail::NodeState& n, Level lvl) {
    // expect the gateway to react with a deprecation within the window
    if (n.reaction_watch.count(lvl)) return;
    const Time deadline = sim_.now() + cfg_.challenge.reaction_deadline_us;
    n.reaction_watch[lvl] = deadline;
    sim_.schedule(deadline, [this, id = n.id, lvl, deadline] {
      auto& nn = nodes_.at(id);
      auto it = nn.reaction_watch.find(lvl);
      if (it == nn.reaction_watch.end() || it->second != deadline) return;
      nn.reaction_watch.erase(it);
      if (!nn.sgtw_suspect) {
        nn.sgtw_suspect = true;
        violations_.push_back(
            {sim_.now(), nn.name, 0, "SGTW_SUSPECT: no recovery after FAIL"});
      }
    });
  }

  // -------------------------------------------------------------------------

  void audit(Level level, std::uint32_t epoch, const std::string& action,
             std::vector<std::string> recipients) {
    key_audit_.push_back(
        keys::KeyAuditEvent{sim_.now(), level, epoch, action, std::move(recipients)});
  }

  scn::ScenarioConfig cfg_;
  sim::Simulation sim_;
  std::map<std::string, std::unique_ptr<bus::VirtualBus>> buses_;
  std::vector<detail::NodeState> nodes_;
  std::map<std::uint32_t, detail::FrameRuntime> frames_;
  std::map<std::string, crypto::KeyMaterial> carmaker_secrets_;
  NodeId gateway_id_ = -1;
  detail::GatewayState gw_;
  RandomSource traffic_rng_{0};

  std::vector<VerdictRecord> verdicts_;
  std::vector<ViolationRecord> violations_;
  std::vector<TranscriptRecord> transcript_;
  std::vector<ChallengeRecord> challenges_;
  std::vector<keys::KeyAuditEvent> key_audit_;
  std::map<std::pair<std::string, std::uint64_t>, FrameLabel> labels_;
  std::map<Level, std::uint64_t> roll_frames_;
  int transcript_step_ = 0;
};

}  // namespace simcan::net
