#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "simcan/bytes.hpp"
#include "simcan/crypto.hpp"
#include "simcan/errors.hpp"

namespace simcan::scn {

enum class Role { SGTW, SECURE_NODE, SUBDOMAIN_GATEWAY, NON_SECURE };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::SGTW: return "sgtw";
    case Role::SECURE_NODE: return "secure";
    case Role::SUBDOMAIN_GATEWAY: return "subgw";
    case Role::NON_SECURE: return "legacy";
  }
  return "?";
}

struct BusSpec {
  std::string name;
  bool secure = false;
  std::uint64_t arbitration_baud = 500'000;
  std::uint64_t data_baud = 2'000'000;
  std::size_t queue_depth = 64;
  std::uint32_t header_bits = 70;
};

struct NodeSpec {
  std::string name;
  Role role = Role::SECURE_NODE;
  int level = 5;
  std::vector<std::string> buses;  // defaults applied by validate()
  std::string carmaker = "A";
};

struct SubdomainSpec {
  std::string name;
  std::string gateway;  // node name, role SUBDOMAIN_GATEWAY
  std::set<int> member_levels;
  std::size_t key_len = 8;
  int digest_bits = 64;
  std::string segment;  // bus name of the segregated segment
};

struct FrameSpec {
  std::uint32_t id = 0;
  std::string sender;
  int level = 5;
  std::uint64_t period_us = 0;  // 0 = no generator (test-driven)
  Bytes data;
  bool steady = false;
  std::string segment = "public";
  std::vector<std::string> receivers;  // empty = every secure node on segment
};

struct KeysSpec {
  int levels = 5;
  std::size_t key_len = 32;
  crypto::MacVariant algo = crypto::MacVariant::HASH_MAC_256;
  int digest_bits = 256;
  std::size_t short_key_len = 16;
  int short_digest_bits = 128;
  bool provision_short = false;
  std::uint64_t rolling_period_us = 0;  // 0 = no periodic rolling
  std::uint64_t grace_us = 8000;
  bool cmac_enabled = true;
  bool rolling_counter = true;
  int counter_window = 8;
  std::size_t capacity_bytes = 256;
  std::uint64_t subdomain_rolling_divisor = 4;
  int provisioning_attempts = 3;
};

struct TasksSpec {
  std::uint64_t verify_period_us = 25'000;
  double compare_us = 1.0;
  double mac_c0_us = 2.0;
  double mac_c1_us_per_bit = 0.0;
  double mac_c2_us_per_block = 0.0;
  bool speculation = false;
  std::map<std::uint32_t, double> mac_override_us;
};

struct ChallengeSpec {
  bool enabled = false;
  std::uint64_t period_us = 250'000;
  std::uint64_t response_deadline_us = 20'000;
  std::uint64_t reaction_deadline_us = 100'000;
  int monitor_rounds = 4;
};

struct AttackSpec {
  enum class Kind {
    MITM_OBD,
    MITM_DOWNSTREAM,
    REPLAY,
    DOS_FLOOD,
    HW_REPLACE,
    TAMPER_SGTW,
  };
  Kind kind = Kind::MITM_OBD;
  std::string name;
  std::string victim;  // downstream split / hw swap target
  std::set<std::uint32_t> pass_ids, suppress_ids, mutate_ids;
  std::uint64_t start_us = 0;
  std::uint64_t stop_us = 0;  // 0 = until horizon
  // injection
  std::optional<std::uint32_t> inject_id;
  std::uint64_t inject_period_us = 0;
  Bytes inject_data;
  // replay
  std::uint64_t record_start_us = 0, record_end_us = 0, replay_at_us = 0;
  // flood
  std::optional<std::uint32_t> flood_id;
  std::uint64_t flood_rate_fps = 0;
  std::size_t flood_payload_len = 62;
  std::optional<std::uint32_t> flood_target_id;  // configured-secure id to spoof
  // hardware replacement
  Bytes foreign_secret;
  std::uint64_t swap_at_us = 0;
  // gateway tamper
  bool suppress_reaction = false;
  std::string starve_target;
  std::string segment = "public";
};

struct RollEventSpec {
  int level = 0;
  std::uint64_t at_us = 0;
};

struct ViolationSpec {
  std::string node;
  int level = 0;
  std::uint64_t at_us = 0;
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::uint64_t horizon_us = 1'000'000;
  KeysSpec keys;
  TasksSpec tasks;
  ChallengeSpec challenge;
  std::vector<BusSpec> buses;
  std::vector<NodeSpec> nodes;
  std::vector<FrameSpec> frames;
  std::vector<SubdomainSpec> subdomains;
  std::vector<AttackSpec> attacks;
  std::vector<RollEventSpec> roll_events;
  std::vector<ViolationSpec> violations;
  std::uint64_t short_mode_at_us = 0;  // 0 = never; gateway enters short mode here
  std::string raw_text;
  std::string hash_hex;

  const NodeSpec* node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n.name == name) return &n;
    return nullptr;
  }

  const BusSpec* bus(const std::string& name) const {
    for (const auto& b : buses)
      if (b.name == name) return &b;
    return nullptr;
  }

  void validate();
  void compute_hash();
};

namespace detail {

[[noreturn]] inline void bad_line(int line, const std::string& msg) {
  raise(Err::SCHEMA_ERROR, "line " + std::to_string(line) + ": " + msg);
}

inline std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    std::uint64_t r = std::stoull(v, &pos, 0);
    if (pos != v.size()) bad_line(line, "trailing characters in number '" + v + "'");
    return r;
  } catch (const SimError&) {
    throw;
  } catch (...) {
    bad_line(line, "expected a number, got '" + v + "'");
  }
}

inline double parse_f64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) bad_line(line, "trailing characters in number '" + v + "'");
    return r;
  } catch (const SimError&) {
    throw;
  } catch (...) {
    bad_line(line, "expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, int line) {
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  bad_line(line, "expected on/off, got '" + v + "'");
}

inline Bytes parse_hex(const std::string& v, int line) {
  Bytes out;
  if (!hex_decode(v, out)) bad_line(line, "invalid hex string '" + v + "'");
  return out;
}

inline std::set<std::uint32_t> parse_id_set(const std::string& v, int line) {
  std::set<std::uint32_t> out;
  for (const auto& item : split_list(v))
    out.insert(static_cast<std::uint32_t>(parse_u64(item, line)));
  return out;
}

}  // namespace detail

/// Parse the sectioned scenario text. Unknown sections or keys are schema
/// errors; diagnostics carry the offending line number.
inline ScenarioConfig parse_scenario(const std::string& text) {
  using namespace detail;
  ScenarioConfig cfg;
  cfg.raw_text = text;

  enum class Sec {
    NONE, GENERAL, KEYS, TASKS, CHALLENGE, BUS, NODE, FRAME, SUBDOMAIN,
    OVERRIDE, ATTACK, ROLL_EVENT, VIOLATION,
  };
  Sec sec = Sec::NONE;
  std::string sec_arg;
  int sec_line = 0;
  BusSpec* cur_bus = nullptr;
  NodeSpec* cur_node = nullptr;
  FrameSpec* cur_frame = nullptr;
  SubdomainSpec* cur_sub = nullptr;
  AttackSpec* cur_attack = nullptr;
  RollEventSpec* cur_roll = nullptr;
  ViolationSpec* cur_violation = nullptr;
  std::uint32_t cur_override_id = 0;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') bad_line(line_no, "unterminated section header");
      std::string inner = trim(line.substr(1, line.size() - 2));
      std::string kind = inner, arg;
      const auto sp = inner.find(' ');
      if (sp != std::string::npos) {
        kind = inner.substr(0, sp);
        arg = trim(inner.substr(sp + 1));
      }
      sec_arg = arg;
      sec_line = line_no;
      cur_bus = nullptr; cur_node = nullptr; cur_frame = nullptr;
      cur_sub = nullptr; cur_attack = nullptr; cur_roll = nullptr;
      cur_violation = nullptr;
      if (kind == "general") sec = Sec::GENERAL;
      else if (kind == "keys") sec = Sec::KEYS;
      else if (kind == "tasks") sec = Sec::TASKS;
      else if (kind == "challenge") sec = Sec::CHALLENGE;
      else if (kind == "bus") {
        sec = Sec::BUS;
        if (arg.empty()) bad_line(line_no, "bus section needs a name");
        cfg.buses.push_back(BusSpec{});
        cur_bus = &cfg.buses.back();
        cur_bus->name = arg;
        cur_bus->secure = (arg == "secure");
      } else if (kind == "node") {
        sec = Sec::NODE;
        if (arg.empty()) bad_line(line_no, "node section needs a name");
        cfg.nodes.push_back(NodeSpec{});
        cur_node = &cfg.nodes.back();
        cur_node->name = arg;
      } else if (kind == "frame") {
        sec = Sec::FRAME;
        if (arg.empty()) bad_line(line_no, "frame section needs an id");
        cfg.frames.push_back(FrameSpec{});
        cur_frame = &cfg.frames.back();
        cur_frame->id = static_cast<std::uint32_t>(parse_u64(arg, line_no));
      } else if (kind == "subdomain") {
        sec = Sec::SUBDOMAIN;
        if (arg.empty()) bad_line(line_no, "subdomain section needs a name");
        cfg.subdomains.push_back(SubdomainSpec{});
        cur_sub = &cfg.subdomains.back();
        cur_sub->name = arg;
      } else if (kind == "override") {
        sec = Sec::OVERRIDE;
        if (arg.empty()) bad_line(line_no, "override section needs a frame id");
        cur_override_id = static_cast<std::uint32_t>(parse_u64(arg, line_no));
      } else if (kind == "attack") {
        sec = Sec::ATTACK;
        cfg.attacks.push_back(AttackSpec{});
        cur_attack = &cfg.attacks.back();
        cur_attack->name = arg.empty() ? "attack" : arg;
      } else if (kind == "roll_event") {
        sec = Sec::ROLL_EVENT;
        cfg.roll_events.push_back(RollEventSpec{});
        cur_roll = &cfg.roll_events.back();
      } else if (kind == "violation") {
        sec = Sec::VIOLATION;
        cfg.violations.push_back(ViolationSpec{});
        cur_violation = &cfg.violations.back();
      } else {
        bad_line(line_no, "unknown section '" + kind + "'");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) bad_line(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) bad_line(line_no, "empty key");

    switch (sec) {
      case Sec::NONE:
        bad_line(line_no, "key outside any section");
      case Sec::GENERAL:
        if (key == "seed") { cfg.seed = parse_u64(val, line_no); cfg.seed_set = true; }
        else if (key == "horizon_us") cfg.horizon_us = parse_u64(val, line_no);
        else if (key == "short_mode_at_us") cfg.short_mode_at_us = parse_u64(val, line_no);
        else bad_line(line_no, "unknown [general] key '" + key + "'");
        break;
      case Sec::KEYS: {
        auto& k = cfg.keys;
        if (key == "levels") k.levels = static_cast<int>(parse_u64(val, line_no));
        else if (key == "key_len") k.key_len = parse_u64(val, line_no);
        else if (key == "algo") {
          if (val == "cmac") k.algo = crypto::MacVariant::CMAC_AES256;
          else if (val == "hmac") k.algo = crypto::MacVariant::HASH_MAC_256;
          else bad_line(line_no, "algo must be cmac or hmac");
        }
        else if (key == "digest_bits") k.digest_bits = static_cast<int>(parse_u64(val, line_no));
        else if (key == "short_key_len") k.short_key_len = parse_u64(val, line_no);
        else if (key == "short_digest_bits") k.short_digest_bits = static_cast<int>(parse_u64(val, line_no));
        else if (key == "provision_short") k.provision_short = parse_bool(val, line_no);
        else if (key == "rolling_period_us") k.rolling_period_us = parse_u64(val, line_no);
        else if (key == "grace_us") k.grace_us = parse_u64(val, line_no);
        else if (key == "cmac") k.cmac_enabled = parse_bool(val, line_no);
        else if (key == "rolling_counter") k.rolling_counter = parse_bool(val, line_no);
        else if (key == "counter_window") k.counter_window = static_cast<int>(parse_u64(val, line_no));
        else if (key == "capacity_bytes") k.capacity_bytes = parse_u64(val, line_no);
        else if (key == "subdomain_rolling_divisor") k.subdomain_rolling_divisor = parse_u64(val, line_no);
        else if (key == "provisioning_attempts") k.provisioning_attempts = static_cast<int>(parse_u64(val, line_no));
        else bad_line(line_no, "unknown [keys] key '" + key + "'");
        break;
      }
      case Sec::TASKS: {
        auto& t = cfg.tasks;
        if (key == "verify_period_us") t.verify_period_us = parse_u64(val, line_no);
        else if (key == "compare_us") t.compare_us = parse_f64(val, line_no);
        else if (key == "mac_c0_us") t.mac_c0_us = parse_f64(val, line_no);
        else if (key == "mac_c1_us_per_bit") t.mac_c1_us_per_bit = parse_f64(val, line_no);
        else if (key == "mac_c2_us_per_block") t.mac_c2_us_per_block = parse_f64(val, line_no);
        else if (key == "speculation") t.speculation = parse_bool(val, line_no);
        else bad_line(line_no, "unknown [tasks] key '" + key + "'");
        break;
      }
      case Sec::CHALLENGE: {
        auto& c = cfg.challenge;
        if (key == "enabled") c.enabled = parse_bool(val, line_no);
        else if (key == "period_us") c.period_us = parse_u64(val, line_no);
        else if (key == "response_deadline_us") c.response_deadline_us = parse_u64(val, line_no);
        else if (key == "reaction_deadline_us") c.reaction_deadline_us = parse_u64(val, line_no);
        else if (key == "monitor_rounds") c.monitor_rounds = static_cast<int>(parse_u64(val, line_no));
        else bad_line(line_no, "unknown [challenge] key '" + key + "'");
        break;
      }
      case Sec::BUS: {
        auto& b = *cur_bus;
        if (key == "kind") b.secure = (val == "secure");
        else if (key == "arbitration_baud") b.arbitration_baud = parse_u64(val, line_no);
        else if (key == "data_baud") b.data_baud = parse_u64(val, line_no);
        else if (key == "queue_depth") b.queue_depth = parse_u64(val, line_no);
        else if (key == "header_bits") b.header_bits = static_cast<std::uint32_t>(parse_u64(val, line_no));
        else bad_line(line_no, "unknown [bus] key '" + key + "'");
        break;
      }
      case Sec::NODE: {
        auto& n = *cur_node;
        if (key == "role") {
          if (val == "sgtw") n.role = Role::SGTW;
          else if (val == "secure") n.role = Role::SECURE_NODE;
          else if (val == "subgw") n.role = Role::SUBDOMAIN_GATEWAY;
          else if (val == "legacy") n.role = Role::NON_SECURE;
          else bad_line(line_no, "unknown role '" + val + "'");
        }
        else if (key == "level") n.level = static_cast<int>(parse_u64(val, line_no));
        else if (key == "buses") n.buses = split_list(val);
        else if (key == "carmaker") n.carmaker = val;
        else bad_line(line_no, "unknown [node] key '" + key + "'");
        break;
      }
      case Sec::FRAME: {
        auto& f = *cur_frame;
        if (key == "sender") f.sender = val;
        else if (key == "level") f.level = static_cast<int>(parse_u64(val, line_no));
        else if (key == "period_us") f.period_us = parse_u64(val, line_no);
        else if (key == "data") f.data = parse_hex(val, line_no);
        else if (key == "steady") f.steady = parse_bool(val, line_no);
        else if (key == "segment") f.segment = val;
        else if (key == "receivers") f.receivers = split_list(val);
        else bad_line(line_no, "unknown [frame] key '" + key + "'");
        break;
      }
      case Sec::SUBDOMAIN: {
        auto& s = *cur_sub;
        if (key == "gateway") s.gateway = val;
        else if (key == "member_levels") {
          for (const auto& item : split_list(val))
            s.member_levels.insert(static_cast<int>(parse_u64(item, line_no)));
        }
        else if (key == "key_len") s.key_len = parse_u64(val, line_no);
        else if (key == "digest_bits") s.digest_bits = static_cast<int>(parse_u64(val, line_no));
        else if (key == "segment") s.segment = val;
        else bad_line(line_no, "unknown [subdomain] key '" + key + "'");
        break;
      }
      case Sec::OVERRIDE:
        if (key == "mac_us")
          cfg.tasks.mac_override_us[cur_override_id] = parse_f64(val, line_no);
        else bad_line(line_no, "unknown [override] key '" + key + "'");
        break;
      case Sec::ATTACK: {
        auto& a = *cur_attack;
        if (key == "kind") {
          if (val == "mitm_obd") a.kind = AttackSpec::Kind::MITM_OBD;
          else if (val == "mitm_downstream") a.kind = AttackSpec::Kind::MITM_DOWNSTREAM;
          else if (val == "replay") a.kind = AttackSpec::Kind::REPLAY;
          else if (val == "dos_flood") a.kind = AttackSpec::Kind::DOS_FLOOD;
          else if (val == "hw_replace") a.kind = AttackSpec::Kind::HW_REPLACE;
          else if (val == "tamper_sgtw") a.kind = AttackSpec::Kind::TAMPER_SGTW;
          else bad_line(line_no, "unknown attack kind '" + val + "'");
        }
        else if (key == "victim") a.victim = val;
        else if (key == "pass") a.pass_ids = parse_id_set(val, line_no);
        else if (key == "suppress") a.suppress_ids = parse_id_set(val, line_no);
        else if (key == "mutate" || key == "corrupt") {
          for (auto id : parse_id_set(val, line_no)) a.mutate_ids.insert(id);
        }
        else if (key == "start_us") a.start_us = parse_u64(val, line_no);
        else if (key == "stop_us") a.stop_us = parse_u64(val, line_no);
        else if (key == "inject_id") a.inject_id = static_cast<std::uint32_t>(parse_u64(val, line_no));
        else if (key == "inject_period_us") a.inject_period_us = parse_u64(val, line_no);
        else if (key == "inject_data") a.inject_data = parse_hex(val, line_no);
        else if (key == "record_start_us") a.record_start_us = parse_u64(val, line_no);
        else if (key == "record_end_us") a.record_end_us = parse_u64(val, line_no);
        else if (key == "replay_at_us") a.replay_at_us = parse_u64(val, line_no);
        else if (key == "flood_id") a.flood_id = static_cast<std::uint32_t>(parse_u64(val, line_no));
        else if (key == "flood_rate_fps") a.flood_rate_fps = parse_u64(val, line_no);
        else if (key == "flood_payload_len") a.flood_payload_len = parse_u64(val, line_no);
        else if (key == "flood_target_id") a.flood_target_id = static_cast<std::uint32_t>(parse_u64(val, line_no));
        else if (key == "foreign_secret") a.foreign_secret = parse_hex(val, line_no);
        else if (key == "swap_at_us") a.swap_at_us = parse_u64(val, line_no);
        else if (key == "tamper") {
          if (val == "suppress_reaction") a.suppress_reaction = true;
          else bad_line(line_no, "unknown tamper mode '" + val + "'");
        }
        else if (key == "starve_target") a.starve_target = val;
        else if (key == "segment") a.segment = val;
        else bad_line(line_no, "unknown [attack] key '" + key + "'");
        break;
      }
      case Sec::ROLL_EVENT: {
        auto& r = *cur_roll;
        if (key == "level") r.level = static_cast<int>(parse_u64(val, line_no));
        else if (key == "at_us") r.at_us = parse_u64(val, line_no);
        else bad_line(line_no, "unknown [roll_event] key '" + key + "'");
        break;
      }
      case Sec::VIOLATION: {
        auto& v = *cur_violation;
        if (key == "node") v.node = val;
        else if (key == "level") v.level = static_cast<int>(parse_u64(val, line_no));
        else if (key == "at_us") v.at_us = parse_u64(val, line_no);
        else bad_line(line_no, "unknown [violation] key '" + key + "'");
        break;
      }
    }
  }
  (void)sec_line;
  (void)sec_arg;

  cfg.validate();
  cfg.compute_hash();
  return cfg;
}

inline void ScenarioConfig::validate() {
  if (!seed_set) raise(Err::SCHEMA_ERROR, "seed is mandatory (determinism contract)");
  if (horizon_us == 0) raise(Err::SCHEMA_ERROR, "horizon_us must be positive");
  if (keys.levels < 1 || keys.levels > 64)
    raise(Err::SCHEMA_ERROR, "levels must be in [1, 64]");
  if (keys.algo == crypto::MacVariant::CMAC_AES256 && keys.digest_bits > 128)
    raise(Err::SCHEMA_ERROR, "cmac digest cannot exceed 128 bits; use hmac");

  if (!bus("public")) {
    BusSpec b;
    b.name = "public";
    buses.push_back(b);
  }
  if (!bus("secure")) {
    BusSpec b;
    b.name = "secure";
    b.secure = true;
    b.data_baud = 500'000;
    buses.push_back(b);
  }
  std::set<std::string> bus_names;
  for (const auto& b : buses) {
    if (!bus_names.insert(b.name).second)
      raise(Err::SCHEMA_ERROR, "duplicate bus '" + b.name + "'");
    if (b.data_baud < b.arbitration_baud || b.data_baud > 8'000'000)
      raise(Err::SCHEMA_ERROR, "bus '" + b.name + "' baud rates out of range");
  }

  int sgtw_count = 0;
  std::set<std::string> node_names;
  for (auto& n : nodes) {
    if (!node_names.insert(n.name).second)
      raise(Err::SCHEMA_ERROR, "duplicate node '" + n.name + "'");
    if (n.role == Role::SGTW) {
      ++sgtw_count;
      n.level = 1;
    }
    if (n.level < 1 || n.level > keys.levels)
      raise(Err::SCHEMA_ERROR, "node '" + n.name + "' level out of range");
    if (n.buses.empty()) {
      n.buses = n.role == Role::NON_SECURE
                    ? std::vector<std::string>{"public"}
                    : std::vector<std::string>{"public", "secure"};
    }
    for (const auto& b : n.buses)
      if (!bus(b))
        raise(Err::SCHEMA_ERROR, "node '" + n.name + "' references unknown bus '" + b + "'");
  }
  if (sgtw_count != 1)
    raise(Err::SCHEMA_ERROR, "exactly one sgtw node required");

  std::set<std::uint32_t> frame_ids;
  for (const auto& f : frames) {
    if (!frame_ids.insert(f.id).second)
      raise(Err::SCHEMA_ERROR, "duplicate frame id");
    const NodeSpec* s = node(f.sender);
    if (!s) raise(Err::SCHEMA_ERROR, "frame sender '" + f.sender + "' unknown");
    if (s->role != Role::NON_SECURE) {
      if (f.level < s->level || f.level > keys.levels)
        raise(Err::SCHEMA_ERROR, "frame level outside sender's reach");
    }
    if (!bus(f.segment))
      raise(Err::SCHEMA_ERROR, "frame segment '" + f.segment + "' unknown");
    for (const auto& r : f.receivers)
      if (!node(r))
        raise(Err::SCHEMA_ERROR, "frame receiver '" + r + "' unknown");
  }

  for (const auto& s : subdomains) {
    const NodeSpec* gw = node(s.gateway);
    if (!gw || gw->role != Role::SUBDOMAIN_GATEWAY)
      raise(Err::SCHEMA_ERROR, "subdomain gateway '" + s.gateway + "' missing or wrong role");
    if (!bus(s.segment))
      raise(Err::SCHEMA_ERROR, "subdomain segment '" + s.segment + "' unknown");
    if (s.key_len != 8 && s.key_len != 16 && s.key_len != 32)
      raise(Err::SCHEMA_ERROR, "subdomain key_len must be 8, 16 or 32");
  }

  for (const auto& a : attacks) {
    if (a.kind == AttackSpec::Kind::MITM_DOWNSTREAM && !node(a.victim))
      raise(Err::SCHEMA_ERROR, "attack victim '" + a.victim + "' unknown");
    if (a.kind == AttackSpec::Kind::HW_REPLACE) {
      if (!node(a.victim))
        raise(Err::SCHEMA_ERROR, "attack victim '" + a.victim + "' unknown");
      if (a.foreign_secret.size() != 32)
        raise(Err::SCHEMA_ERROR, "foreign_secret must be 32 bytes of hex");
    }
    if (!a.starve_target.empty() && !node(a.starve_target))
      raise(Err::SCHEMA_ERROR, "starve_target '" + a.starve_target + "' unknown");
  }

  for (const auto& v : violations)
    if (!node(v.node))
      raise(Err::SCHEMA_ERROR, "violation node '" + v.node + "' unknown");
}

inline void ScenarioConfig::compute_hash() {
  std::string basis = raw_text;
  if (basis.empty()) {
    // programmatic configs: hash a coarse structural summary
    std::ostringstream os;
    os << seed << '|' << horizon_us << '|' << nodes.size() << '|' << frames.size();
    basis = os.str();
  }
  hash_hex = hex_encode(crypto::sha256(to_bytes(basis)));
}

}  // namespace simcan::scn
