#pragma once

// Shared scenario builders for the runtime-level suites.

#include "simcan/scenario.hpp"

namespace simcan::testing {

inline scn::BusSpec slow_bus(const std::string& name, bool secure) {
  scn::BusSpec b;
  b.name = name;
  b.secure = secure;
  b.arbitration_baud = 500'000;
  b.data_baud = secure ? 500'000 : 2'000'000;
  return b;
}

inline scn::NodeSpec make_node(const std::string& name, scn::Role role, int level,
                               std::vector<std::string> buses = {}) {
  scn::NodeSpec n;
  n.name = name;
  n.role = role;
  n.level = level;
  n.buses = std::move(buses);
  return n;
}

inline scn::FrameSpec make_frame(std::uint32_t id, const std::string& sender,
                                 int level, std::uint64_t period_us,
                                 std::size_t data_len, bool steady) {
  scn::FrameSpec f;
  f.id = id;
  f.sender = sender;
  f.level = level;
  f.period_us = period_us;
  f.data = Bytes(data_len, static_cast<std::uint8_t>(id & 0xff));
  f.steady = steady;
  return f;
}

/// The reference desk rig: one gateway, two secure nodes, both buses at
/// 500 kbit/s, one steady and one changing frame.
inline scn::ScenarioConfig two_node_config(std::uint64_t seed,
                                           std::uint64_t horizon_us = 2'000'000) {
  scn::ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.seed_set = true;
  cfg.horizon_us = horizon_us;
  cfg.keys.levels = 5;
  cfg.keys.algo = crypto::MacVariant::HASH_MAC_256;
  cfg.keys.digest_bits = 256;
  cfg.keys.rolling_period_us = 0;
  cfg.buses.push_back(slow_bus("public", false));
  cfg.buses.push_back(slow_bus("secure", true));
  cfg.nodes.push_back(make_node("SGTW", scn::Role::SGTW, 1));
  cfg.nodes.push_back(make_node("ECM", scn::Role::SECURE_NODE, 3));
  cfg.nodes.push_back(make_node("TCU", scn::Role::SECURE_NODE, 5));
  // both frames ride at level 5, the common level of the two nodes
  cfg.frames.push_back(make_frame(0x101, "ECM", 5, 25'000, 28, true));
  cfg.frames.push_back(make_frame(0x102, "TCU", 5, 25'000, 28, false));
  cfg.validate();
  cfg.compute_hash();
  return cfg;
}

}  // namespace simcan::testing
