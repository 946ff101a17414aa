#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "simcan/attack.hpp"
#include "simcan/runtime.hpp"
#include "simcan/scenario.hpp"
#include "simcan/sched.hpp"

namespace simcan::metrics {

using ordjson = nlohmann::ordered_json;

constexpr int kReportSchemaVersion = 1;

struct RunResult {
  ordjson report;
  std::map<std::string, std::string> files;  // relative filename -> content
};

namespace detail {

inline std::string jsonl(const std::vector<ordjson>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline ordjson detection_json(const net::Network& nw) {
  ordjson out = ordjson::object();
  for (const auto& [kind, st] : attack::detection_metrics(nw)) {
    out[kind] = {{"tp", st.tp},
                 {"fp", st.fp},
                 {"fn", st.fn},
                 {"tn", st.tn},
                 {"precision", st.precision()},
                 {"recall", st.recall()}};
  }
  return out;
}

}  // namespace detail

/// Full scenario run: provisioning, traffic, attacks, and the structured
/// report plus every machine-readable log.
inline RunResult run_scenario(const scn::ScenarioConfig& cfg) {
  net::Network nw(cfg);
  attack::install(nw);
  nw.run();

  RunResult out;
  ordjson& rep = out.report;
  rep["schema_version"] = kReportSchemaVersion;
  rep["scenario_hash"] = cfg.hash_hex;
  rep["seed"] = cfg.seed;
  rep["horizon_us"] = cfg.horizon_us;

  ordjson sessions = ordjson::array();
  for (const auto& s : nw.sessions()) {
    sessions.push_back({{"node", s.node},
                        {"level", s.level},
                        {"state", std::string(prov::session_state_name(s.state))},
                        {"completed_at_us", s.completed_at_us},
                        {"attempts", s.attempts}});
  }
  rep["provisioning"] = {{"done", nw.provisioning_done()},
                         {"latency_us", nw.provisioning_latency_us()},
                         {"sessions", sessions}};

  ordjson rolling = ordjson::array();
  const auto& gw_store = nw.node(nw.gateway_id()).store;
  for (keys::Level lvl = 1; lvl <= cfg.keys.levels; ++lvl) {
    if (!gw_store.has_level(lvl)) continue;
    rolling.push_back({{"level", lvl},
                       {"epoch", gw_store.entry(lvl)->epoch},
                       {"broadcasts", nw.roll_broadcasts(lvl)}});
  }
  rep["rolling"] = rolling;

  ordjson buses = ordjson::array();
  for (const auto& b : cfg.buses) {
    auto& vb = nw.bus(b.name);
    buses.push_back({{"name", b.name},
                     {"kind", std::string(wire::bus_kind_name(vb.config().kind))},
                     {"frames", vb.frames_transmitted()},
                     {"overloads", vb.overloads()},
                     {"load", cfg.horizon_us ? vb.load(cfg.horizon_us) : 0.0}});
  }
  rep["buses"] = buses;

  ordjson nodes = ordjson::array();
  for (std::size_t i = 0; i < nw.node_count(); ++i) {
    const auto& n = nw.node(static_cast<int>(i));
    nodes.push_back({{"name", n.name},
                     {"role", std::string(scn::role_name(n.role))},
                     {"level", n.level},
                     {"accepted", n.accepted},
                     {"rejected", n.rejected},
                     {"speculation_hits", n.spec_hits},
                     {"speculation_misses", n.spec_misses},
                     {"verify_cost_us", n.verify_cost_us},
                     {"cpu",
                      {{"realtime_pct", n.cpu.realtime_pct(cfg.horizon_us)},
                       {"deadline_misses", n.cpu.misses},
                       {"windows", n.cpu.windows},
                       {"background_us", n.cpu.background_total_us}}},
                     {"sgtw_suspect", n.sgtw_suspect}});
  }
  rep["nodes"] = nodes;

  std::uint64_t authentic = 0, violation = 0;
  for (const auto& c : nw.challenges())
    (c.verdict == "AUTHENTIC" ? authentic : violation) += 1;
  rep["challenges"] = {{"total", nw.challenges().size()},
                       {"authentic", authentic},
                       {"violations", violation}};
  rep["violation_records"] = nw.violations().size();
  if (!cfg.attacks.empty()) rep["detection"] = detail::detection_json(nw);

  // --- log files ------------------------------------------------------------
  for (const auto& b : cfg.buses) {
    std::string dump;
    for (const auto& line : attack::labeled_dump(nw, b.name)) {
      dump += line;
      dump += '\n';
    }
    out.files["frames_" + b.name + ".log"] = std::move(dump);
  }
  {
    std::vector<ordjson> rows;
    for (const auto& a : nw.key_audit()) {
      rows.push_back({{"time_us", a.time_us},
                      {"level", a.level},
                      {"epoch", a.epoch},
                      {"action", a.action},
                      {"recipients", a.recipients}});
    }
    out.files["key_audit.jsonl"] = detail::jsonl(rows);
  }
  {
    std::vector<ordjson> rows;
    for (const auto& v : nw.violations())
      rows.push_back({{"time_us", v.time_us},
                      {"node", v.node},
                      {"frame_id", v.frame_raw_id},
                      {"reason", v.reason}});
    out.files["violations.jsonl"] = detail::jsonl(rows);
  }
  {
    std::vector<ordjson> rows;
    for (const auto& t : nw.transcript())
      rows.push_back({{"step", t.step},
                      {"direction", t.direction},
                      {"msg_type", std::string(wire::secure_msg_name(t.msg_type))},
                      {"sender", t.sender},
                      {"len", t.body_len}});
    out.files["transcript.jsonl"] = detail::jsonl(rows);
  }
  {
    std::vector<ordjson> rows;
    for (const auto& c : nw.challenges()) {
      ordjson verifiers = ordjson::object();
      for (const auto& [k, v] : c.verifiers) verifiers[k] = v;
      rows.push_back({{"time_us", c.time_us},
                      {"level", c.level},
                      {"target", c.target},
                      {"verdict", c.verdict},
                      {"verifiers", verifiers}});
    }
    out.files["challenges.jsonl"] = detail::jsonl(rows);
  }
  return out;
}

/// Single string capturing the whole run; byte-equality of two of these is
/// the determinism contract.
inline std::string serialize(const RunResult& r) {
  std::string out = r.report.dump(2);
  out += '\n';
  for (const auto& [name, content] : r.files) {
    out += "==== ";
    out += name;
    out += " ====\n";
    out += content;
  }
  return out;
}

// ---------------------------------------------------------------------------
// digest-length sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
  int digest_bits = 0;
  double mac_cost_us = 0.0;
  double max_frames_per_sec = 0.0;
  double cpu_pct_fixed_load = 0.0;
};

/// Cost-model series behind the throughput figures: the largest sustainable
/// frame rate per digest length, and the CPU share of a fixed frame load.
inline std::vector<SweepPoint> sweep_digest_lengths(const scn::ScenarioConfig& cfg,
                                                    std::vector<int> lengths) {
  std::sort(lengths.begin(), lengths.end());
  sched::CostModel cm;
  cm.mac_c0_us = cfg.tasks.mac_c0_us;
  cm.mac_c1_us_per_bit = cfg.tasks.mac_c1_us_per_bit;
  cm.mac_c2_us_per_block = cfg.tasks.mac_c2_us_per_block;
  cm.compare_us = cfg.tasks.compare_us;
  const std::size_t fixed_frames = cfg.frames.empty() ? 80 : cfg.frames.size();
  const double period = static_cast<double>(cfg.tasks.verify_period_us);
  // representative MAC input: a full data payload plus the counter
  const std::size_t mac_input_len = 32;

  std::vector<SweepPoint> out;
  for (int bits : lengths) {
    SweepPoint p;
    p.digest_bits = bits;
    p.mac_cost_us = cm.mac_cost_us(0, bits, mac_input_len);
    const double per_frame = p.mac_cost_us + cm.compare_us;
    p.max_frames_per_sec = 1'000'000.0 / per_frame;
    p.cpu_pct_fixed_load =
        100.0 * static_cast<double>(fixed_frames) * per_frame / period;
    out.push_back(p);
  }
  return out;
}

inline ordjson sweep_to_json(const std::vector<SweepPoint>& series) {
  ordjson arr = ordjson::array();
  for (const auto& p : series)
    arr.push_back({{"digest_bits", p.digest_bits},
                   {"mac_cost_us", p.mac_cost_us},
                   {"max_frames_per_sec", p.max_frames_per_sec},
                   {"cpu_pct_fixed_load", p.cpu_pct_fixed_load}});
  return {{"series", arr}};
}

inline std::string sweep_to_csv(const std::vector<SweepPoint>& series) {
  std::string csv = "digest_bits,mac_cost_us,max_frames_per_sec,cpu_pct_fixed_load\n";
  char buf[160];
  for (const auto& p : series) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", p.digest_bits,
                  p.mac_cost_us, p.max_frames_per_sec, p.cpu_pct_fixed_load);
    csv += buf;
  }
  return csv;
}

// ---------------------------------------------------------------------------
// speculative MAC experiment
// ---------------------------------------------------------------------------

struct SpeculationResult {
  double cpu_off_pct = 0.0;
  double cpu_allhit_pct = 0.0;
  double cpu_allmiss_pct = 0.0;
  std::uint64_t frames_total = 0;
  std::uint64_t steady_frames = 0;
  std::uint64_t hits_allhit = 0;
  double background_allhit_pct = 0.0;
};

namespace detail {

enum class SpecMode { OFF, ALL_HIT, ALL_MISS };

inline double run_speculation_once(const scn::ScenarioConfig& cfg, SpecMode mode,
                                   SpeculationResult* fill) {
  RandomSource rng(cfg.seed);
  // one signing key per privilege level in use
  std::map<keys::Level, keys::PLKeyEntry> level_keys;
  for (const auto& f : cfg.frames)
    if (!level_keys.count(f.level)) {
      keys::PLKeyEntry e;
      e.key = crypto::KeyMaterial(rng.bytes(cfg.keys.key_len),
                                  crypto::KeyKind::PL_KEY);
      level_keys.emplace(f.level, std::move(e));
    }

  sched::VerifyEnv env;
  env.cost.mac_c0_us = cfg.tasks.mac_c0_us;
  env.cost.mac_c1_us_per_bit = cfg.tasks.mac_c1_us_per_bit;
  env.cost.mac_c2_us_per_block = cfg.tasks.mac_c2_us_per_block;
  env.cost.compare_us = cfg.tasks.compare_us;
  env.cost.mac_override_us = cfg.tasks.mac_override_us;
  env.algo = crypto::MacAlgo(cfg.keys.digest_bits > 128
                                 ? crypto::MacVariant::HASH_MAC_256
                                 : cfg.keys.algo,
                             cfg.keys.digest_bits);
  env.counter_window = cfg.keys.counter_window;
  env.speculation = mode != SpecMode::OFF;
  env.sabotage_predictions = mode == SpecMode::ALL_MISS;
  std::map<std::uint32_t, keys::Level> frame_level;
  for (const auto& f : cfg.frames) frame_level[f.id] = f.level;
  env.key_for = [&](std::uint32_t id) -> const keys::PLKeyEntry* {
    auto it = frame_level.find(id);
    return it == frame_level.end() ? nullptr : &level_keys.at(it->second);
  };
  for (const auto& f : cfg.frames)
    if (f.steady) env.registered.push_back({f.id, f.data});

  // identical traffic in all modes: per release, every frame once, counters
  // advancing by one, steady payloads constant, the rest wiggling
  const crypto::MacAlgo algo = env.algo;
  auto make_frame = [&](const scn::FrameSpec& f,
                        std::uint64_t release) -> wire::PublicFrame {
    wire::PublicFrame p;
    p.id = wire::FrameId(f.id, wire::BusKind::PUBLIC);
    p.counter = static_cast<std::uint16_t>(release);
    p.data = f.data;
    if (!f.steady && p.data.size() >= 4) {
      p.data[0] = static_cast<std::uint8_t>(release);
      p.data[1] = static_cast<std::uint8_t>(release >> 8);
      p.data[2] = static_cast<std::uint8_t>(0x5a ^ release);
    }
    const crypto::KeyMaterial mac_key =
        algo.variant == crypto::MacVariant::CMAC_AES256
            ? crypto::expand_to_aes_key(level_keys.at(f.level).key)
            : level_keys.at(f.level).key;
    p.digest = crypto::mac(algo, mac_key,
                           wire::public_mac_input(p.data, p.counter));
    return p;
  };

  sched::TaskSpec verify;
  verify.name = "verify";
  verify.priority = 1;
  verify.period_us = cfg.tasks.verify_period_us;
  verify.work = [&](std::uint64_t release) {
    std::vector<sched::WorkItem> items;
    items.reserve(cfg.frames.size());
    for (const auto& f : cfg.frames)
      items.push_back(sched::VerifyWork{make_frame(f, release)});
    return items;
  };

  auto res = sched::run_schedule({verify}, cfg.horizon_us, &env);
  if (fill != nullptr && mode == SpecMode::ALL_HIT) {
    fill->hits_allhit = res.report.spec_hits;
    fill->background_allhit_pct = res.report.background_cpu_pct;
  }
  return res.report.realtime_cpu_pct;
}

}  // namespace detail

/// Three runs over identical traffic: speculation off, every prediction
/// correct, every prediction wrong.
inline SpeculationResult speculation_experiment(const scn::ScenarioConfig& cfg) {
  SpeculationResult r;
  r.frames_total = cfg.frames.size();
  for (const auto& f : cfg.frames)
    if (f.steady) ++r.steady_frames;
  r.cpu_off_pct = detail::run_speculation_once(cfg, detail::SpecMode::OFF, &r);
  r.cpu_allhit_pct =
      detail::run_speculation_once(cfg, detail::SpecMode::ALL_HIT, &r);
  r.cpu_allmiss_pct =
      detail::run_speculation_once(cfg, detail::SpecMode::ALL_MISS, &r);
  return r;
}

inline ordjson speculation_to_json(const SpeculationResult& r) {
  return {{"frames_total", r.frames_total},
          {"steady_frames", r.steady_frames},
          {"cpu_off_pct", r.cpu_off_pct},
          {"cpu_allhit_pct", r.cpu_allhit_pct},
          {"cpu_allmiss_pct", r.cpu_allmiss_pct},
          {"allmiss_overhead_pp", r.cpu_allmiss_pct - r.cpu_off_pct},
          {"speculation_hits_allhit", r.hits_allhit},
          {"background_allhit_pct", r.background_allhit_pct}};
}

// ---------------------------------------------------------------------------
// fleet storage arithmetic
// ---------------------------------------------------------------------------

inline ordjson fleet_math(std::uint64_t vehicles, std::uint64_t keys_per_vehicle,
                          std::uint64_t key_bytes, double multiplier) {
  const double total =
      static_cast<double>(vehicles) * keys_per_vehicle * key_bytes;
  const double gib = total / (1024.0 * 1024.0 * 1024.0);
  return {{"vehicles", vehicles},
          {"keys_per_vehicle", keys_per_vehicle},
          {"key_bytes", key_bytes},
          {"fleet_total_bytes", total},
          {"fleet_total_gib", gib},
          {"metadata_multiplier", multiplier},
          {"with_metadata_bytes", total * multiplier},
          {"with_metadata_gib", gib * multiplier},
          {"onboard_bytes", keys_per_vehicle * key_bytes}};
}

}  // namespace simcan::metrics
