#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "simcan/errors.hpp"
#include "simcan/runtime.hpp"

namespace simcan::conf {

using ordjson = nlohmann::ordered_json;

/// Structural protocol transcript: message order, cleartext header fields
/// and ciphertext lengths, plus the key epochs each node ends with.
/// Ciphertext bytes are excluded on purpose — the structure must survive a
/// crypto-library substitution.
struct GoldenStep {
  int step = 0;
  std::string msg_type;
  std::string sender;
  std::size_t body_len = 0;
};

struct GoldenTranscript {
  std::string name;
  std::string scenario_hash;
  std::vector<GoldenStep> steps;
  // node name -> level (as string) -> epoch
  std::map<std::string, std::map<std::string, std::uint32_t>> final_epochs;
};

inline GoldenTranscript capture(const net::Network& nw, const std::string& name) {
  GoldenTranscript g;
  g.name = name;
  g.scenario_hash = nw.config().hash_hex;
  for (const auto& t : nw.transcript())
    g.steps.push_back(GoldenStep{t.step, std::string(wire::secure_msg_name(t.msg_type)),
                                 t.sender, t.body_len});
  for (std::size_t i = 0; i < nw.node_count(); ++i) {
    const auto& n = nw.node(static_cast<int>(i));
    if (n.role == scn::Role::NON_SECURE) continue;
    for (auto lvl : n.store.held_levels())
      g.final_epochs[n.name][std::to_string(lvl)] = n.store.entry(lvl)->epoch;
  }
  return g;
}

inline ordjson to_json(const GoldenTranscript& g) {
  ordjson steps = ordjson::array();
  for (const auto& s : g.steps)
    steps.push_back({{"step", s.step},
                     {"msg_type", s.msg_type},
                     {"sender", s.sender},
                     {"body_len", s.body_len}});
  ordjson epochs = ordjson::object();
  for (const auto& [node, levels] : g.final_epochs) {
    ordjson per = ordjson::object();
    for (const auto& [lvl, epoch] : levels) per[lvl] = epoch;
    epochs[node] = per;
  }
  return {{"name", g.name},
          {"scenario_hash", g.scenario_hash},
          {"steps", steps},
          {"final_epochs", epochs}};
}

inline GoldenTranscript from_json(const ordjson& j) {
  GoldenTranscript g;
  g.name = j.at("name").get<std::string>();
  if (j.contains("scenario_hash"))
    g.scenario_hash = j.at("scenario_hash").get<std::string>();
  for (const auto& s : j.at("steps"))
    g.steps.push_back(GoldenStep{s.at("step").get<int>(),
                                 s.at("msg_type").get<std::string>(),
                                 s.at("sender").get<std::string>(),
                                 s.at("body_len").get<std::size_t>()});
  if (j.contains("final_epochs"))
    for (const auto& [node, levels] : j.at("final_epochs").items())
      for (const auto& [lvl, epoch] : levels.items())
        g.final_epochs[node][lvl] = epoch.get<std::uint32_t>();
  return g;
}

/// Empty string on a conformant run; otherwise the first divergence,
/// described step by step.
inline std::string check_transcript(const std::vector<net::TranscriptRecord>& run,
                                    const GoldenTranscript& golden) {
  if (run.empty()) raise(Err::NO_LOG, "run produced no transcript");
  const std::size_t n = std::min(run.size(), golden.steps.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = run[i];
    const auto& g = golden.steps[i];
    const std::string run_type = std::string(wire::secure_msg_name(r.msg_type));
    if (run_type != g.msg_type || r.sender != g.sender || r.body_len != g.body_len) {
      return "step " + std::to_string(i + 1) + ": expected " + g.msg_type + "/" +
             g.sender + "/" + std::to_string(g.body_len) + ", got " + run_type +
             "/" + r.sender + "/" + std::to_string(r.body_len);
    }
  }
  if (run.size() != golden.steps.size())
    return "length mismatch: run has " + std::to_string(run.size()) +
           " steps, golden has " + std::to_string(golden.steps.size());
  return {};
}

/// Compare the run's final epochs against the golden expectation.
inline std::string check_epochs(const net::Network& nw, const GoldenTranscript& g) {
  for (const auto& [node, levels] : g.final_epochs) {
    const auto id = nw.node_id(node);
    for (const auto& [lvl_str, epoch] : levels) {
      const keys::Level lvl = std::stoi(lvl_str);
      const keys::PLKeyEntry* e = nw.node(id).store.entry(lvl);
      if (e == nullptr)
        return node + " holds no key for level " + lvl_str;
      if (e->epoch != epoch)
        return node + " level " + lvl_str + ": expected epoch " +
               std::to_string(epoch) + ", got " + std::to_string(e->epoch);
    }
  }
  return {};
}

}  // namespace simcan::conf
