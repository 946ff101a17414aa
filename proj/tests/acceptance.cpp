// Acceptance suite: every shipped guarantee, one pass/fail line each.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "simcan/simcan.hpp"

using namespace simcan;

namespace {

int failures = 0;

void criterion(const std::string& name, const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string error;
  try {
    body();
  } catch (const std::exception& e) {
    error = e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (error.empty()) {
    std::printf("[PASS] %s (%.2fs)\n", name.c_str(), secs);
  } else {
    ++failures;
    std::printf("[FAIL] %s (%.2fs): %s\n", name.c_str(), secs, error.c_str());
  }
  std::fflush(stdout);
}

void expect(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  expect(in.good(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

scn::ScenarioConfig scenario(const std::string& name) {
  return scn::parse_scenario(slurp(std::string(SIMCAN_SCENARIO_DIR) + "/" + name));
}

scn::ScenarioConfig attack_scenario(const std::string& name) {
  return scn::parse_scenario(slurp(std::string(SIMCAN_ATTACKS_DIR) + "/" + name));
}

double num(const std::string& s) { return std::stod(s); }

// --------------------------------------------------------------------------

void c1_provisioning_and_rolling() {
  const auto wall0 = std::chrono::steady_clock::now();

  // SGTW + 2 nodes at 500 kbit/s: full bring-up within 50 ms simulated
  {
    net::Network nw(scenario("baseline_2node.scn"));
    nw.run();
    expect(nw.provisioning_done(), "provisioning did not complete");
    expect(nw.provisioning_latency_us() <= 50'000,
           "provisioning took " + std::to_string(nw.provisioning_latency_us()) +
               " us (> 50 ms)");
  }

  // rolling: one broadcast regardless of node count, delivered within 50 ms
  std::uint64_t frames_per_roll = 0;
  for (int nodes : {2, 8, 32}) {
    scn::ScenarioConfig cfg;
    cfg.seed = 4242;
    cfg.seed_set = true;
    cfg.horizon_us = 900'000;
    scn::BusSpec pub;
    pub.name = "public";
    pub.data_baud = 500'000;
    scn::BusSpec sec;
    sec.name = "secure";
    sec.secure = true;
    sec.data_baud = 500'000;
    cfg.buses = {pub, sec};
    scn::NodeSpec gw;
    gw.name = "SGTW";
    gw.role = scn::Role::SGTW;
    cfg.nodes.push_back(gw);
    for (int i = 0; i < nodes; ++i) {
      scn::NodeSpec n;
      n.name = "N" + std::to_string(i);
      n.role = scn::Role::SECURE_NODE;
      n.level = 5;
      cfg.nodes.push_back(n);
    }
    cfg.validate();
    cfg.compute_hash();
    net::Network nw(cfg);
    nw.simulation().schedule(700'000, [&nw] { nw.trigger_roll(5); });
    nw.run();
    expect(nw.provisioning_done(),
           "provisioning incomplete at " + std::to_string(nodes) + " nodes");
    expect(nw.roll_broadcasts(5) == 1, "roll used more than one broadcast");
    if (frames_per_roll == 0) frames_per_roll = nw.roll_broadcasts(5);
    expect(nw.roll_broadcasts(5) == frames_per_roll,
           "frame count varies with node count");
    // latency of the broadcast itself
    net::Time tx_start = 0, tx_end = 0;
    for (const auto& ev : nw.bus("secure").events()) {
      if (ev.bytes.empty() ||
          ev.bytes[0] != static_cast<std::uint8_t>(wire::SecureMsgType::KEY_ROLL))
        continue;
      if (ev.kind == bus::EventKind::TX_START) tx_start = ev.time_us;
      if (ev.kind == bus::EventKind::TX_END) tx_end = ev.time_us;
    }
    expect(tx_end > tx_start && tx_end - tx_start <= 50'000,
           "roll broadcast latency above 50 ms");
    for (int i = 0; i < nodes; ++i)
      expect(nw.node(nw.node_id("N" + std::to_string(i))).store.entry(5)->epoch ==
                 1,
             "a node missed the roll");
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0)
          .count();
  expect(wall < 5.0, "criterion exceeded its 5 s runtime budget");
}

void c2_digest_sweep() {
  auto cfg = scenario("digest_sweep.scn");
  const auto series = metrics::sweep_digest_lengths(cfg, {64, 128, 256});
  expect(series.size() == 3, "series incomplete");
  const double ratio =
      series[1].cpu_pct_fixed_load / series[2].cpu_pct_fixed_load;
  expect(ratio >= 0.58 && ratio <= 0.62,
         "128-bit cost is " + std::to_string(ratio * 100) +
             "% of the 256-bit cost, outside 60% +/- 2%");
  expect(series[0].max_frames_per_sec > series[1].max_frames_per_sec &&
             series[1].max_frames_per_sec > series[2].max_frames_per_sec,
         "max sustainable frames not strictly decreasing in digest length");
}

void c3_speculation() {
  auto cfg = scenario("speculation_80.scn");
  const auto r = metrics::speculation_experiment(cfg);
  expect(r.frames_total == 80 && r.steady_frames == 18,
         "experiment workload is not 18-of-80 steady");
  expect(std::abs(r.cpu_off_pct - 6.0) <= 0.5,
         "off CPU " + std::to_string(r.cpu_off_pct) + "% outside 6% +/- 0.5pp");
  expect(std::abs(r.cpu_allhit_pct - 1.0) <= 0.5,
         "all-hit CPU " + std::to_string(r.cpu_allhit_pct) +
             "% outside 1% +/- 0.5pp");
  expect(std::abs((r.cpu_allmiss_pct - r.cpu_off_pct) - 0.1) <= 0.5,
         "all-miss overhead outside 0.1pp +/- 0.5pp");

  // calibration-independent property: identical verdicts with and without
  // speculation over ten thousand randomized frames
  RandomSource key_rng(21);
  keys::PLKeyEntry entry;
  entry.key = crypto::KeyMaterial(key_rng.bytes(32), crypto::KeyKind::PL_KEY);
  const crypto::MacAlgo algo(crypto::MacVariant::HASH_MAC_256, 256);
  auto sign = [&](std::uint16_t counter, const Bytes& data) {
    wire::PublicFrame f;
    f.id = wire::FrameId(0x10, wire::BusKind::PUBLIC);
    f.counter = counter;
    f.data = data;
    f.digest = crypto::mac(algo, entry.key, wire::public_mac_input(data, counter));
    return f;
  };
  sched::VerifyEnv with, without;
  for (auto* env : {&with, &without}) {
    env->cost.compare_us = 1.0;
    env->cost.mac_c0_us = 5.0;
    env->algo = algo;
    env->key_for = [&entry](std::uint32_t) { return &entry; };
  }
  with.speculation = true;
  with.registered = {{0x10, Bytes(28, 0)}};
  RandomSource rng(77);
  std::uint16_t counter = 0;
  Bytes data(28, 0);
  std::uint64_t checked = 0;
  for (int i = 0; i < 10'000; ++i) {
    if (i % 64 == 0) sched::background_speculate(with, 1e9);
    wire::PublicFrame f;
    const auto dice = rng.below(10);
    if (dice < 5) {
      f = sign(counter++, data);
    } else if (dice < 6) {
      data[5] = static_cast<std::uint8_t>(rng.below(256));
      f = sign(counter++, data);
    } else if (dice < 7) {
      f = sign(static_cast<std::uint16_t>(counter - 1), data);  // replay
    } else if (dice < 8) {
      f = sign(counter, data);
      f.data[3] ^= 0xff;  // mutated payload, stale digest
    } else if (dice < 9) {
      f = sign(counter, data);
      f.digest[0] ^= 0x01;  // forged digest
    } else {
      f = sign(static_cast<std::uint16_t>(counter + 5000), data);  // far future
    }
    const auto a = with.process(f);
    const auto b = without.process(f);
    expect((a.verdict != sched::Verdict::REJECTED) ==
               (b.verdict != sched::Verdict::REJECTED),
           "speculated and plain verdicts disagree at frame " +
               std::to_string(i));
    ++checked;
  }
  expect(checked == 10'000 && with.spec_hits > 0,
         "equivalence check did not exercise speculation");
}

void c4_attacks() {
  // MitM, authentication on: 100% of tampered frames rejected
  {
    auto result = metrics::run_scenario(attack_scenario("mitm_downstream.scn"));
    const auto& det = result.report.at("detection");
    expect(det.at("MUTATED").at("fn").get<std::uint64_t>() == 0 &&
               det.at("MUTATED").at("tp").get<std::uint64_t>() > 0,
           "mutated frames slipped through with authentication on");
    expect(det.at("INJECTED").at("fn").get<std::uint64_t>() == 0 &&
               det.at("INJECTED").at("tp").get<std::uint64_t>() > 0,
           "injected frames slipped through with authentication on");
  }
  // MitM, authentication off: 100% accepted
  {
    auto result =
        metrics::run_scenario(attack_scenario("mitm_nocmac_baseline.scn"));
    const auto& det = result.report.at("detection");
    expect(det.at("MUTATED").at("tp").get<std::uint64_t>() == 0 &&
               det.at("MUTATED").at("fn").get<std::uint64_t>() > 0,
           "baseline without authentication rejected mutated frames");
    expect(det.at("INJECTED").at("tp").get<std::uint64_t>() == 0 &&
               det.at("INJECTED").at("fn").get<std::uint64_t>() > 0,
           "baseline without authentication rejected injected frames");
  }
  // replay with the rolling counter: 100% rejected
  {
    auto result = metrics::run_scenario(attack_scenario("replay.scn"));
    const auto& det = result.report.at("detection");
    expect(det.at("REPLAYED").at("fn").get<std::uint64_t>() == 0 &&
               det.at("REPLAYED").at("tp").get<std::uint64_t>() > 0,
           "replayed frames were accepted despite the rolling counter");
  }
  // hardware replacement: flagged within one challenge period
  {
    auto cfg = attack_scenario("hw_replace.scn");
    net::Network nw(cfg);
    attack::install(nw);
    nw.run();
    net::Time flagged_at = 0;
    for (const auto& c : nw.challenges())
      if (c.target == "V2" && c.verdict == "VIOLATION" && flagged_at == 0)
        flagged_at = c.time_us;
    expect(flagged_at > 1'000'000, "swapped module never flagged");
    expect(flagged_at <= 1'000'000 + 2 * 100'000,
           "swap detection took longer than one challenge period");
  }
  // genuine-node control: zero false positives over one thousand periods
  {
    auto cfg = scenario("challenge.scn");
    cfg.horizon_us = 140'000'000;
    cfg.compute_hash();
    net::Network nw(cfg);
    nw.run();
    std::uint64_t rounds = nw.challenges().size() / 3;
    expect(rounds >= 1000, "control run covered only " +
                               std::to_string(rounds) + " challenge periods");
    for (const auto& c : nw.challenges())
      expect(c.verdict == "AUTHENTIC",
             "false positive on a genuine module at t=" +
                 std::to_string(c.time_us));
  }
}

void c5_deprecation_isolation() {
  auto cfg = scenario("deprecation.scn");
  net::Network nw(cfg);
  nw.run();
  const net::Time settle = 1'520'000;  // violation at 1.5 s
  const auto defc = nw.node_id("DEFC");
  std::uint64_t defc_tx_accepted_after = 0;
  std::uint64_t defc_rx_accepted_after = 0;
  std::uint64_t high_priv_failures = 0;
  for (const auto& v : nw.verdicts()) {
    if (v.frame_raw_id == 0x60 && v.accepted && v.time_us >= settle)
      ++defc_tx_accepted_after;  // frames DEFC signed
    if (v.node == defc && v.accepted && v.time_us >= settle)
      ++defc_rx_accepted_after;  // frames DEFC verified
    if (v.frame_raw_id == 0x50 && !v.accepted) ++high_priv_failures;
  }
  expect(defc_tx_accepted_after == 0,
         "the compromised node still authenticates to peers");
  expect(defc_rx_accepted_after == 0,
         "the compromised node still verifies level traffic");
  expect(high_priv_failures == 0,
         "higher-privilege traffic saw verification failures");
  expect(nw.node(nw.node_id("B3")).store.entry(3)->epoch == 1,
         "survivors did not reach the successor epoch");
  expect(nw.node(defc).store.entry(3)->epoch == 0,
         "the compromised node obtained the successor key");
}

void c6_crypto_vectors() {
  const std::string dir = std::string(SIMCAN_TESTDATA_DIR) + "/crypto/";
  auto each_vector = [&](const std::string& file,
                         const std::function<void(const std::string&, const Bytes&,
                                                  const std::string&,
                                                  const Bytes&)>& fn) {
    std::ifstream in(dir + file);
    expect(in.good(), "missing vector file " + file);
    std::string line;
    int count = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string name, key_hex, in_hex, out_hex;
      std::getline(ss, name, '\t');
      std::getline(ss, key_hex, '\t');
      std::getline(ss, in_hex, '\t');
      std::getline(ss, out_hex, '\t');
      Bytes key, out;
      expect(hex_decode(key_hex, key) && hex_decode(out_hex, out),
             "malformed vector " + name);
      fn(name, key, in_hex, out);
      ++count;
    }
    expect(count > 0, file + " is empty");
  };

  each_vector("x25519.tsv", [](const std::string& name, const Bytes& key,
                               const std::string& in_hex, const Bytes& out) {
    crypto::KeyMaterial priv(key, crypto::KeyKind::ECC_PRIVATE);
    crypto::KeyMaterial pub(hex_decode_or_empty(in_hex), crypto::KeyKind::ECC_PUBLIC);
    expect(crypto::ecdh_shared(priv, pub) == out, "x25519 mismatch: " + name);
  });
  each_vector("cmac_aes256.tsv", [](const std::string& name, const Bytes& key,
                                    const std::string& in_hex, const Bytes& out) {
    crypto::KeyMaterial k(key, crypto::KeyKind::PL_KEY);
    const Bytes msg = hex_decode_or_empty(in_hex);
    expect(crypto::mac(crypto::MacAlgo(crypto::MacVariant::CMAC_AES256, 128), k,
                       msg) == out,
           "cmac mismatch: " + name);
  });
  each_vector("aes256_modes.tsv", [](const std::string& name, const Bytes& key,
                                     const std::string& in_hex, const Bytes& out) {
    crypto::KeyMaterial k(key, crypto::KeyKind::SHARED_KEY);
    if (name.rfind("cbc", 0) == 0) {
      const auto colon = in_hex.find(':');
      const Bytes iv = hex_decode_or_empty(in_hex.substr(0, colon));
      const Bytes pt = hex_decode_or_empty(in_hex.substr(colon + 1));
      expect(crypto::aes_cbc_encrypt_blocks(k, iv, pt) == out,
             "cbc mismatch: " + name);
    } else {
      expect(crypto::aes_ecb_encrypt_block(k, hex_decode_or_empty(in_hex)) == out,
             "ecb mismatch: " + name);
    }
  });
}

void c7_determinism() {
  const std::vector<std::pair<std::string, std::string>> all = {
      {SIMCAN_SCENARIO_DIR, "baseline_2node.scn"},
      {SIMCAN_SCENARIO_DIR, "digest_sweep.scn"},
      {SIMCAN_SCENARIO_DIR, "speculation_80.scn"},
      {SIMCAN_SCENARIO_DIR, "deprecation.scn"},
      {SIMCAN_SCENARIO_DIR, "subdomain.scn"},
      {SIMCAN_SCENARIO_DIR, "challenge.scn"},
      {SIMCAN_SCENARIO_DIR, "provisioning_only.scn"},
      {SIMCAN_SCENARIO_DIR, "rolling.scn"},
      {SIMCAN_ATTACKS_DIR, "mitm_downstream.scn"},
      {SIMCAN_ATTACKS_DIR, "mitm_nocmac_baseline.scn"},
      {SIMCAN_ATTACKS_DIR, "replay.scn"},
      {SIMCAN_ATTACKS_DIR, "replay_nocounter_baseline.scn"},
      {SIMCAN_ATTACKS_DIR, "dos_flood.scn"},
      {SIMCAN_ATTACKS_DIR, "dos_flood_mitigated.scn"},
      {SIMCAN_ATTACKS_DIR, "hw_replace.scn"},
      {SIMCAN_ATTACKS_DIR, "tamper_sgtw.scn"},
  };
  for (const auto& [dir, name] : all) {
    const auto cfg = scn::parse_scenario(slurp(dir + "/" + name));
    const std::string a = metrics::serialize(metrics::run_scenario(cfg));
    const std::string b = metrics::serialize(metrics::run_scenario(cfg));
    expect(a == b, name + " is not byte-identical across runs");
  }
}

void c8_fleet_math() {
  const auto j = metrics::fleet_math(10'000'000, 64, 16, 3.0);
  const double gib = j.at("fleet_total_gib").get<double>();
  expect(std::abs(gib - 9.5367) < 0.01,
         "fleet storage " + std::to_string(gib) + " GiB, expected about 9.5");
  const auto onboard = metrics::fleet_math(1, 16, 16, 3.0).at("onboard_bytes");
  expect(onboard.get<std::uint64_t>() == 256,
         "16 keys of 16 bytes must occupy 256 bytes on the engine");
}

}  // namespace

int main() {
  std::printf("acceptance suite\n================\n");
  criterion("1. provisioning <= 50 ms; roll <= 50 ms, node-count invariant",
            c1_provisioning_and_rolling);
  criterion("2. digest sweep: 128-bit costs 60% +/- 2% of 256-bit; throughput "
            "monotone",
            c2_digest_sweep);
  criterion("3. speculation: ~6% off, ~1% all-hit, +0.1pp all-miss; verdicts "
            "unchanged",
            c3_speculation);
  criterion("4. attacks: tampered frames 100% rejected (auth on) / accepted "
            "(auth off); replay 100% rejected; hw swap flagged, no false "
            "positives over 1000 periods",
            c4_attacks);
  criterion("5. deprecation isolates the compromised node, higher levels "
            "unaffected",
            c5_deprecation_isolation);
  criterion("6. crypto primitives match their published specification vectors",
            c6_crypto_vectors);
  criterion("7. every shipped scenario double-runs byte-identical",
            c7_determinism);
  criterion("8. fleet arithmetic: ~9.5 GiB fleet store, 256 B on-engine",
            c8_fleet_math);
  std::printf("================\n%s (%d failed)\n",
              failures == 0 ? "ALL CRITERIA PASS" : "CRITERIA FAILED", failures);
  return failures;
}
