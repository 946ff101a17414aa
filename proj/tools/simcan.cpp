// simcan — scenario-driven CAN-FD security simulator front end.
//
// Subcommands:
//   run <scenario>          full simulation, report + logs
//   sweep-digest <scenario> CPU/throughput series over digest lengths
//   speculate <scenario>    speculative-MAC experiment (off / all-hit / all-miss)
//   fleet-math              key-storage arithmetic
//   attacks <scenario>      alias of run for attack corpora
//
// Exit codes: 0 ok, 1 runtime failure, 2 scenario schema error,
// 3 nondeterminism detected by --check.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "simcan/simcan.hpp"

namespace {

int log_level() {
  const char* env = std::getenv("SIMCAN_LOG");
  if (env == nullptr) return 0;
  const std::string v(env);
  if (v == "debug" || v == "2") return 2;
  if (v == "info" || v == "1") return 1;
  return 0;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[simcan] " << msg << "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

simcan::scn::ScenarioConfig load_scenario(const std::string& path,
                                          std::uint64_t* seed_override) {
  auto cfg = simcan::scn::parse_scenario(read_file(path));
  if (seed_override != nullptr) {
    cfg.seed = *seed_override;
    cfg.compute_hash();
  }
  return cfg;
}

void write_outputs(const simcan::metrics::RunResult& result,
                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "report.json", std::ios::binary);
    f << result.report.dump(2) << "\n";
  }
  for (const auto& [name, content] : result.files) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    f << content;
  }
  info("wrote " + std::to_string(result.files.size() + 1) + " files to " + out_dir);
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::uint64_t* seed_override, bool check) {
  auto cfg = load_scenario(scenario_path, seed_override);
  info("running " + scenario_path + " (seed " + std::to_string(cfg.seed) + ")");
  auto result = simcan::metrics::run_scenario(cfg);
  if (check) {
    info("determinism check: second run");
    auto again = simcan::metrics::run_scenario(cfg);
    if (simcan::metrics::serialize(result) != simcan::metrics::serialize(again)) {
      std::cerr << "nondeterminism detected: two runs of the same scenario and "
                   "seed differ\n";
      return 3;
    }
  }
  if (!out_dir.empty()) write_outputs(result, out_dir);
  std::cout << result.report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic secure CAN-FD network simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool check = false;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; },
        "override the scenario seed");
  };

  auto* run = app.add_subcommand("run", "run a scenario end to end");
  run->add_option("scenario", scenario_path, "scenario file")->required();
  run->add_option("--out", out_dir, "output directory for report and logs");
  run->add_flag("--check", check, "run twice and verify byte-identical outputs");
  add_seed(run);

  auto* attacks = app.add_subcommand("attacks", "run an attack scenario");
  attacks->add_option("scenario", scenario_path, "scenario file")->required();
  attacks->add_option("--out", out_dir, "output directory for report and logs");
  attacks->add_flag("--check", check, "run twice and verify identical outputs");
  add_seed(attacks);

  std::string lengths_arg = "64,128,256";
  auto* sweep = app.add_subcommand("sweep-digest",
                                   "digest-length CPU and throughput series");
  sweep->add_option("scenario", scenario_path, "scenario file")->required();
  sweep->add_option("--lengths", lengths_arg, "comma-separated digest bits");
  sweep->add_option("--out", out_dir, "output directory for the CSV series");
  add_seed(sweep);

  auto* spec = app.add_subcommand("speculate", "speculative MAC experiment");
  spec->add_option("scenario", scenario_path, "scenario file")->required();
  spec->add_option("--out", out_dir, "output directory");
  add_seed(spec);

  std::uint64_t vehicles = 10'000'000;
  std::uint64_t keys = 64;
  std::uint64_t key_bytes = 16;
  double multiplier = 3.0;
  auto* fleet = app.add_subcommand("fleet-math", "fleet key-storage arithmetic");
  fleet->add_option("--vehicles", vehicles, "fleet size");
  fleet->add_option("--keys", keys, "keys per vehicle");
  fleet->add_option("--key-bytes", key_bytes, "bytes per key");
  fleet->add_option("--multiplier", multiplier, "metadata multiplier");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || attacks->parsed()) {
      return cmd_run(scenario_path, out_dir, seed_set ? &seed : nullptr, check);
    }
    if (sweep->parsed()) {
      auto cfg = load_scenario(scenario_path, seed_set ? &seed : nullptr);
      std::vector<int> lengths;
      std::stringstream ss(lengths_arg);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) lengths.push_back(std::stoi(item));
      auto series = simcan::metrics::sweep_digest_lengths(cfg, lengths);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(std::filesystem::path(out_dir) / "digest_sweep.csv",
                        std::ios::binary);
        f << simcan::metrics::sweep_to_csv(series);
      }
      std::cout << simcan::metrics::sweep_to_json(series).dump(2) << "\n";
      return 0;
    }
    if (spec->parsed()) {
      auto cfg = load_scenario(scenario_path, seed_set ? &seed : nullptr);
      auto result = simcan::metrics::speculation_experiment(cfg);
      const auto j = simcan::metrics::speculation_to_json(result);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(std::filesystem::path(out_dir) / "speculation.json",
                        std::ios::binary);
        f << j.dump(2) << "\n";
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (fleet->parsed()) {
      std::cout << simcan::metrics::fleet_math(vehicles, keys, key_bytes,
                                               multiplier)
                       .dump(2)
                << "\n";
      return 0;
    }
  } catch (const simcan::SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == simcan::Err::SCHEMA_ERROR ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
