// Regenerates the golden conformance transcripts from the reference
// scenarios. Outputs land in the directory given as argv[1] (default
// "conformance"). The committed goldens are frozen; rerun this only when a
// deliberate protocol change invalidates them.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "simcan/attack.hpp"
#include "simcan/conformance.hpp"

using namespace simcan;

namespace {

scn::ScenarioConfig load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return scn::parse_scenario(ss.str());
}

void emit(const std::string& scenario, const std::string& name,
          const std::filesystem::path& out_dir) {
  auto cfg = load(scenario);
  net::Network nw(cfg);
  attack::install(nw);
  nw.run();
  const auto golden = conf::capture(nw, name);
  const auto path = out_dir / (name + ".json");
  std::ofstream out(path, std::ios::binary);
  out << conf::to_json(golden).dump(2) << "\n";
  std::cout << "wrote " << path.string() << " (" << golden.steps.size()
            << " steps)\n";
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out_dir = argc > 1 ? argv[1] : "conformance";
  std::filesystem::create_directories(out_dir);
  const std::string scn_dir = argc > 2 ? argv[2] : "scenarios";
  try {
    emit(scn_dir + "/provisioning_only.scn", "provisioning", out_dir);
    emit(scn_dir + "/rolling.scn", "rolling", out_dir);
    emit(scn_dir + "/deprecation.scn", "deprecation", out_dir);
    emit(scn_dir + "/challenge.scn", "challenge", out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
