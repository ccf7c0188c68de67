#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "netsec/error.hpp"
#include "netsec/scenario.hpp"

namespace fs = std::filesystem;
using namespace netsec;

namespace {

constexpr int kPass = 0;
constexpr int kAssertFail = 1;
constexpr int kUsage = 2;

std::string scenario_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("NETSEC_SCENARIOS")) return env;
  return NETSEC_SCENARIO_DIR;
}

std::vector<fs::path> stock_files(const std::string& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.path().extension() == ".scn") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// A bare stock name resolves to DIR/NAME.scn.
std::string resolve(const std::string& file, const std::string& dir) {
  if (fs::exists(file)) return file;
  const auto stock = fs::path(dir) / (file + ".scn");
  return fs::exists(stock) ? stock.string() : file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run network security scenarios on a simulated internetwork"};
  app.require_subcommand(1);
  std::string dir_flag;
  app.add_option("--dir", dir_flag, "Stock scenario directory (default: $NETSEC_SCENARIOS or the bundled set)");

  auto* run = app.add_subcommand("run", "Run a scenario and check its assertions");
  std::string run_file, trace_path;
  std::optional<std::uint64_t> seed, max_events;
  bool quiet = false;
  run->add_option("file", run_file, "Scenario file or stock name")->required();
  run->add_option("--trace", trace_path, "Write the event trace here");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--max-events", max_events, "Override the per-run event budget");
  run->add_flag("--quiet,-q", quiet, "Print only the verdict");

  auto* check = app.add_subcommand("check", "Parse and validate a scenario without running it");
  std::string check_file;
  check->add_option("file", check_file, "Scenario file or stock name")->required();

  auto* list = app.add_subcommand("list", "List stock scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const auto dir = scenario_dir(dir_flag);

  if (list->parsed()) {
    for (const auto& p : stock_files(dir)) {
      try {
        const auto s = scenario::load_scenario(p.string());
        std::cout << p.stem().string() << "\t" << s.script.size() << " steps\t" << s.assertions.size()
                  << " assertions\n";
      } catch (const Error& e) {
        std::cout << p.stem().string() << "\tINVALID " << e.what() << "\n";
      }
    }
    return kPass;
  }

  const auto file = resolve(check->parsed() ? check_file : run_file, dir);
  scenario::Scenario s;
  try {
    s = scenario::load_scenario(file);
  } catch (const Error& e) {
    std::cerr << file << ": " << e.what() << "\n";
    return kUsage;
  }
  if (check->parsed()) {
    std::cout << file << ": ok (" << s.topology.nodes.size() << " nodes, " << s.script.size() << " steps, "
              << s.assertions.size() << " assertions)\n";
    return kPass;
  }

  if (seed) s.seed = *seed;
  if (max_events) s.max_events = *max_events;
  const auto result = scenario::run_scenario(s);
  if (!trace_path.empty()) {
    try {
      scenario::write_trace(result.trace, trace_path);
    } catch (const Error& e) {
      std::cerr << e.what() << "\n";
      return kUsage;
    }
  }
  if (!quiet) {
    for (const auto& r : result.reports) std::cout << r << "\n";
    for (const auto& a : result.assertions) {
      std::cout << (a.passed ? "PASS " : "FAIL ") << a.assertion.text();
      if (!a.passed) std::cout << "  (actual " << a.actual << ")";
      std::cout << "\n";
    }
  }
  const auto name = s.name.empty() ? fs::path(file).stem().string() : s.name;
  std::cout << name << ": " << (result.passed() ? "PASS" : "FAIL") << "\n";
  return result.passed() ? kPass : kAssertFail;
}
