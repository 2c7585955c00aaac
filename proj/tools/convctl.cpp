#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "convctl/convctl.hpp"

namespace {

int report(const convctl::RunSummary& s, const std::filesystem::path& out) {
  std::cout << s.name << ": " << s.steps << " steps, converged=" << (s.converged ? "yes" : "no");
  if (s.converged) std::cout << " (settled at t=" << s.settle_time << " s)";
  std::cout << ", max |I|=" << s.max_current << ", safety violations=" << s.safety_violations
            << ", controller errors=" << s.controller_errors << ", peak |df|=" << s.max_freq_dev_hz << " Hz\n";
  for (const auto& inv : s.inverters)
    std::cout << "  inverter " << inv.id << ": terminal (" << inv.terminal(0) << ", " << inv.terminal(1)
              << "), oscillation " << inv.oscillation << "\n";
  std::cout << "wrote " << out.string() << "\n";
  return s.safety_violations == 0 && s.controller_errors == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Current-limited converter control: scenarios, presets and feasible regions"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out", preset_name, region_mode = "pv2", region_out;
  std::uint64_t seed = 0;
  bool no_plots = false;

  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("scenario", scenario_path, "scenario YAML file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory");
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  run->add_flag("--no-plots", no_plots, "skip SVG output");

  auto* preset = app.add_subcommand("preset", "run a bundled scenario");
  preset->add_option("name", preset_name, "preset name")->required()->check(CLI::IsMember(convctl::presets::names()));
  preset->add_option("--out", out_dir, "output directory");
  auto* preset_seed = preset->add_option("--seed", seed, "override the scenario seed");
  preset->add_flag("--no-plots", no_plots, "skip SVG output");

  auto* region = app.add_subcommand("region", "emit sampled feasible-region boundaries as CSV");
  region->add_option("scenario", scenario_path, "scenario YAML file")->required()->check(CLI::ExistingFile);
  region->add_option("--mode", region_mode, "tracking mode")->check(CLI::IsMember({"pq", "pv2", "qv2"}));
  region->add_option("--out", region_out, "CSV file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || preset->parsed()) {
      auto sc = run->parsed() ? convctl::parse_scenario(scenario_path) : convctl::preset_scenario(preset_name);
      if (seed_opt->count() > 0 || preset_seed->count() > 0) sc.set_seed(seed);
      std::filesystem::path out = out_dir;
      if (preset->parsed() && out_dir == "out") out = std::filesystem::path("out") / preset_name;
      const auto res = convctl::run_and_report(sc, out, !no_plots);
      for (const auto& e : res.result.error_messages) std::cerr << "controller: " << e << "\n";
      return report(res.summary, out);
    }
    if (region->parsed()) {
      const auto sc = convctl::parse_scenario(scenario_path);
      const auto mode = *convctl::parse_tracking_mode(region_mode);
      if (region_out.empty()) {
        convctl::write_region_csv(std::cout, sc, mode);
      } else {
        std::ofstream os(region_out);
        if (!os) throw convctl::ConfigError("cannot write " + region_out);
        convctl::write_region_csv(os, sc, mode);
      }
      return 0;
    }
  } catch (const convctl::ValidationError& e) {
    for (const auto& m : e.errors()) std::cerr << m << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
