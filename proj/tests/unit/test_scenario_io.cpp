#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "convctl/scenario_io.hpp"

using namespace convctl;

namespace {

const std::filesystem::path kRoot = CONVCTL_SOURCE_DIR;

std::vector<std::string> errors_of(const std::string& text, const std::filesystem::path& base = kRoot / "scenarios") {
  try {
    parse_scenario_text(text, "test.yaml", base);
  } catch (const ValidationError& e) {
    return e.errors();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& errs, const std::string& needle) {
  for (const auto& e : errs)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

void expect_same_single_bus(const SingleBusScenario& a, const SingleBusScenario& b) {
  EXPECT_DOUBLE_EQ(a.plant.r_eq, b.plant.r_eq);
  EXPECT_DOUBLE_EQ(a.plant.l_eq, b.plant.l_eq);
  EXPECT_EQ(a.plant.e_dq, b.plant.e_dq);
  EXPECT_EQ(a.plant.power_scale, b.plant.power_scale);
  EXPECT_EQ(a.kind, b.kind);
  EXPECT_EQ(a.oc.mode, b.oc.mode);
  EXPECT_EQ(a.oc.setpoint, b.oc.setpoint);
  EXPECT_EQ(a.oc.gamma, b.oc.gamma);
  EXPECT_EQ(a.oc.rho, b.oc.rho);
  EXPECT_EQ(a.oc.step_size, b.oc.step_size);
  EXPECT_EQ(a.oc.i_max, b.oc.i_max);
  EXPECT_EQ(a.oc.estimator_gain, b.oc.estimator_gain);
  EXPECT_DOUBLE_EQ(a.droop.v_nom, b.droop.v_nom);
  EXPECT_EQ(a.droop.m_p_hz, b.droop.m_p_hz);
  EXPECT_EQ(a.droop.m_v2, b.droop.m_v2);
  EXPECT_EQ(a.droop.filter_tau, b.droop.filter_tau);
  EXPECT_EQ(a.initial_current, b.initial_current);
  EXPECT_EQ(a.dt, b.dt);
  EXPECT_EQ(a.duration, b.duration);
  ASSERT_EQ(a.events.events.size(), b.events.events.size());
  for (std::size_t k = 0; k < a.events.events.size(); ++k) {
    EXPECT_EQ(a.events.events[k].time, b.events.events[k].time);
    EXPECT_EQ(a.events.events[k].event.index(), b.events.events[k].event.index());
  }
}

void expect_same_case(const CaseSpec& a, const CaseSpec& b) {
  EXPECT_EQ(a.slack_voltage, b.slack_voltage);
  EXPECT_EQ(a.power_scale, b.power_scale);
  ASSERT_EQ(a.buses.size(), b.buses.size());
  for (std::size_t k = 0; k < a.buses.size(); ++k) {
    EXPECT_EQ(a.buses[k].id, b.buses[k].id);
    EXPECT_EQ(a.buses[k].kind, b.buses[k].kind);
    EXPECT_NEAR(std::abs(a.buses[k].load - b.buses[k].load), 0.0, 1e-15);
    EXPECT_EQ(a.buses[k].shunt, b.buses[k].shunt);
  }
  ASSERT_EQ(a.branches.size(), b.branches.size());
  for (std::size_t k = 0; k < a.branches.size(); ++k) {
    EXPECT_EQ(a.branches[k].from, b.branches[k].from);
    EXPECT_EQ(a.branches[k].to, b.branches[k].to);
    EXPECT_EQ(a.branches[k].r, b.branches[k].r);
    EXPECT_EQ(a.branches[k].x, b.branches[k].x);
    EXPECT_EQ(a.branches[k].shunt_b, b.branches[k].shunt_b);
    EXPECT_EQ(a.branches[k].tap, b.branches[k].tap);
  }
  ASSERT_EQ(a.inverters.size(), b.inverters.size());
  for (std::size_t k = 0; k < a.inverters.size(); ++k) {
    const auto &x = a.inverters[k], &y = b.inverters[k];
    EXPECT_EQ(x.bus, y.bus);
    EXPECT_EQ(x.filter_r, y.filter_r);
    EXPECT_EQ(x.filter_x, y.filter_x);
    EXPECT_EQ(x.kind, y.kind);
    EXPECT_EQ(x.controller.mode, y.controller.mode);
    EXPECT_NEAR((x.controller.setpoint - y.controller.setpoint).norm(), 0.0, 1e-12);
    EXPECT_EQ(x.controller.gamma, y.controller.gamma);
    EXPECT_EQ(x.controller.rho, y.controller.rho);
    EXPECT_EQ(x.controller.step_size, y.controller.step_size);
    EXPECT_EQ(x.controller.i_max, y.controller.i_max);
  }
}

}  // namespace

TEST(Presets, SetpointStepParameters) {
  const auto sc = std::get<SingleBusScenario>(preset_scenario("setpoint_step_oc").sim);
  EXPECT_EQ(sc.dt, 0.002);
  EXPECT_EQ(sc.oc.rho, 0.001);
  EXPECT_EQ(sc.oc.gamma, 1.0);
  EXPECT_EQ(sc.oc.step_size, 1.0);
  EXPECT_EQ(sc.oc.mode, TrackingMode::PV2);
  EXPECT_EQ(sc.initial_current, (DqVector{0.75, 0.3}));
  ASSERT_EQ(sc.events.events.size(), 1u);
  EXPECT_EQ(sc.events.events[0].time, 0.05);
  EXPECT_EQ(std::get<SetpointChange>(sc.events.events[0].event).setpoint, OutputPoint(1.0, 1.0));
  const auto p = presets::reference_converter();
  EXPECT_EQ(p.r_f, 0.011);
  EXPECT_EQ(p.r_g, 0.025);
  EXPECT_EQ(p.l_f, 0.016);
  EXPECT_EQ(p.l_g, 0.021);
  EXPECT_EQ(p.c_f, 0.014);
}

TEST(Presets, Ieee14Parameters) {
  const auto sc = std::get<NetworkScenario>(preset_scenario("ieee14_dt001").sim);
  EXPECT_EQ(sc.dt, 0.01);
  EXPECT_EQ(std::get<NetworkScenario>(preset_scenario("ieee14_dt005").sim).dt, 0.05);
  ASSERT_EQ(sc.grid.inverters.size(), 4u);
  for (const auto& inv : sc.grid.inverters) {
    EXPECT_EQ(inv.filter_r, 0.01);
    EXPECT_EQ(inv.filter_x, 0.1);
    EXPECT_EQ(inv.controller.step_size, 2.0);
    EXPECT_EQ(inv.controller.rho, 0.001);
  }
  for (const auto& ev : sc.events.events) {
    EXPECT_EQ(ev.time, 0.05);
    EXPECT_EQ(std::get<SetpointChange>(ev.event).setpoint(0), 1.1);
  }
  EXPECT_EQ(sc.grid.buses[0].kind, BusKind::Slack);
  EXPECT_THROW(preset_scenario("nope"), ConfigError);
}

TEST(ScenarioFiles, BundledFilesMatchPresets) {
  for (const auto& name : presets::names()) {
    const auto file = parse_scenario(kRoot / "scenarios" / (name + ".yaml"));
    const auto preset = preset_scenario(name);
    EXPECT_EQ(file.name, name);
    ASSERT_EQ(file.sim.index(), preset.sim.index()) << name;
    if (const auto* s = std::get_if<SingleBusScenario>(&file.sim)) {
      expect_same_single_bus(*s, std::get<SingleBusScenario>(preset.sim));
    } else {
      const auto& a = std::get<NetworkScenario>(file.sim);
      const auto& b = std::get<NetworkScenario>(preset.sim);
      expect_same_case(a.grid, b.grid);
      EXPECT_EQ(a.dt, b.dt);
      EXPECT_EQ(a.duration, b.duration);
      ASSERT_EQ(a.events.events.size(), b.events.events.size());
      for (std::size_t k = 0; k < a.events.events.size(); ++k) {
        const auto& x = std::get<SetpointChange>(a.events.events[k].event);
        const auto& y = std::get<SetpointChange>(b.events.events[k].event);
        EXPECT_EQ(x.inverter, y.inverter);
        EXPECT_NEAR((x.setpoint - y.setpoint).norm(), 0.0, 1e-12);
      }
    }
  }
}

TEST(CaseFile, ShippedCaseMatchesEmbedded) {
  expect_same_case(parse_case(kRoot / "data" / "ieee14_modified.yaml"), presets::ieee14_case());
}

TEST(ScenarioErrors, EmptyFileListsRequiredFields) {
  const auto errs = errors_of("");
  EXPECT_TRUE(any_contains(errs, "'dt'"));
  EXPECT_TRUE(any_contains(errs, "'duration'"));
  EXPECT_TRUE(any_contains(errs, "'network'"));
}

TEST(ScenarioErrors, AllProblemsReportedWithPositions) {
  const std::string text =
      "dt: -1\n"
      "duration: 1\n"
      "colour: blue\n"
      "network:\n"
      "  type: single_bus\n"
      "  equivalent: {r: 0.03, x: 0.1}\n"
      "controller:\n"
      "  mode: pz\n"
      "  setpoint: [1, 1]\n"
      "  rho: 0\n";
  const auto errs = errors_of(text);
  EXPECT_GE(errs.size(), 4u);
  EXPECT_TRUE(any_contains(errs, "test.yaml:1:5: dt must be positive"));
  EXPECT_TRUE(any_contains(errs, "test.yaml:3:1: unknown key 'colour'"));
  EXPECT_TRUE(any_contains(errs, "test.yaml:8:9: controller.mode"));
  EXPECT_TRUE(any_contains(errs, "rho"));
}

TEST(ScenarioErrors, MissingCaseFile) {
  const auto errs = errors_of("dt: 0.01\nduration: 1\nnetwork: {type: case, case_file: nowhere.yaml}\n");
  EXPECT_TRUE(any_contains(errs, "case file not found"));
}

TEST(ScenarioErrors, SyntaxErrorHasPosition) {
  const auto errs = errors_of("dt: [1, 2\n");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].rfind("test.yaml:", 0), 0u);
}

TEST(CaseErrors, DuplicateBusIdNamed) {
  const std::string text =
      "buses:\n"
      "  - {id: 1, type: slack}\n"
      "  - {id: 2, type: passive}\n"
      "  - {id: 2, type: passive}\n"
      "branches:\n"
      "  - {from: 1, to: 2, x: 0.1}\n"
      "inverters: []\n";
  try {
    parse_case_text(text, "case.yaml");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(any_contains(e.errors(), "case.yaml:4:10: duplicate bus id 2"));
  }
}

TEST(CaseErrors, InverterConsistency) {
  const std::string text =
      "buses:\n"
      "  - {id: 1, type: slack}\n"
      "  - {id: 2, type: inverter}\n"
      "  - {id: 3, type: passive}\n"
      "branches:\n"
      "  - {from: 1, to: 2, x: 0.1}\n"
      "  - {from: 2, to: 7, x: 0.1}\n"
      "inverters:\n"
      "  - {bus: 3, controller: {setpoint: [0, 1]}}\n";
  try {
    parse_case_text(text, "case.yaml");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(any_contains(e.errors(), "unknown bus 7"));
    EXPECT_TRUE(any_contains(e.errors(), "not of type inverter"));
    EXPECT_TRUE(any_contains(e.errors(), "bus 2 is of type inverter but has no inverter"));
  }
}

TEST(CaseErrors, DisconnectedCaseRejected) {
  const std::string text =
      "buses:\n"
      "  - {id: 1, type: slack}\n"
      "  - {id: 2, type: passive}\n"
      "branches: []\n"
      "inverters: []\n";
  // connectivity is checked when the admittance is built
  const auto c = parse_case_text(text, "case.yaml");
  EXPECT_THROW(build_admittance(c.buses, c.branches, c.inverters), ConfigError);
}

TEST(ScenarioParse, InlineEquivalentAndSeed) {
  const std::string text =
      "name: custom\n"
      "dt: 0.001\n"
      "duration: 0.1\n"
      "seed: 42\n"
      "network: {type: single_bus, equivalent: {r: 0.05, x: -0.1}, grid_voltage: [0.9, 0.1], power_scale: 1.5}\n"
      "initial_current: [0.1, 0.0]\n"
      "controller: {kind: droop, mode: pq, setpoint: [0.5, 0.1], droop: {m_p_hz: 1.0, v_nom: 1.02}}\n"
      "events:\n"
      "  - {time: 0.05, type: setpoint, inverter: 0, setpoint: [0.4, 0.0]}\n"
      "output: {plots: false}\n";
  const auto f = parse_scenario_text(text, "custom.yaml");
  const auto& s = std::get<SingleBusScenario>(f.sim);
  EXPECT_EQ(f.name, "custom");
  EXPECT_FALSE(f.plots);
  EXPECT_EQ(s.seed, 42u);
  EXPECT_EQ(s.kind, ControllerKind::Droop);
  EXPECT_EQ(s.oc.mode, TrackingMode::PQ);
  EXPECT_EQ(s.plant.x_eq(), -0.1);
  EXPECT_EQ(s.droop.m_p_hz, 1.0);
  EXPECT_EQ(s.droop.v_nom, 1.02);
  EXPECT_EQ(std::get<SetpointChange>(s.events.events[0].event).inverter, 0);
}
