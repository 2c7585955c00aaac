#pragma once

// YAML scenario and case files. Parsing collects every problem it finds
// (unknown keys, missing fields, bad values, failed invariants) and reports
// them together as a ValidationError, each message prefixed with file:line:col.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "convctl/errors.hpp"
#include "convctl/network_sim.hpp"
#include "convctl/presets.hpp"

namespace convctl {

struct ScenarioFile {
  std::string name;
  std::filesystem::path source;     ///< empty for presets
  std::filesystem::path case_file;  ///< network scenarios loaded from a case file
  std::variant<SingleBusScenario, NetworkScenario> sim;
  bool plots = true;

  bool is_network() const { return std::holds_alternative<NetworkScenario>(sim); }

  void set_seed(std::uint64_t seed) {
    std::visit([&](auto& s) { s.seed = seed; }, sim);
  }
};

namespace detail {

class YamlReader {
 public:
  explicit YamlReader(std::string origin) : origin_(std::move(origin)) {}

  std::string where(const YAML::Node& n) const {
    const auto m = n.Mark();
    const int line = m.line < 0 ? 1 : m.line + 1;
    const int col = m.column < 0 ? 1 : m.column + 1;
    return origin_ + ":" + std::to_string(line) + ":" + std::to_string(col);
  }

  void error(const YAML::Node& n, const std::string& msg) { errors_.push_back(where(n) + ": " + msg); }
  void error_at(const std::string& where, const std::string& msg) { errors_.push_back(where + ": " + msg); }

  const std::vector<std::string>& errors() const { return errors_; }
  bool ok() const { return errors_.empty(); }

  bool expect_map(const YAML::Node& n, std::string_view what) {
    if (n.IsMap()) return true;
    error(n, std::string(what) + " must be a mapping");
    return false;
  }

  bool expect_seq(const YAML::Node& n, std::string_view what) {
    if (n.IsSequence()) return true;
    error(n, std::string(what) + " must be a list");
    return false;
  }

  void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed, std::string_view ctx) {
    if (!map.IsMap()) return;
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      bool known = false;
      for (auto a : allowed) known = known || key == a;
      if (!known) error(kv.first, "unknown key '" + key + "' in " + std::string(ctx));
    }
  }

  /// Required-field check; reports the enclosing map's position.
  bool require(const YAML::Node& map, std::string_view key, std::string_view ctx) {
    if (map.IsMap() && map[std::string(key)]) return true;
    error(map, "missing required field '" + std::string(key) + "' in " + std::string(ctx));
    return false;
  }

  std::optional<double> number(const YAML::Node& n, std::string_view what) {
    try {
      const double v = n.as<double>();
      if (std::isfinite(v)) return v;
    } catch (const YAML::Exception&) {
    }
    error(n, std::string(what) + " must be a finite number");
    return std::nullopt;
  }

  double number_or(const YAML::Node& map, std::string_view key, double fallback, std::string_view ctx) {
    const auto n = map[std::string(key)];
    if (!n) return fallback;
    return number(n, std::string(ctx) + "." + std::string(key)).value_or(fallback);
  }

  std::optional<std::int64_t> integer(const YAML::Node& n, std::string_view what) {
    try {
      return n.as<std::int64_t>();
    } catch (const YAML::Exception&) {
    }
    error(n, std::string(what) + " must be an integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const YAML::Node& n, std::string_view what) {
    if (n.IsScalar()) return n.as<std::string>();
    error(n, std::string(what) + " must be a string");
    return std::nullopt;
  }

  std::optional<bool> boolean(const YAML::Node& n, std::string_view what) {
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
    }
    error(n, std::string(what) + " must be true or false");
    return std::nullopt;
  }

  std::optional<Eigen::Vector2d> pair(const YAML::Node& n, std::string_view what) {
    if (!n.IsSequence() || n.size() != 2) {
      error(n, std::string(what) + " must be a two-element list");
      return std::nullopt;
    }
    const auto a = number(n[0], what);
    const auto b = number(n[1], what);
    if (!a || !b) return std::nullopt;
    return Eigen::Vector2d{*a, *b};
  }

  /// Runs a struct-level validate() and records its message at `n`.
  template <class F>
  void invariant(const YAML::Node& n, F&& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      error(n, e.what());
    }
  }

 private:
  std::string origin_;
  std::vector<std::string> errors_;
};

inline YAML::Node load_yaml(const std::string& text, const std::string& origin) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError({origin + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                           ": " + e.msg});
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::optional<ControllerKind> parse_kind(std::string_view s) {
  if (s == "optimal" || s == "oc") return ControllerKind::Optimal;
  if (s == "droop") return ControllerKind::Droop;
  return std::nullopt;
}

/// Controller block. `setpoint: initial` leaves `*initial_setpoint` set and the
/// caller fills the setpoint from the initial operating point.
inline void read_controller(YamlReader& r, const YAML::Node& n, ControllerKind& kind, ControllerConfig& cfg,
                            DroopParams& droop, bool& droop_v_nom_given, bool& setpoint_initial, bool allow_initial) {
  if (!r.expect_map(n, "controller")) return;
  r.check_keys(n, {"kind", "mode", "setpoint", "gamma", "rho", "step_size", "i_max", "estimator_gain", "droop"},
               "controller");
  if (const auto k = n["kind"]) {
    if (const auto s = r.string(k, "controller.kind")) {
      if (const auto pk = parse_kind(*s)) kind = *pk;
      else r.error(k, "controller.kind must be 'optimal' or 'droop'");
    }
  }
  if (const auto m = n["mode"]) {
    if (const auto s = r.string(m, "controller.mode")) {
      if (const auto pm = parse_tracking_mode(*s)) cfg.mode = *pm;
      else r.error(m, "controller.mode must be one of pq, pv2, qv2");
    }
  }
  if (r.require(n, "setpoint", "controller")) {
    const auto sp = n["setpoint"];
    if (sp.IsScalar() && sp.as<std::string>() == "initial") {
      if (allow_initial) setpoint_initial = true;
      else r.error(sp, "controller.setpoint 'initial' is only available for single-bus scenarios");
    } else if (const auto v = r.pair(sp, "controller.setpoint")) {
      cfg.setpoint = *v;
    }
  }
  cfg.gamma = r.number_or(n, "gamma", cfg.gamma, "controller");
  cfg.rho = r.number_or(n, "rho", cfg.rho, "controller");
  cfg.step_size = r.number_or(n, "step_size", cfg.step_size, "controller");
  cfg.i_max = r.number_or(n, "i_max", cfg.i_max, "controller");
  cfg.estimator_gain = r.number_or(n, "estimator_gain", cfg.estimator_gain, "controller");
  r.invariant(n, [&] { cfg.validate(); });
  droop.i_max = cfg.i_max;
  if (const auto d = n["droop"]) {
    if (r.expect_map(d, "controller.droop")) {
      r.check_keys(d, {"m_p_hz", "m_q", "m_v2", "filter_tau", "v_nom"}, "controller.droop");
      droop.m_p_hz = r.number_or(d, "m_p_hz", droop.m_p_hz, "droop");
      droop.m_q = r.number_or(d, "m_q", droop.m_q, "droop");
      droop.m_v2 = r.number_or(d, "m_v2", droop.m_v2, "droop");
      droop.filter_tau = r.number_or(d, "filter_tau", droop.filter_tau, "droop");
      if (d["v_nom"]) {
        droop.v_nom = r.number_or(d, "v_nom", droop.v_nom, "droop");
        droop_v_nom_given = true;
      }
      r.invariant(d, [&] { droop.validate(); });
    }
  }
}

inline std::optional<BusKind> parse_bus_kind(std::string_view s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "inverter") return BusKind::Inverter;
  if (s == "passive" || s == "load") return BusKind::Passive;
  return std::nullopt;
}

inline CaseSpec read_case(YamlReader& r, const YAML::Node& root) {
  CaseSpec c;
  if (!root || root.IsNull()) {
    for (auto key : {"buses", "branches", "inverters"}) r.error(root, std::string("missing required field '") + key + "' in case");
    return c;
  }
  if (!r.expect_map(root, "case file")) return c;
  r.check_keys(root, {"name", "base_mva", "slack_voltage", "power_scale", "buses", "branches", "inverters"}, "case");
  if (const auto n = root["name"]) c.name = r.string(n, "name").value_or("");
  if (const auto n = root["base_mva"]) r.number(n, "base_mva");
  if (const auto n = root["slack_voltage"]) {
    if (const auto v = r.pair(n, "slack_voltage")) c.slack_voltage = {(*v)(0), (*v)(1)};
  }
  c.power_scale = r.number_or(root, "power_scale", 1.5, "case");
  if (!(c.power_scale > 0)) r.error(root["power_scale"], "power_scale must be positive");

  std::set<int> ids;
  int slack_count = 0;
  std::set<int> inverter_buses_declared;
  if (r.require(root, "buses", "case") && r.expect_seq(root["buses"], "buses")) {
    for (const auto& b : root["buses"]) {
      if (!r.expect_map(b, "bus")) continue;
      r.check_keys(b, {"id", "type", "load", "shunt"}, "bus");
      BusSpec bus;
      if (r.require(b, "id", "bus")) {
        if (const auto id = r.integer(b["id"], "bus.id")) {
          bus.id = static_cast<int>(*id);
          if (!ids.insert(bus.id).second) r.error(b["id"], "duplicate bus id " + std::to_string(bus.id));
        }
      }
      if (const auto t = b["type"]) {
        if (const auto s = r.string(t, "bus.type")) {
          if (const auto k = parse_bus_kind(*s)) bus.kind = *k;
          else r.error(t, "bus.type must be slack, inverter or passive");
        }
      }
      if (bus.kind == BusKind::Slack) ++slack_count;
      if (bus.kind == BusKind::Inverter) inverter_buses_declared.insert(bus.id);
      if (const auto l = b["load"])
        if (const auto v = r.pair(l, "bus.load")) bus.load = {(*v)(0), (*v)(1)};
      if (const auto s = b["shunt"])
        if (const auto v = r.pair(s, "bus.shunt")) bus.shunt = {(*v)(0), (*v)(1)};
      c.buses.push_back(bus);
    }
    if (slack_count != 1) r.error(root["buses"], "case needs exactly one slack bus (found " + std::to_string(slack_count) + ")");
  }

  if (r.require(root, "branches", "case") && r.expect_seq(root["branches"], "branches")) {
    for (const auto& b : root["branches"]) {
      if (!r.expect_map(b, "branch")) continue;
      r.check_keys(b, {"from", "to", "r", "x", "b", "tap"}, "branch");
      BranchSpec br;
      bool complete = true;
      for (auto key : {"from", "to", "x"}) complete = r.require(b, key, "branch") && complete;
      if (!complete) continue;
      br.from = static_cast<int>(r.integer(b["from"], "branch.from").value_or(0));
      br.to = static_cast<int>(r.integer(b["to"], "branch.to").value_or(0));
      br.r = r.number_or(b, "r", 0.0, "branch");
      br.x = r.number_or(b, "x", 0.0, "branch");
      br.shunt_b = r.number_or(b, "b", 0.0, "branch");
      br.tap = r.number_or(b, "tap", 1.0, "branch");
      if (!ids.count(br.from)) r.error(b["from"], "branch refers to unknown bus " + std::to_string(br.from));
      if (!ids.count(br.to)) r.error(b["to"], "branch refers to unknown bus " + std::to_string(br.to));
      c.branches.push_back(br);
    }
  }

  if (r.require(root, "inverters", "case") && r.expect_seq(root["inverters"], "inverters")) {
    std::set<int> attached;
    for (const auto& n : root["inverters"]) {
      if (!r.expect_map(n, "inverter")) continue;
      r.check_keys(n, {"bus", "filter", "controller"}, "inverter");
      InverterAttachment inv;
      if (r.require(n, "bus", "inverter")) {
        inv.bus = static_cast<int>(r.integer(n["bus"], "inverter.bus").value_or(0));
        if (!ids.count(inv.bus)) r.error(n["bus"], "inverter attached to unknown bus " + std::to_string(inv.bus));
        else if (!inverter_buses_declared.count(inv.bus))
          r.error(n["bus"], "inverter attached to bus " + std::to_string(inv.bus) + " which is not of type inverter");
        if (!attached.insert(inv.bus).second) r.error(n["bus"], "two inverters on bus " + std::to_string(inv.bus));
      }
      if (const auto f = n["filter"]) {
        if (r.expect_map(f, "inverter.filter")) {
          r.check_keys(f, {"r", "x"}, "inverter.filter");
          inv.filter_r = r.number_or(f, "r", inv.filter_r, "filter");
          inv.filter_x = r.number_or(f, "x", inv.filter_x, "filter");
        }
      }
      bool v_nom_given = false, unused = false;
      if (r.require(n, "controller", "inverter"))
        read_controller(r, n["controller"], inv.kind, inv.controller, inv.droop, v_nom_given, unused, false);
      if (!v_nom_given && inv.controller.mode == TrackingMode::PV2 && inv.controller.setpoint(1) > 0)
        inv.droop.v_nom = std::sqrt(inv.controller.setpoint(1));
      c.inverters.push_back(inv);
    }
    for (int b : inverter_buses_declared)
      if (!attached.count(b)) r.error(root["inverters"], "bus " + std::to_string(b) + " is of type inverter but has no inverter");
  }
  if (r.ok()) r.invariant(root, [&] { c.validate(); });
  return c;
}

inline EventSchedule read_events(YamlReader& r, const YAML::Node& n, const std::vector<int>& inverter_buses, bool single_bus) {
  EventSchedule s;
  if (!r.expect_seq(n, "events")) return s;
  for (const auto& e : n) {
    if (!r.expect_map(e, "event")) continue;
    r.check_keys(e, {"time", "type", "inverter", "setpoint", "factor", "variance", "tau"}, "event");
    if (!r.require(e, "time", "event") || !r.require(e, "type", "event")) continue;
    TimedEvent te;
    te.time = r.number(e["time"], "event.time").value_or(0.0);
    const auto type = r.string(e["type"], "event.type").value_or("");
    if (type == "setpoint") {
      SetpointChange sc;
      if (r.require(e, "setpoint", "setpoint event"))
        if (const auto v = r.pair(e["setpoint"], "event.setpoint")) sc.setpoint = *v;
      if (const auto inv = e["inverter"]) {
        if (!(inv.IsScalar() && inv.as<std::string>() == "all")) {
          const auto id = r.integer(inv, "event.inverter");
          if (id) {
            if (single_bus) {
              if (*id != 0) r.error(inv, "single-bus scenarios have only inverter 0");
              sc.inverter = 0;
            } else {
              const auto it = std::find(inverter_buses.begin(), inverter_buses.end(), static_cast<int>(*id));
              if (it == inverter_buses.end()) r.error(inv, "no inverter on bus " + std::to_string(*id));
              else sc.inverter = static_cast<int>(it - inverter_buses.begin());
            }
          }
        }
      }
      te.event = sc;
    } else if (type == "grid_voltage_scale") {
      GridVoltageScale g;
      if (r.require(e, "factor", "grid_voltage_scale event")) g.factor = r.number(e["factor"], "event.factor").value_or(1.0);
      te.event = g;
    } else if (type == "noise_burst") {
      NoiseBurst nb;
      if (r.require(e, "variance", "noise_burst event")) nb.variance = r.number(e["variance"], "event.variance").value_or(0.0);
      if (r.require(e, "tau", "noise_burst event")) nb.tau = r.number(e["tau"], "event.tau").value_or(1.0);
      te.event = nb;
    } else {
      r.error(e["type"], "event.type must be setpoint, grid_voltage_scale or noise_burst");
      continue;
    }
    s.events.push_back(te);
  }
  r.invariant(n, [&] { s.validate(single_bus ? 1 : inverter_buses.size()); });
  return s;
}

}  // namespace detail

inline CaseSpec parse_case_text(const std::string& text, const std::string& origin = "<case>") {
  detail::YamlReader r(origin);
  const auto root = detail::load_yaml(text, origin);
  auto c = detail::read_case(r, root);
  if (!r.ok()) throw ValidationError(r.errors());
  return c;
}

inline CaseSpec parse_case(const std::filesystem::path& path) { return parse_case_text(detail::read_file(path), path.string()); }

/// `base_dir` resolves relative case-file paths.
inline ScenarioFile parse_scenario_text(const std::string& text, const std::string& origin = "<scenario>",
                                        const std::filesystem::path& base_dir = {}) {
  detail::YamlReader r(origin);
  const auto root = detail::load_yaml(text, origin);
  ScenarioFile out;
  if (!root || root.IsNull()) {
    for (auto key : {"dt", "duration", "network"}) r.error(root, std::string("missing required field '") + key + "' in scenario");
    throw ValidationError(r.errors());
  }
  if (!r.expect_map(root, "scenario")) throw ValidationError(r.errors());
  r.check_keys(root, {"name", "dt", "duration", "seed", "network", "initial_current", "controller", "events", "output", "init"},
               "scenario");
  if (const auto n = root["name"]) out.name = r.string(n, "name").value_or("");
  double dt = 0.0, duration = 0.0;
  std::uint64_t seed = 1;
  if (r.require(root, "dt", "scenario")) {
    dt = r.number(root["dt"], "dt").value_or(0.0);
    if (!(dt > 0)) r.error(root["dt"], "dt must be positive");
  }
  if (r.require(root, "duration", "scenario")) {
    duration = r.number(root["duration"], "duration").value_or(0.0);
    if (dt > 0 && !(duration >= dt)) r.error(root["duration"], "duration must be at least dt");
  }
  if (const auto n = root["seed"]) {
    const auto v = r.integer(n, "seed");
    if (v && *v < 0) r.error(n, "seed must be nonnegative");
    seed = static_cast<std::uint64_t>(v.value_or(1));
  }
  if (const auto o = root["output"]) {
    if (r.expect_map(o, "output")) {
      r.check_keys(o, {"plots"}, "output");
      if (o["plots"]) out.plots = r.boolean(o["plots"], "output.plots").value_or(true);
    }
  }

  if (!r.require(root, "network", "scenario")) {
    if (!root["controller"]) r.error(root, "missing required field 'controller' in scenario");
    throw ValidationError(r.errors());
  }
  const auto net = root["network"];
  std::string type;
  if (r.expect_map(net, "network") && r.require(net, "type", "network"))
    type = r.string(net["type"], "network.type").value_or("");

  if (type == "single_bus") {
    r.check_keys(net, {"type", "filter", "equivalent", "grid_voltage", "power_scale"}, "network");
    SingleBusScenario sc;
    sc.dt = dt;
    sc.duration = duration;
    sc.seed = seed;
    DqVector e{1.0, 0.0};
    if (const auto g = net["grid_voltage"])
      if (const auto v = r.pair(g, "network.grid_voltage")) e = DqVector::from_eigen(*v);
    const double kappa = r.number_or(net, "power_scale", 1.5, "network");
    if (!(kappa > 0)) r.error(net["power_scale"], "power_scale must be positive");
    const auto f = net["filter"];
    const auto eq = net["equivalent"];
    if (f && eq) r.error(net, "network takes either 'filter' or 'equivalent', not both");
    if (f) {
      if (r.expect_map(f, "network.filter")) {
        r.check_keys(f, {"r_f", "l_f", "c_f", "r_g", "l_g", "omega", "omega_base"}, "network.filter");
        FilterLineParams p;
        p.r_f = r.number_or(f, "r_f", 0.0, "filter");
        p.l_f = r.number_or(f, "l_f", 0.0, "filter");
        p.c_f = r.number_or(f, "c_f", 0.0, "filter");
        p.r_g = r.number_or(f, "r_g", 0.0, "filter");
        p.l_g = r.number_or(f, "l_g", 0.0, "filter");
        p.omega = r.number_or(f, "omega", p.omega, "filter");
        p.omega_base = r.number_or(f, "omega_base", p.omega_base, "filter");
        r.invariant(f, [&] { sc.plant = thevenin_reduce(p, e, kappa); });
      }
    } else if (eq) {
      if (r.expect_map(eq, "network.equivalent")) {
        r.check_keys(eq, {"r", "x"}, "network.equivalent");
        for (auto key : {"r", "x"}) r.require(eq, key, "network.equivalent");
        sc.plant = EquivalentNetwork::from_rx(r.number_or(eq, "r", 0.0, "equivalent"), r.number_or(eq, "x", 0.0, "equivalent"), e,
                                              kappa);
      }
    } else {
      r.error(net, "network needs 'filter' or 'equivalent'");
    }
    if (const auto i0 = root["initial_current"])
      if (const auto v = r.pair(i0, "initial_current")) sc.initial_current = DqVector::from_eigen(*v);
    bool v_nom_given = false, sp_initial = false;
    if (r.require(root, "controller", "scenario"))
      detail::read_controller(r, root["controller"], sc.kind, sc.oc, sc.droop, v_nom_given, sp_initial, true);
    if (r.ok()) {
      if (sp_initial) sc.oc.setpoint = select_outputs(sc.oc.mode, compute_outputs(sc.initial_current, sc.plant));
      if (!v_nom_given) sc.droop.v_nom = terminal_voltage(sc.initial_current, sc.plant).norm();
    }
    if (const auto ev = root["events"]) sc.events = detail::read_events(r, ev, {}, true);
    if (root["init"]) r.error(root["init"], "'init' only applies to network scenarios");
    if (r.ok()) r.invariant(root, [&] { sc.validate(); });
    out.sim = sc;
  } else if (type == "case") {
    r.check_keys(net, {"type", "case_file"}, "network");
    NetworkScenario sc;
    sc.dt = dt;
    sc.duration = duration;
    sc.seed = seed;
    if (root["controller"]) r.error(root["controller"], "network scenarios configure controllers in the case file");
    if (root["initial_current"]) r.error(root["initial_current"], "network scenarios start from their initialization");
    if (r.require(net, "case_file", "network")) {
      const auto rel = r.string(net["case_file"], "network.case_file").value_or("");
      std::filesystem::path p = rel;
      if (p.is_relative()) p = base_dir / p;
      out.case_file = p;
      if (!std::filesystem::exists(p)) {
        r.error(net["case_file"], "case file not found: " + p.string());
      } else {
        try {
          sc.grid = parse_case(p);
        } catch (const ValidationError& e) {
          for (const auto& m : e.errors()) r.error_at(r.where(net["case_file"]), "in case file: " + m);
        }
      }
    }
    if (const auto in = root["init"]) {
      if (r.expect_map(in, "init")) {
        r.check_keys(in, {"tolerance", "max_steps", "load_iterations"}, "init");
        sc.init_tolerance = r.number_or(in, "tolerance", sc.init_tolerance, "init");
        if (in["max_steps"]) sc.init_max_steps = static_cast<std::size_t>(r.integer(in["max_steps"], "init.max_steps").value_or(1));
        if (in["load_iterations"])
          sc.load_iterations = static_cast<int>(r.integer(in["load_iterations"], "init.load_iterations").value_or(1));
      }
    }
    std::vector<int> buses;
    for (const auto& inv : sc.grid.inverters) buses.push_back(inv.bus);
    if (const auto ev = root["events"]) sc.events = detail::read_events(r, ev, buses, false);
    if (r.ok()) r.invariant(root, [&] { sc.validate(); });
    out.sim = sc;
  } else if (!type.empty()) {
    r.error(net["type"], "network.type must be 'single_bus' or 'case'");
  }
  if (!r.ok()) throw ValidationError(r.errors());
  return out;
}

inline ScenarioFile parse_scenario(const std::filesystem::path& path) {
  auto s = parse_scenario_text(detail::read_file(path), path.string(), path.parent_path());
  s.source = path;
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

inline ScenarioFile preset_scenario(std::string_view name) {
  ScenarioFile f;
  f.name = std::string(name);
  if (name == "setpoint_step_oc") f.sim = presets::setpoint_step(ControllerKind::Optimal);
  else if (name == "setpoint_step_droop") f.sim = presets::setpoint_step(ControllerKind::Droop);
  else if (name == "voltage_drop_oc") f.sim = presets::voltage_drop(ControllerKind::Optimal);
  else if (name == "voltage_drop_droop") f.sim = presets::voltage_drop(ControllerKind::Droop);
  else if (name == "ieee14_dt001") f.sim = presets::ieee14_dt001();
  else if (name == "ieee14_dt005") f.sim = presets::ieee14_dt005();
  else throw ConfigError("unknown preset '" + std::string(name) + "'");
  return f;
}

}  // namespace convctl
