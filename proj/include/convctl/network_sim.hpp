#pragma once

// Scenario engine. Two plants share one fixed-step loop shape:
//
//  * single bus: one converter behind its Thevenin equivalent (quasi-static
//    V = Z I + E), driven by the optimal controller or the droop baseline;
//  * network: converters inject their commanded currents at internal nodes
//    behind RL filters; every step is one linear nodal solve with the slack
//    bus as the fixed voltage reference and loads as constant admittances.
//
// Records hold the plant state applied during [t, t + dt). Frequencies are
// derived afterwards from the recorded voltage phasors.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "convctl/droop_controller.hpp"
#include "convctl/dq_network.hpp"
#include "convctl/errors.hpp"
#include "convctl/feasible_region.hpp"
#include "convctl/sdp_controller.hpp"

namespace convctl {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Events

struct SetpointChange {
  int inverter = -1;  ///< index into the inverter list, -1 = all
  OutputPoint setpoint = OutputPoint::Zero();
};

struct GridVoltageScale {
  double factor = 1.0;  ///< relative to the initial grid/slack voltage
};

struct NoiseBurst {
  double variance = 0.0;  ///< initial variance of each dq component
  double tau = 0.0;       ///< [s] decay constant of the variance
};

using Event = std::variant<SetpointChange, GridVoltageScale, NoiseBurst>;

struct TimedEvent {
  double time = 0.0;
  Event event;
};

struct EventSchedule {
  std::vector<TimedEvent> events;

  void validate(std::size_t inverter_count) const {
    for (std::size_t i = 1; i < events.size(); ++i)
      if (events[i].time < events[i - 1].time) throw ConfigError("event times must be nondecreasing");
    for (const auto& e : events) {
      if (!(e.time >= 0)) throw ConfigError("event times must be nonnegative");
      if (const auto* s = std::get_if<SetpointChange>(&e.event)) {
        if (s->inverter >= static_cast<int>(inverter_count) || s->inverter < -1)
          throw ConfigError("setpoint event refers to unknown inverter " + std::to_string(s->inverter));
      } else if (const auto* g = std::get_if<GridVoltageScale>(&e.event)) {
        if (!(g->factor > 0)) throw ConfigError("grid voltage scale must be positive");
      } else if (const auto* n = std::get_if<NoiseBurst>(&e.event)) {
        if (!(n->variance >= 0) || !(n->tau > 0)) throw ConfigError("noise burst needs variance >= 0 and tau > 0");
      }
    }
  }
};

namespace detail {

/// Active decaying measurement noise, N(0, var0 exp(-(t - t0)/tau)) per component.
struct NoiseProcess {
  double variance = 0.0;
  double tau = 1.0;
  double start = 0.0;
  bool active = false;

  double stddev(double t) const {
    if (!active) return 0.0;
    return std::sqrt(variance * std::exp(-(t - start) / tau));
  }
};

inline bool event_due(double event_time, double t, double dt) { return event_time <= t + 1e-9 * dt; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Records

enum class ControllerKind { Optimal, Droop };

struct InverterSample {
  DqVector current;
  DqVector voltage;
  Outputs outputs;
  OutputPoint tracked = OutputPoint::Zero();  ///< (S1, S2) for the inverter's mode
  double current_mag = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  DqVector e_hat{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double freq_dev_hz = 0.0;
  bool flagged = false;
};

struct BusSample {
  cplx voltage;
  double freq_dev_hz = 0.0;
};

struct TimeSeriesRecord {
  double t = 0.0;
  std::vector<InverterSample> inverters;
  std::vector<BusSample> buses;
};

struct SimulationResult {
  std::vector<TimeSeriesRecord> records;
  std::vector<int> inverter_ids;  ///< bus id (network) or 0 (single bus)
  std::vector<int> bus_ids;
  std::vector<double> i_max;
  std::vector<ControllerKind> kinds;
  int controller_errors = 0;
  std::vector<std::string> error_messages;
  double dt = 0.0;
};

/// Unwrapped phase derivative / 2 pi: central differences inside, one-sided at the ends.
inline std::vector<double> frequency_trace(std::span<const cplx> phasors, double dt) {
  const std::size_t n = phasors.size();
  if (n < 3) throw ConfigError("frequency_trace: need at least 3 samples");
  std::vector<double> ang(n);
  ang[0] = std::arg(phasors[0]);
  for (std::size_t k = 1; k < n; ++k) {
    double step = std::arg(phasors[k]) - std::arg(phasors[k - 1]);
    step = std::remainder(step, 2.0 * std::numbers::pi);
    ang[k] = ang[k - 1] + step;
  }
  std::vector<double> f(n);
  const double two_pi = 2.0 * std::numbers::pi;
  f[0] = (ang[1] - ang[0]) / (dt * two_pi);
  f[n - 1] = (ang[n - 1] - ang[n - 2]) / (dt * two_pi);
  for (std::size_t k = 1; k + 1 < n; ++k) f[k] = (ang[k + 1] - ang[k - 1]) / (2.0 * dt * two_pi);
  return f;
}

namespace detail {
inline void fill_frequencies(SimulationResult& res) {
  const auto& rec = res.records;
  if (rec.size() < 3) return;
  std::vector<cplx> series(rec.size());
  for (std::size_t b = 0; b < rec.front().buses.size(); ++b) {
    for (std::size_t k = 0; k < rec.size(); ++k) series[k] = rec[k].buses[b].voltage;
    const auto f = frequency_trace(series, res.dt);
    for (std::size_t k = 0; k < rec.size(); ++k) res.records[k].buses[b].freq_dev_hz = f[k];
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Single converter on an infinite bus

struct SingleBusScenario {
  EquivalentNetwork plant;  ///< Z_eq and initial grid voltage
  ControllerKind kind = ControllerKind::Optimal;
  ControllerConfig oc;      ///< mode / setpoint / i_max also used by droop
  DroopParams droop;
  DqVector initial_current;
  double dt = 0.002;
  double duration = 1.0;
  EventSchedule events;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (!(duration >= dt)) throw ConfigError("duration must be at least dt");
    oc.validate();
    if (kind == ControllerKind::Droop) droop.validate();
    if (initial_current.norm() > oc.i_max + kMembershipTol) throw ConfigError("initial current exceeds i_max");
    events.validate(1);
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
};

inline SimulationResult run_single_bus(const SingleBusScenario& sc) {
  sc.validate();
  SimulationResult res;
  res.dt = sc.dt;
  res.inverter_ids = {0};
  res.bus_ids = {0};
  res.i_max = {sc.kind == ControllerKind::Droop ? sc.droop.i_max : sc.oc.i_max};
  res.kinds = {sc.kind};

  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  detail::NoiseProcess noise;

  ControllerConfig cfg = sc.oc;
  EquivalentNetwork plant = sc.plant;
  const DqVector e0 = sc.plant.e_dq;

  ControllerState oc_state = ControllerState::initial(sc.initial_current, e0);
  DroopState droop_state = droop_initial(sc.initial_current, plant);
  DqVector current = sc.initial_current;

  std::size_t next_event = 0;
  const std::size_t n = sc.steps();
  res.records.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * sc.dt;
    while (next_event < sc.events.events.size() && detail::event_due(sc.events.events[next_event].time, t, sc.dt)) {
      const auto& ev = sc.events.events[next_event++].event;
      if (const auto* s = std::get_if<SetpointChange>(&ev)) cfg.setpoint = s->setpoint;
      else if (const auto* g = std::get_if<GridVoltageScale>(&ev)) plant.e_dq = e0 * g->factor;
      else if (const auto* nb = std::get_if<NoiseBurst>(&ev)) noise = {nb->variance, nb->tau, t, true};
    }

    const DqVector v = terminal_voltage(current, plant);
    InverterSample s;
    s.current = current;
    s.voltage = v;
    s.outputs = compute_outputs(current, plant);
    s.tracked = select_outputs(cfg.mode, s.outputs);
    s.current_mag = current.norm();

    DqVector next = current;
    if (sc.kind == ControllerKind::Optimal) {
      const double sd = noise.stddev(t);
      DqVector v_meas = v;
      if (sd > 0) v_meas += DqVector{sd * normal(rng), sd * normal(rng)};
      const StepResult step = controller_step(oc_state, v_meas, current, cfg, plant);
      s.objective = step.objective_before;
      s.e_hat = step.state.e_hat;
      s.flagged = step.flagged;
      if (step.flagged) {
        ++res.controller_errors;
        res.error_messages.push_back("t=" + std::to_string(t) + ": " + step.error);
      }
      oc_state = step.state;
      next = step.command;
    } else {
      const auto step = droop_step(droop_state, s.outputs, cfg.setpoint, sc.droop, plant, sc.dt, cfg.mode);
      s.flagged = step.flagged;
      if (step.flagged) {
        ++res.controller_errors;
        res.error_messages.push_back("t=" + std::to_string(t) + ": droop voltage reference clamped");
      }
      droop_state = step.state;
      next = step.command;
    }

    TimeSeriesRecord rec;
    rec.t = t;
    rec.inverters.push_back(s);
    rec.buses.push_back({v.complex(), 0.0});
    res.records.push_back(std::move(rec));
    current = next;
  }
  detail::fill_frequencies(res);
  for (auto& r : res.records) r.inverters[0].freq_dev_hz = r.buses[0].freq_dev_hz;
  return res;
}

// ---------------------------------------------------------------------------
// Multi-bus network

enum class BusKind { Slack, Inverter, Passive };

struct BusSpec {
  int id = 0;
  BusKind kind = BusKind::Passive;
  cplx load{0.0, 0.0};   ///< consumed complex power at initialization
  cplx shunt{0.0, 0.0};  ///< fixed shunt admittance
};

struct BranchSpec {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double shunt_b = 0.0;  ///< total line charging
  double tap = 1.0;      ///< off-nominal ratio on the `from` side
};

struct InverterAttachment {
  int bus = 0;
  double filter_r = 0.01;
  double filter_x = 0.1;
  ControllerKind kind = ControllerKind::Optimal;
  ControllerConfig controller;  ///< setpoint = initialization target
  DroopParams droop;
};

struct CaseSpec {
  std::string name;
  std::vector<BusSpec> buses;
  std::vector<BranchSpec> branches;
  std::vector<InverterAttachment> inverters;
  cplx slack_voltage{1.0, 0.0};
  double power_scale = 1.0;

  void validate() const {
    std::set<int> ids;
    int slack = 0;
    for (const auto& b : buses) {
      if (!ids.insert(b.id).second) throw ConfigError("duplicate bus id " + std::to_string(b.id));
      if (b.kind == BusKind::Slack) ++slack;
    }
    if (slack != 1) throw ConfigError("case needs exactly one slack bus (found " + std::to_string(slack) + ")");
    for (const auto& br : branches) {
      if (!ids.count(br.from) || !ids.count(br.to))
        throw ConfigError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + " refers to an unknown bus");
      if (br.from == br.to) throw ConfigError("branch connects bus " + std::to_string(br.from) + " to itself");
      if (br.r < 0) throw ConfigError("branch resistance must be nonnegative");
      if (br.r == 0 && br.x == 0) throw ConfigError("branch impedance must be nonzero");
      if (!(br.tap > 0)) throw ConfigError("branch tap must be positive");
    }
    std::set<int> inv_buses;
    for (const auto& inv : inverters) {
      if (!ids.count(inv.bus)) throw ConfigError("inverter attached to unknown bus " + std::to_string(inv.bus));
      if (!inv_buses.insert(inv.bus).second) throw ConfigError("two inverters on bus " + std::to_string(inv.bus));
      if (inv.filter_r == 0 && inv.filter_x == 0) throw ConfigError("inverter filter impedance must be nonzero");
      inv.controller.validate();
      if (inv.kind == ControllerKind::Droop) inv.droop.validate();
    }
  }
};

/// Nodal admittance with bus nodes first (case order), then one internal
/// node per inverter behind its filter.
struct AdmittanceModel {
  Eigen::MatrixXcd y;
  std::size_t bus_count = 0;
  std::size_t slack = 0;
  std::map<int, std::size_t> bus_index;
  std::vector<std::size_t> inverter_node;
  std::vector<std::size_t> inverter_bus;

  std::size_t size() const { return static_cast<std::size_t>(y.rows()); }
};

/// Constant-admittance equivalent of each bus load at the given voltage magnitudes.
inline std::vector<cplx> load_admittances(const std::vector<BusSpec>& buses, std::span<const double> v_mag) {
  std::vector<cplx> y(buses.size());
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const double vm = v_mag.empty() ? 1.0 : v_mag[i];
    y[i] = std::conj(buses[i].load) / (vm * vm);
  }
  return y;
}

inline AdmittanceModel build_admittance(const std::vector<BusSpec>& buses, const std::vector<BranchSpec>& branches,
                                        const std::vector<InverterAttachment>& inverters,
                                        std::span<const double> load_voltage_mag = {}) {
  if (!load_voltage_mag.empty() && load_voltage_mag.size() != buses.size())
    throw ConfigError("build_admittance: one load voltage per bus expected");
  AdmittanceModel m;
  m.bus_count = buses.size();
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!m.bus_index.emplace(buses[i].id, i).second) throw ConfigError("duplicate bus id " + std::to_string(buses[i].id));
    if (buses[i].kind == BusKind::Slack) m.slack = i;
  }
  const std::size_t n = buses.size() + inverters.size();
  m.y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::vector<std::size_t>> adj(n);

  auto at = [&](std::size_t i, std::size_t j) -> cplx& {
    return m.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };
  for (const auto& br : branches) {
    const auto f = m.bus_index.at(br.from);
    const auto t = m.bus_index.at(br.to);
    const cplx ys = 1.0 / cplx{br.r, br.x};
    const cplx ych{0.0, 0.5 * br.shunt_b};
    at(f, f) += ys / (br.tap * br.tap) + ych;
    at(t, t) += ys + ych;
    at(f, t) -= ys / br.tap;
    at(t, f) -= ys / br.tap;
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  const auto y_load = load_admittances(buses, load_voltage_mag);
  for (std::size_t i = 0; i < buses.size(); ++i) at(i, i) += buses[i].shunt + y_load[i];

  for (std::size_t j = 0; j < inverters.size(); ++j) {
    const auto b = m.bus_index.at(inverters[j].bus);
    const std::size_t node = buses.size() + j;
    const cplx yf = 1.0 / cplx{inverters[j].filter_r, inverters[j].filter_x};
    at(b, b) += yf;
    at(node, node) += yf;
    at(b, node) -= yf;
    at(node, b) -= yf;
    adj[b].push_back(node);
    adj[node].push_back(b);
    m.inverter_node.push_back(node);
    m.inverter_bus.push_back(b);
  }

  std::vector<bool> seen(n, false);
  std::queue<std::size_t> todo;
  todo.push(m.slack);
  seen[m.slack] = true;
  while (!todo.empty()) {
    const auto u = todo.front();
    todo.pop();
    for (auto v : adj[u])
      if (!seen[v]) { seen[v] = true; todo.push(v); }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i])
      throw ConfigError("network is disconnected: node " +
                        (i < buses.size() ? "bus " + std::to_string(buses[i].id) : "inverter " + std::to_string(i - buses.size())) +
                        " is not reachable from the slack bus");
  return m;
}

/// An inverter node either holds a fixed internal voltage or injects a fixed current.
struct InverterSource {
  enum class Type { Voltage, Current } type = Type::Current;
  cplx value{0.0, 0.0};

  static InverterSource voltage(cplx v) { return {Type::Voltage, v}; }
  static InverterSource current(cplx i) { return {Type::Current, i}; }
};

struct NetworkSolution {
  Eigen::VectorXcd voltages;             ///< every node
  std::vector<cplx> inverter_currents;   ///< injected into the network at the internal node
  cplx slack_current{0.0, 0.0};
  double kcl_residual = 0.0;             ///< max |Y V - I| over nodes without a voltage source
};

inline NetworkSolution solve_network(const AdmittanceModel& m, std::span<const InverterSource> sources, cplx slack_voltage) {
  if (sources.size() != m.inverter_node.size()) throw ConfigError("solve_network: one source per inverter expected");
  const std::size_t n = m.size();
  std::vector<int> fixed(n, 0);  // 1 = known voltage
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n));
  fixed[m.slack] = 1;
  v(static_cast<Eigen::Index>(m.slack)) = slack_voltage;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const auto node = static_cast<Eigen::Index>(m.inverter_node[j]);
    if (sources[j].type == InverterSource::Type::Voltage) {
      fixed[m.inverter_node[j]] = 1;
      v(node) = sources[j].value;
    } else {
      inj(node) = sources[j].value;
    }
  }
  std::vector<Eigen::Index> unknown, known;
  for (std::size_t i = 0; i < n; ++i) (fixed[i] ? known : unknown).push_back(static_cast<Eigen::Index>(i));

  const auto nu = static_cast<Eigen::Index>(unknown.size());
  Eigen::MatrixXcd a(nu, nu);
  Eigen::VectorXcd rhs(nu);
  for (Eigen::Index r = 0; r < nu; ++r) {
    rhs(r) = inj(unknown[r]);
    for (auto k : known) rhs(r) -= m.y(unknown[r], k) * v(k);
    for (Eigen::Index c = 0; c < nu; ++c) a(r, c) = m.y(unknown[r], unknown[c]);
  }
  if (nu > 0) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
    if (!lu.isInvertible()) throw NumericalError("solve_network: reduced nodal matrix is singular");
    const Eigen::VectorXcd vu = lu.solve(rhs);
    for (Eigen::Index r = 0; r < nu; ++r) v(unknown[r]) = vu(r);
  }

  NetworkSolution sol;
  sol.voltages = v;
  const Eigen::VectorXcd yv = m.y * v;
  for (auto r : unknown) sol.kcl_residual = std::max(sol.kcl_residual, std::abs(yv(r) - inj(r)));
  sol.slack_current = yv(static_cast<Eigen::Index>(m.slack));
  for (std::size_t j = 0; j < sources.size(); ++j)
    sol.inverter_currents.push_back(yv(static_cast<Eigen::Index>(m.inverter_node[j])));
  return sol;
}

/// Thevenin equivalent at inverter j's internal node with the slack shorted
/// and the other inverters open (current sources). The source voltage is the
/// open-circuit voltage for the given other-inverter currents (zero if empty).
inline EquivalentNetwork local_thevenin(const AdmittanceModel& m, std::size_t j, cplx slack_voltage,
                                        std::span<const cplx> other_currents = {}, double power_scale = 1.0) {
  if (j >= m.inverter_node.size()) throw ConfigError("local_thevenin: unknown inverter");
  const std::size_t n = m.size();
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i != m.slack) keep.push_back(static_cast<Eigen::Index>(i));
  const auto nk = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXcd yr(nk, nk);
  for (Eigen::Index r = 0; r < nk; ++r)
    for (Eigen::Index c = 0; c < nk; ++c) yr(r, c) = m.y(keep[r], keep[c]);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(yr);
  if (!lu.isInvertible()) throw NumericalError("local_thevenin: reduced nodal matrix is singular");
  const auto pos = static_cast<Eigen::Index>(std::find(keep.begin(), keep.end(), static_cast<Eigen::Index>(m.inverter_node[j])) - keep.begin());
  Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(nk);
  unit(pos) = 1.0;
  const cplx z = lu.solve(unit)(pos);

  std::vector<InverterSource> src(m.inverter_node.size(), InverterSource::current(0.0));
  for (std::size_t k = 0; k < src.size() && k < other_currents.size(); ++k)
    if (k != j) src[k] = InverterSource::current(other_currents[k]);
  const auto open = solve_network(m, src, slack_voltage);
  return EquivalentNetwork::from_rx(z.real(), z.imag(), DqVector::from_complex(open.voltages(static_cast<Eigen::Index>(m.inverter_node[j]))),
                                    power_scale);
}

struct NetworkScenario {
  CaseSpec grid;
  double dt = 0.01;
  double duration = 3.0;
  EventSchedule events;
  std::uint64_t seed = 1;
  double init_tolerance = 1e-8;     ///< per-step current change that ends the pre-roll
  std::size_t init_max_steps = 50000;
  int load_iterations = 20;

  void validate() const {
    grid.validate();
    if (!(dt > 0)) throw ConfigError("dt must be positive");
    if (!(duration >= dt)) throw ConfigError("duration must be at least dt");
    events.validate(grid.inverters.size());
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
};

/// Equilibrium the pre-roll settles on: admittance (with load equivalents),
/// frozen controller impedances and the converged controller states.
struct NetworkInitialization {
  AdmittanceModel model;
  std::vector<EquivalentNetwork> controller_models;
  std::vector<ControllerState> states;
  std::vector<DroopState> droop_states;
  std::vector<double> load_voltage_mag;
  NetworkSolution solution;
  std::size_t preroll_steps = 0;
};

namespace detail {

struct InverterMeasurement {
  DqVector v;
  DqVector i;
  Outputs outputs;
};

inline InverterMeasurement measure(const AdmittanceModel& m, const NetworkSolution& sol, std::size_t j, double power_scale) {
  InverterMeasurement me;
  me.v = DqVector::from_complex(sol.voltages(static_cast<Eigen::Index>(m.inverter_node[j])));
  me.i = DqVector::from_complex(sol.inverter_currents[j]);
  me.outputs = outputs_from_voltage(me.i, me.v, power_scale);
  return me;
}

/// Stepping state shared by the pre-roll and the main run.
struct NetworkStepper {
  const CaseSpec* grid = nullptr;
  const AdmittanceModel* model = nullptr;
  std::vector<EquivalentNetwork> controller_models;
  std::vector<ControllerConfig> configs;
  std::vector<ControllerState> states;
  std::vector<DroopState> droop_states;
  std::vector<bool> initialized;
  cplx slack_voltage{1.0, 0.0};

  std::vector<InverterSource> sources() const {
    std::vector<InverterSource> s;
    for (const auto& st : states) s.push_back(InverterSource::current(st.current.complex()));
    return s;
  }

  struct StepOut {
    std::vector<DqVector> commands;
    std::vector<InverterSample> samples;
    std::vector<std::string> errors;
  };

  StepOut step(const NetworkSolution& sol, double dt, const std::vector<DqVector>& noise) {
    StepOut out;
    const std::size_t n = states.size();
    for (std::size_t j = 0; j < n; ++j) {
      const auto me = measure(*model, sol, j, grid->power_scale);
      const auto& inv = grid->inverters[j];
      InverterSample s;
      s.current = me.i;
      s.voltage = me.v;
      s.outputs = me.outputs;
      s.tracked = select_outputs(configs[j].mode, me.outputs);
      s.current_mag = me.i.norm();
      DqVector cmd = states[j].current;
      if (inv.kind == ControllerKind::Optimal) {
        if (!initialized[j]) {
          states[j].e_hat = me.v - impedance_matrix(controller_models[j]).apply(me.i);
          initialized[j] = true;
        }
        const StepResult r = controller_step(states[j], me.v + noise[j], me.i, configs[j], controller_models[j]);
        s.objective = r.objective_before;
        s.e_hat = r.state.e_hat;
        s.flagged = r.flagged;
        if (r.flagged) out.errors.push_back("inverter " + std::to_string(inv.bus) + ": " + r.error);
        states[j] = r.state;
        cmd = r.command;
      } else {
        // droop acts on the true local Thevenin source seen this step
        EquivalentNetwork plant = controller_models[j];
        plant.e_dq = me.v - impedance_matrix(plant).apply(me.i);
        if (!initialized[j]) {
          droop_states[j] = droop_initial(me.i, plant);
          initialized[j] = true;
        }
        const auto r = droop_step(droop_states[j], me.outputs, configs[j].setpoint, inv.droop, plant, dt, configs[j].mode);
        s.flagged = r.flagged;
        if (r.flagged) out.errors.push_back("inverter " + std::to_string(inv.bus) + ": droop voltage reference clamped");
        droop_states[j] = r.state;
        states[j].current = r.command;
        cmd = r.command;
      }
      out.commands.push_back(cmd);
      out.samples.push_back(s);
    }
    return out;
  }
};

}  // namespace detail

/// Pre-roll from zero current at the case's own setpoints until the per-step
/// current change drops below `init_tolerance`; load admittances are refreshed
/// from the settled voltages until they stop moving.
inline NetworkInitialization initialize_network(const NetworkScenario& sc) {
  sc.validate();
  const auto& grid = sc.grid;
  const std::size_t ni = grid.inverters.size();
  NetworkInitialization init;
  init.load_voltage_mag.assign(grid.buses.size(), 1.0);

  std::vector<ControllerState> warm(ni, ControllerState::initial({0.0, 0.0}, {0.0, 0.0}));
  for (int it = 0; it < std::max(1, sc.load_iterations); ++it) {
    init.model = build_admittance(grid.buses, grid.branches, grid.inverters, init.load_voltage_mag);
    detail::NetworkStepper st;
    st.grid = &grid;
    st.model = &init.model;
    st.slack_voltage = grid.slack_voltage;
    st.states = warm;
    st.droop_states.assign(ni, DroopState{});
    st.initialized.assign(ni, false);
    for (std::size_t j = 0; j < ni; ++j) {
      st.controller_models.push_back(local_thevenin(init.model, j, grid.slack_voltage, {}, grid.power_scale));
      st.configs.push_back(grid.inverters[j].controller);
    }
    const std::vector<DqVector> no_noise(ni);
    std::size_t steps = 0;
    NetworkSolution sol;
    for (;; ++steps) {
      if (steps >= sc.init_max_steps) throw ConfigError("network initialization did not settle");
      const auto src = st.sources();
      sol = solve_network(init.model, src, st.slack_voltage);
      const auto out = st.step(sol, sc.dt, no_noise);
      double change = 0.0;
      for (std::size_t j = 0; j < ni; ++j)
        change = std::max(change, std::abs(out.commands[j].complex() - src[j].value));
      if (change < sc.init_tolerance) break;
    }
    init.preroll_steps += steps;
    init.controller_models = st.controller_models;
    init.states = st.states;
    init.droop_states = st.droop_states;
    init.solution = sol;
    warm = st.states;

    double moved = 0.0;
    for (std::size_t b = 0; b < grid.buses.size(); ++b) {
      const double vm = std::abs(sol.voltages(static_cast<Eigen::Index>(b)));
      moved = std::max(moved, std::abs(vm - init.load_voltage_mag[b]));
      init.load_voltage_mag[b] = vm;
    }
    if (moved < 1e-10) break;
  }
  return init;
}

inline SimulationResult run_network(const NetworkScenario& sc, const NetworkInitialization& init) {
  sc.validate();
  const auto& grid = sc.grid;
  const std::size_t ni = grid.inverters.size();
  SimulationResult res;
  res.dt = sc.dt;
  for (const auto& inv : grid.inverters) {
    res.inverter_ids.push_back(inv.bus);
    res.i_max.push_back(inv.kind == ControllerKind::Droop ? inv.droop.i_max : inv.controller.i_max);
    res.kinds.push_back(inv.kind);
  }
  for (const auto& b : grid.buses) res.bus_ids.push_back(b.id);

  detail::NetworkStepper st;
  st.grid = &grid;
  st.model = &init.model;
  st.slack_voltage = grid.slack_voltage;
  st.controller_models = init.controller_models;
  st.states = init.states;
  st.droop_states = init.droop_states;
  st.initialized.assign(ni, true);
  for (const auto& inv : grid.inverters) st.configs.push_back(inv.controller);

  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  detail::NoiseProcess noise;
  std::size_t next_event = 0;
  const std::size_t n = sc.steps();
  res.records.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * sc.dt;
    while (next_event < sc.events.events.size() && detail::event_due(sc.events.events[next_event].time, t, sc.dt)) {
      const auto& ev = sc.events.events[next_event++].event;
      if (const auto* s = std::get_if<SetpointChange>(&ev)) {
        for (std::size_t j = 0; j < ni; ++j)
          if (s->inverter < 0 || static_cast<std::size_t>(s->inverter) == j) st.configs[j].setpoint = s->setpoint;
      } else if (const auto* g = std::get_if<GridVoltageScale>(&ev)) {
        st.slack_voltage = grid.slack_voltage * g->factor;
      } else if (const auto* nb = std::get_if<NoiseBurst>(&ev)) {
        noise = {nb->variance, nb->tau, t, true};
      }
    }

    const auto sol = solve_network(init.model, st.sources(), st.slack_voltage);
    std::vector<DqVector> meas_noise(ni);
    const double sd = noise.stddev(t);
    if (sd > 0)
      for (auto& nz : meas_noise) nz = {sd * normal(rng), sd * normal(rng)};
    auto out = st.step(sol, sc.dt, meas_noise);
    for (auto& e : out.errors) {
      ++res.controller_errors;
      res.error_messages.push_back("t=" + std::to_string(t) + ": " + e);
    }

    TimeSeriesRecord rec;
    rec.t = t;
    rec.inverters = std::move(out.samples);
    for (std::size_t b = 0; b < grid.buses.size(); ++b) rec.buses.push_back({sol.voltages(static_cast<Eigen::Index>(b)), 0.0});
    res.records.push_back(std::move(rec));
    for (std::size_t j = 0; j < ni; ++j) st.states[j].current = out.commands[j];
  }
  detail::fill_frequencies(res);
  for (auto& r : res.records)
    for (std::size_t j = 0; j < ni; ++j) r.inverters[j].freq_dev_hz = r.buses[init.model.inverter_bus[j]].freq_dev_hz;
  return res;
}

inline SimulationResult run_network(const NetworkScenario& sc) { return run_network(sc, initialize_network(sc)); }

}  // namespace convctl
