#pragma once

// Run summaries, CSV and JSON emission, SVG plots and the run-and-report
// driver behind the command-line tool. Every summary statistic is a function
// of the emitted timeseries rows (plus each inverter's current limit), so
// summarize_rows() over a parsed CSV reproduces summarize().

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convctl/errors.hpp"
#include "convctl/feasible_region.hpp"
#include "convctl/network_sim.hpp"
#include "convctl/scenario_io.hpp"

namespace convctl {

inline constexpr double kConvergenceStep = 1e-6;
inline constexpr std::size_t kConvergenceSustain = 50;
inline constexpr double kSafetyTol = 1e-9;

inline const std::vector<std::string>& timeseries_columns() {
  static const std::vector<std::string> cols = {"t",  "inverter_id", "I_d", "I_q", "I_mag",     "V_d",     "V_q",     "P",
                                                "Q",  "V2",          "S1",  "S2",  "objective", "E_hat_d", "E_hat_q", "freq_dev_hz"};
  return cols;
}

struct CsvRow {
  double t = 0.0;
  int inverter_id = 0;
  double i_d = 0, i_q = 0, i_mag = 0, v_d = 0, v_q = 0, p = 0, q = 0, v2 = 0, s1 = 0, s2 = 0;
  double objective = 0, e_hat_d = 0, e_hat_q = 0, freq_dev_hz = 0;
};

struct InverterSummary {
  int id = 0;
  bool converged = false;
  double settle_time = std::numeric_limits<double>::quiet_NaN();
  OutputPoint terminal = OutputPoint::Zero();
  double max_current = 0.0;
  double i_max = 1.0;
  std::size_t safety_violations = 0;
  double max_freq_dev_hz = 0.0;
  double oscillation = 0.0;
};

struct RunSummary {
  std::string name;
  std::size_t steps = 0;
  double dt = 0.0;
  bool converged = false;
  double settle_time = std::numeric_limits<double>::quiet_NaN();  ///< latest over inverters
  double max_current = 0.0;
  std::size_t safety_violations = 0;
  double max_freq_dev_hz = 0.0;
  double oscillation = 0.0;  ///< largest over inverters
  int controller_errors = 0;
  std::vector<InverterSummary> inverters;
  std::map<int, double> bus_max_freq_dev_hz;
};

inline CsvRow to_row(double t, int id, const InverterSample& s) {
  return {t,           id,           s.current.d,    s.current.q,     s.current_mag, s.voltage.d, s.voltage.q, s.outputs.p,
          s.outputs.q, s.outputs.v2, s.tracked(0),   s.tracked(1),    s.objective,   s.e_hat.d,   s.e_hat.q,   s.freq_dev_hz};
}

inline std::vector<CsvRow> timeseries_rows(const SimulationResult& res) {
  std::vector<CsvRow> rows;
  rows.reserve(res.records.size() * res.inverter_ids.size());
  for (const auto& rec : res.records)
    for (std::size_t j = 0; j < rec.inverters.size(); ++j) rows.push_back(to_row(rec.t, res.inverter_ids[j], rec.inverters[j]));
  return rows;
}

namespace detail {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ConfigError("bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_timeseries_csv(std::ostream& os, const std::vector<CsvRow>& rows) {
  const auto& cols = timeseries_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  using detail::fmt17;
  for (const auto& r : rows) {
    os << fmt17(r.t) << ',' << r.inverter_id << ',' << fmt17(r.i_d) << ',' << fmt17(r.i_q) << ',' << fmt17(r.i_mag) << ','
       << fmt17(r.v_d) << ',' << fmt17(r.v_q) << ',' << fmt17(r.p) << ',' << fmt17(r.q) << ',' << fmt17(r.v2) << ','
       << fmt17(r.s1) << ',' << fmt17(r.s2) << ',' << fmt17(r.objective) << ',' << fmt17(r.e_hat_d) << ','
       << fmt17(r.e_hat_q) << ',' << fmt17(r.freq_dev_hz) << '\n';
  }
}

inline std::vector<CsvRow> read_timeseries_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("timeseries CSV is empty");
  const auto header = detail::split_csv(line);
  if (header != timeseries_columns()) throw ConfigError("timeseries CSV has an unexpected header");
  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size()) throw ConfigError("timeseries CSV line " + std::to_string(lineno) + ": wrong field count");
    try {
      using detail::parse_double;
      CsvRow r;
      r.t = parse_double(f[0]);
      r.inverter_id = std::stoi(f[1]);
      double* dst[] = {&r.i_d, &r.i_q, &r.i_mag, &r.v_d, &r.v_q, &r.p, &r.q, &r.v2, &r.s1, &r.s2,
                       &r.objective, &r.e_hat_d, &r.e_hat_q, &r.freq_dev_hz};
      for (std::size_t k = 0; k < std::size(dst); ++k) *dst[k] = parse_double(f[k + 2]);
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw ConfigError("timeseries CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

/// Per-inverter statistics from timeseries rows; `i_max` by inverter id.
inline RunSummary summarize_rows(const std::vector<CsvRow>& rows, const std::map<int, double>& i_max) {
  RunSummary s;
  std::vector<int> order;
  std::map<int, std::vector<const CsvRow*>> by_id;
  for (const auto& r : rows) {
    if (!by_id.count(r.inverter_id)) order.push_back(r.inverter_id);
    by_id[r.inverter_id].push_back(&r);
  }
  s.converged = !order.empty();
  for (int id : order) {
    const auto& series = by_id[id];
    InverterSummary inv;
    inv.id = id;
    inv.i_max = i_max.count(id) ? i_max.at(id) : std::numeric_limits<double>::infinity();
    for (const auto* r : series) {
      inv.max_current = std::max(inv.max_current, r->i_mag);
      if (r->i_mag > inv.i_max + kSafetyTol) ++inv.safety_violations;
      inv.max_freq_dev_hz = std::max(inv.max_freq_dev_hz, std::abs(r->freq_dev_hz));
    }
    inv.terminal = {series.back()->s1, series.back()->s2};

    // trailing run of small per-step current changes
    std::size_t run = 0;
    for (std::size_t k = series.size(); k-- > 1;) {
      const double di = std::hypot(series[k]->i_d - series[k - 1]->i_d, series[k]->i_q - series[k - 1]->i_q);
      if (!(di < kConvergenceStep)) break;
      ++run;
    }
    inv.converged = run >= kConvergenceSustain;
    if (inv.converged) inv.settle_time = series[series.size() - 1 - run]->t;

    const std::size_t start = (series.size() * 3) / 4;
    const std::size_t n = series.size() - start;
    double mean = 0.0;
    for (std::size_t k = start; k < series.size(); ++k) mean += series[k]->i_mag;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = start; k < series.size(); ++k) var += (series[k]->i_mag - mean) * (series[k]->i_mag - mean);
    inv.oscillation = std::sqrt(var / static_cast<double>(n));

    s.steps = series.size();
    s.converged = s.converged && inv.converged;
    s.max_current = std::max(s.max_current, inv.max_current);
    s.safety_violations += inv.safety_violations;
    s.max_freq_dev_hz = std::max(s.max_freq_dev_hz, inv.max_freq_dev_hz);
    s.oscillation = std::max(s.oscillation, inv.oscillation);
    s.inverters.push_back(inv);
  }
  if (s.converged) {
    s.settle_time = 0.0;
    for (const auto& inv : s.inverters) s.settle_time = std::max(s.settle_time, inv.settle_time);
  }
  if (rows.size() > 1 && !order.empty()) {
    const auto& first = by_id[order.front()];
    if (first.size() > 1) s.dt = first[1]->t - first[0]->t;
  }
  return s;
}

inline RunSummary summarize(const SimulationResult& res, const std::string& name = {}) {
  std::map<int, double> limits;
  for (std::size_t j = 0; j < res.inverter_ids.size(); ++j) limits[res.inverter_ids[j]] = res.i_max[j];
  auto s = summarize_rows(timeseries_rows(res), limits);
  s.name = name;
  s.dt = res.dt;
  s.controller_errors = res.controller_errors;
  for (std::size_t b = 0; b < res.bus_ids.size(); ++b) {
    double m = 0.0;
    for (const auto& rec : res.records) m = std::max(m, std::abs(rec.buses[b].freq_dev_hz));
    s.bus_max_freq_dev_hz[res.bus_ids[b]] = m;
  }
  return s;
}

namespace detail {
inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace detail

inline nlohmann::json summary_json(const RunSummary& s) {
  using detail::num;
  nlohmann::json j;
  j["name"] = s.name;
  j["steps"] = s.steps;
  j["dt"] = s.dt;
  j["converged"] = s.converged;
  j["settle_time"] = num(s.settle_time);
  j["max_current"] = s.max_current;
  j["safety_violations"] = s.safety_violations;
  j["max_freq_dev_hz"] = s.max_freq_dev_hz;
  j["oscillation_metric"] = s.oscillation;
  j["controller_errors"] = s.controller_errors;
  j["inverters"] = nlohmann::json::array();
  for (const auto& inv : s.inverters) {
    j["inverters"].push_back({{"id", inv.id},
                              {"converged", inv.converged},
                              {"settle_time", num(inv.settle_time)},
                              {"terminal", {inv.terminal(0), inv.terminal(1)}},
                              {"max_current", inv.max_current},
                              {"i_max", num(inv.i_max)},
                              {"safety_violations", inv.safety_violations},
                              {"max_freq_dev_hz", inv.max_freq_dev_hz},
                              {"oscillation_metric", inv.oscillation}});
  }
  nlohmann::json buses = nlohmann::json::object();
  for (const auto& [id, f] : s.bus_max_freq_dev_hz) buses[std::to_string(id)] = f;
  j["bus_max_freq_dev_hz"] = buses;
  return j;
}

inline void write_buses_csv(std::ostream& os, const SimulationResult& res) {
  os << "t,bus_id,V_re,V_im,V_mag,freq_dev_hz\n";
  using detail::fmt17;
  for (const auto& rec : res.records)
    for (std::size_t b = 0; b < rec.buses.size(); ++b) {
      const auto v = rec.buses[b].voltage;
      os << fmt17(rec.t) << ',' << res.bus_ids[b] << ',' << fmt17(v.real()) << ',' << fmt17(v.imag()) << ','
         << fmt17(std::abs(v)) << ',' << fmt17(rec.buses[b].freq_dev_hz) << '\n';
    }
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

struct Frame {
  double x0, x1, y0, y1;
  double w = 640, h = 420, pad = 50;

  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); }
  double py(double y) const { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); }
};

inline Frame fit(const std::vector<std::vector<Eigen::Vector2d>>& series) {
  Frame f{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : series)
    for (const auto& p : s) {
      if (!p.allFinite()) continue;
      f.x0 = std::min(f.x0, p(0));
      f.x1 = std::max(f.x1, p(0));
      f.y0 = std::min(f.y0, p(1));
      f.y1 = std::max(f.y1, p(1));
    }
  if (!(f.x1 > f.x0)) { f.x0 -= 0.5; f.x1 += 0.5; }
  if (!(f.y1 > f.y0)) { f.y0 -= 0.5; f.y1 += 0.5; }
  const double mx = 0.05 * (f.x1 - f.x0), my = 0.05 * (f.y1 - f.y0);
  f.x0 -= mx; f.x1 += mx; f.y0 -= my; f.y1 += my;
  return f;
}

inline std::string polyline(const Frame& f, const std::vector<Eigen::Vector2d>& pts, const std::string& style) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" " << style << " points=\"";
  for (const auto& p : pts)
    if (p.allFinite()) os << f.px(p(0)) << ',' << f.py(p(1)) << ' ';
  os << "\"/>\n";
  return os.str();
}

inline const char* palette(std::size_t k) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  return c[k % 6];
}

inline std::string svg_document(const Frame& f, const std::string& body, const std::string& title, const std::string& xlabel,
                                const std::string& ylabel) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<rect x=\"" << f.pad << "\" y=\"" << f.pad << "\" width=\"" << f.w - 2 * f.pad << "\" height=\"" << f.h - 2 * f.pad
     << "\" fill=\"none\" stroke=\"#444\"/>\n"
     << "<text x=\"" << f.w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n"
     << "<text x=\"" << f.w / 2 << "\" y=\"" << f.h - 10 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n"
     << "<text x=\"14\" y=\"" << f.h / 2 << "\" transform=\"rotate(-90 14 " << f.h / 2 << ")\" text-anchor=\"middle\">" << ylabel
     << "</text>\n";
  char buf[64];
  for (int k = 0; k <= 4; ++k) {
    const double x = f.x0 + (f.x1 - f.x0) * k / 4.0, y = f.y0 + (f.y1 - f.y0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "%.3g", x);
    os << "<text x=\"" << f.px(x) << "\" y=\"" << f.h - f.pad + 15 << "\" text-anchor=\"middle\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", y);
    os << "<text x=\"" << f.pad - 4 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
  }
  os << body << "</svg>\n";
  return os.str();
}

}  // namespace detail

/// Output-space trajectory over the sampled feasible region boundary.
inline std::string region_svg(const std::vector<OutputPoint>& boundary, const std::vector<OutputPoint>& trajectory,
                              TrackingMode mode) {
  std::vector<Eigen::Vector2d> closed = boundary;
  if (!closed.empty()) closed.push_back(closed.front());
  const auto f = detail::fit({closed, trajectory});
  std::string body = detail::polyline(f, closed, "stroke=\"#888\" stroke-width=\"1.5\"");
  body += detail::polyline(f, trajectory, "stroke=\"#1f77b4\" stroke-width=\"1.2\"");
  if (!trajectory.empty()) {
    const auto& e = trajectory.back();
    body += "<circle cx=\"" + std::to_string(f.px(e(0))) + "\" cy=\"" + std::to_string(f.py(e(1))) + "\" r=\"4\" fill=\"#d62728\"/>\n";
  }
  const std::string m(to_string(mode));
  return detail::svg_document(f, body, "trajectory in output space (" + m + ")", "S1", "S2");
}

/// One trace per series against time.
inline std::string traces_svg(const std::vector<double>& t, const std::vector<std::vector<double>>& series,
                              const std::vector<std::string>& labels, const std::string& title, const std::string& ylabel) {
  std::vector<std::vector<Eigen::Vector2d>> pts(series.size());
  for (std::size_t s = 0; s < series.size(); ++s)
    for (std::size_t k = 0; k < t.size() && k < series[s].size(); ++k) pts[s].emplace_back(t[k], series[s][k]);
  const auto f = detail::fit(pts);
  std::string body;
  for (std::size_t s = 0; s < pts.size(); ++s) {
    body += detail::polyline(f, pts[s], std::string("stroke=\"") + detail::palette(s) + "\" stroke-width=\"1.2\"");
    if (s < labels.size())
      body += "<text x=\"" + std::to_string(f.w - f.pad - 5) + "\" y=\"" + std::to_string(f.pad + 15 + 14 * s) +
              "\" text-anchor=\"end\" fill=\"" + detail::palette(s) + "\">" + labels[s] + "</text>\n";
  }
  return detail::svg_document(f, body, title, "t [s]", ylabel);
}

// ---------------------------------------------------------------------------
// Driver

struct RunOutput {
  SimulationResult result;
  RunSummary summary;
};

inline SimulationResult simulate(const ScenarioFile& sc) {
  if (const auto* s = std::get_if<SingleBusScenario>(&sc.sim)) return run_single_bus(*s);
  return run_network(std::get<NetworkScenario>(sc.sim));
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + p.string());
  os << text;
  if (!os) throw ConfigError("write failed: " + p.string());
}

inline void write_plots(const std::filesystem::path& dir, const ScenarioFile& sc, const SimulationResult& res) {
  std::vector<double> t;
  for (const auto& r : res.records) t.push_back(r.t);
  std::vector<std::vector<double>> imag(res.inverter_ids.size()), freq(res.inverter_ids.size()), s1(res.inverter_ids.size()),
      s2(res.inverter_ids.size());
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < res.inverter_ids.size(); ++j) {
    labels.push_back("inverter " + std::to_string(res.inverter_ids[j]));
    for (const auto& r : res.records) {
      imag[j].push_back(r.inverters[j].current_mag);
      freq[j].push_back(r.inverters[j].freq_dev_hz);
      s1[j].push_back(r.inverters[j].tracked(0));
      s2[j].push_back(r.inverters[j].tracked(1));
    }
  }
  write_text(dir / "current.svg", traces_svg(t, imag, labels, "current magnitude", "|I| [pu]"));
  write_text(dir / "frequency.svg", traces_svg(t, freq, labels, "frequency deviation", "[Hz]"));
  write_text(dir / "s1.svg", traces_svg(t, s1, labels, "tracked output S1", "S1 [pu]"));
  write_text(dir / "s2.svg", traces_svg(t, s2, labels, "tracked output S2", "S2 [pu]"));
  if (const auto* s = std::get_if<SingleBusScenario>(&sc.sim)) {
    // region of the plant at the end of the run
    EquivalentNetwork plant = s->plant;
    for (const auto& ev : s->events.events)
      if (const auto* g = std::get_if<GridVoltageScale>(&ev.event)) plant.e_dq = s->plant.e_dq * g->factor;
    const auto region = sample_boundary(s->oc.mode, plant, s->kind == ControllerKind::Droop ? s->droop.i_max : s->oc.i_max, 360, 0, 0);
    const auto b = region.boundary();
    std::vector<OutputPoint> traj;
    for (const auto& r : res.records) traj.push_back(r.inverters[0].tracked);
    write_text(dir / "region.svg", region_svg({b.begin(), b.end()}, traj, s->oc.mode));
  }
}

}  // namespace detail

/// Simulates, then writes timeseries.csv, summary.json, buses.csv (network
/// runs) and, when `plots`, SVG figures into `out_dir`.
inline RunOutput run_and_report(const ScenarioFile& sc, const std::filesystem::path& out_dir, bool plots = true) {
  RunOutput out;
  try {
    out.result = simulate(sc);
  } catch (const std::exception& e) {
    throw ConfigError("scenario '" + sc.name + "': " + e.what());
  }
  out.summary = summarize(out.result, sc.name);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create " + out_dir.string() + ": " + ec.message());
  {
    std::ostringstream os;
    write_timeseries_csv(os, timeseries_rows(out.result));
    detail::write_text(out_dir / "timeseries.csv", os.str());
  }
  detail::write_text(out_dir / "summary.json", summary_json(out.summary).dump(2) + "\n");
  if (sc.is_network()) {
    std::ostringstream os;
    write_buses_csv(os, out.result);
    detail::write_text(out_dir / "buses.csv", os.str());
  }
  if (plots && sc.plots) detail::write_plots(out_dir, sc, out.result);
  return out;
}

/// Boundary polygons of each inverter's feasible region as CSV rows
/// (inverter_id, index, S1, S2). Network inverters use their frozen local
/// Thevenin model at the initialized operating point.
inline void write_region_csv(std::ostream& os, const ScenarioFile& sc, TrackingMode mode, std::size_t n = 720) {
  os << "inverter_id,index,S1,S2\n";
  auto emit = [&](int id, const EquivalentNetwork& net, double i_max) {
    const auto r = sample_boundary(mode, net, i_max, n, 0, 0);
    const auto b = r.boundary();
    for (std::size_t k = 0; k < b.size(); ++k)
      os << id << ',' << k << ',' << detail::fmt17(b[k](0)) << ',' << detail::fmt17(b[k](1)) << '\n';
  };
  if (const auto* s = std::get_if<SingleBusScenario>(&sc.sim)) {
    emit(0, s->plant, s->kind == ControllerKind::Droop ? s->droop.i_max : s->oc.i_max);
    return;
  }
  const auto& ns = std::get<NetworkScenario>(sc.sim);
  const auto init = initialize_network(ns);
  for (std::size_t j = 0; j < ns.grid.inverters.size(); ++j) {
    auto net = init.controller_models[j];
    const cplx v = init.solution.voltages(static_cast<Eigen::Index>(init.model.inverter_node[j]));
    net.e_dq = DqVector::from_complex(v) - impedance_matrix(net).apply(DqVector::from_complex(init.solution.inverter_currents[j]));
    emit(ns.grid.inverters[j].bus, net, ns.grid.inverters[j].controller.i_max);
  }
}

}  // namespace convctl
