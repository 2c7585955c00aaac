#pragma once

// Bundled scenarios: the reference single converter (setpoint step and grid
// voltage drop, for both controllers) and the modified IEEE 14-bus case with
// four converters.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "convctl/network_sim.hpp"

namespace convctl::presets {

/// Reference converter filter and line parameters [pu].
inline FilterLineParams reference_converter() {
  FilterLineParams p;
  p.r_f = 0.011;
  p.r_g = 0.025;
  p.l_f = 0.016;
  p.l_g = 0.021;
  p.c_f = 0.014;
  return p;
}

inline constexpr double kReferencePowerScale = 1.0;

inline EquivalentNetwork reference_converter_network() {
  return thevenin_reduce(reference_converter(), {1.0, 0.0}, kReferencePowerScale);
}

// setpoint step
inline constexpr double kStepDt = 0.002;
inline constexpr double kStepTime = 0.05;
inline constexpr double kSingleBusDuration = 1.0;
inline const DqVector kStepInitialCurrent{0.75, 0.3};
inline const OutputPoint kStepSetpoint{1.0, 1.0};

// grid voltage drop
inline constexpr double kDropFactor = 0.83;
inline const DqVector kDropInitialCurrent{0.9, 0.3};
inline constexpr double kDropEstimatorGain = 0.3;
inline constexpr double kDropNoiseTauSteps = 10.0;
inline constexpr double kDropNoiseVarianceScale = 0.1;  ///< times |E| after the drop

inline SingleBusScenario base_single_bus(ControllerKind kind, DqVector i0) {
  SingleBusScenario sc;
  sc.plant = reference_converter_network();
  sc.kind = kind;
  sc.oc.mode = TrackingMode::PV2;
  sc.oc.gamma = 1.0;
  sc.oc.rho = 1e-3;
  sc.oc.step_size = 1.0;
  sc.oc.i_max = 1.0;
  sc.oc.setpoint = select_outputs(sc.oc.mode, compute_outputs(i0, sc.plant));
  sc.droop.v_nom = std::sqrt(sc.oc.setpoint(1));
  sc.droop.i_max = sc.oc.i_max;
  sc.initial_current = i0;
  sc.dt = kStepDt;
  sc.duration = kSingleBusDuration;
  return sc;
}

inline SingleBusScenario setpoint_step(ControllerKind kind) {
  auto sc = base_single_bus(kind, kStepInitialCurrent);
  sc.events.events.push_back({kStepTime, SetpointChange{-1, kStepSetpoint}});
  return sc;
}

inline SingleBusScenario voltage_drop(ControllerKind kind) {
  auto sc = base_single_bus(kind, kDropInitialCurrent);
  sc.oc.estimator_gain = kDropEstimatorGain;
  const double e_after = kDropFactor * sc.plant.e_dq.norm();
  sc.events.events.push_back({kStepTime, GridVoltageScale{kDropFactor}});
  sc.events.events.push_back({kStepTime, NoiseBurst{kDropNoiseVarianceScale * e_after, kDropNoiseTauSteps * sc.dt}});
  return sc;
}

// ---------------------------------------------------------------------------
// Modified IEEE 14-bus case, 100 MVA base

inline constexpr int kIeee14InverterBuses[] = {2, 3, 6, 8};
inline constexpr double kIeee14InitialP[] = {0.4, 0.0, 0.0, 0.0};
inline constexpr double kIeee14InitialV[] = {1.045, 1.01, 1.07, 1.09};
inline constexpr double kIeee14StepP = 1.1;
inline constexpr double kIeee14StepTime = 0.05;
inline constexpr double kIeee14StepSize = 2.0;

inline CaseSpec ieee14_case() {
  CaseSpec c;
  c.name = "ieee14_modified";
  c.slack_voltage = {1.06, 0.0};
  c.power_scale = 1.0;
  struct Load { int id; double p, q; };
  const Load loads[] = {{1, 0, 0},         {2, 21.7, 12.7}, {3, 94.2, 19.0}, {4, 47.8, -3.9}, {5, 7.6, 1.6},
                        {6, 11.2, 7.5},    {7, 0, 0},       {8, 0, 0},       {9, 29.5, 16.6}, {10, 9.0, 5.8},
                        {11, 3.5, 1.8},    {12, 6.1, 1.6},  {13, 13.5, 5.8}, {14, 14.9, 5.0}};
  for (const auto& l : loads) {
    BusSpec b;
    b.id = l.id;
    b.load = {l.p / 100.0, l.q / 100.0};
    b.kind = l.id == 1 ? BusKind::Slack : BusKind::Passive;
    if (l.id == 9) b.shunt = {0.0, 0.19};
    c.buses.push_back(b);
  }
  for (int id : kIeee14InverterBuses) c.buses[static_cast<std::size_t>(id - 1)].kind = BusKind::Inverter;

  c.branches = {
      {1, 2, 0.01938, 0.05917, 0.0528, 1.0},  {1, 5, 0.05403, 0.22304, 0.0492, 1.0},
      {2, 3, 0.04699, 0.19797, 0.0438, 1.0},  {2, 4, 0.05811, 0.17632, 0.034, 1.0},
      {2, 5, 0.05695, 0.17388, 0.0346, 1.0},  {3, 4, 0.06701, 0.17103, 0.0128, 1.0},
      {4, 5, 0.01335, 0.04211, 0.0, 1.0},     {4, 7, 0.0, 0.20912, 0.0, 0.978},
      {4, 9, 0.0, 0.55618, 0.0, 0.969},       {5, 6, 0.0, 0.25202, 0.0, 0.932},
      {6, 11, 0.09498, 0.1989, 0.0, 1.0},     {6, 12, 0.12291, 0.25581, 0.0, 1.0},
      {6, 13, 0.06615, 0.13027, 0.0, 1.0},    {7, 8, 0.0, 0.17615, 0.0, 1.0},
      {7, 9, 0.0, 0.11001, 0.0, 1.0},         {9, 10, 0.03181, 0.0845, 0.0, 1.0},
      {9, 14, 0.12711, 0.27038, 0.0, 1.0},    {10, 11, 0.08205, 0.19207, 0.0, 1.0},
      {12, 13, 0.22092, 0.19988, 0.0, 1.0},   {13, 14, 0.17093, 0.34802, 0.0, 1.0},
  };

  for (std::size_t k = 0; k < 4; ++k) {
    InverterAttachment inv;
    inv.bus = kIeee14InverterBuses[k];
    inv.filter_r = 0.01;
    inv.filter_x = 0.1;
    inv.kind = ControllerKind::Optimal;
    inv.controller.mode = TrackingMode::PV2;
    inv.controller.setpoint = {kIeee14InitialP[k], kIeee14InitialV[k] * kIeee14InitialV[k]};
    inv.controller.gamma = 1.0;
    inv.controller.rho = 1e-3;
    inv.controller.step_size = kIeee14StepSize;
    inv.controller.i_max = 1.0;
    inv.controller.estimator_gain = 1.0;
    c.inverters.push_back(inv);
  }
  return c;
}

inline NetworkScenario ieee14(double dt, double duration) {
  NetworkScenario sc;
  sc.grid = ieee14_case();
  sc.dt = dt;
  sc.duration = duration;
  for (std::size_t k = 0; k < 4; ++k)
    sc.events.events.push_back(
        {kIeee14StepTime, SetpointChange{static_cast<int>(k), {kIeee14StepP, kIeee14InitialV[k] * kIeee14InitialV[k]}}});
  return sc;
}

inline NetworkScenario ieee14_dt001() { return ieee14(0.01, 10.0); }
inline NetworkScenario ieee14_dt005() { return ieee14(0.05, 15.0); }

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {"setpoint_step_oc", "setpoint_step_droop", "voltage_drop_oc",
                                             "voltage_drop_droop", "ieee14_dt001",       "ieee14_dt005"};
  return n;
}

}  // namespace convctl::presets
