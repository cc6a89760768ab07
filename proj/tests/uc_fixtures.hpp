// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ucmip/power_system.hpp"
#include "ucmip/uc_model.hpp"

namespace ucfix {

// Three buses in a triangle, two generators. G1 is a mid-size unit already
// on; G2 is a small peaker that starts when load climbs.
inline ucmip::SystemSpec triangle_system() {
  ucmip::SystemSpec sys;
  sys.buses = {1, 2, 3};
  sys.slack_bus = 3;
  sys.lines = {
      {0, 1, 2, 0.1, 10.0, 100.0, -100.0},
      {1, 2, 3, 0.1, 10.0, 100.0, -100.0},
      {2, 1, 3, 0.1, 10.0, 100.0, -100.0},
  };

  ucmip::GeneratorParams g1;
  g1.id = 0;
  g1.bus = 1;
  g1.p_min = 20.0;
  g1.p_max = 80.0;
  g1.su = 40.0;
  g1.sd = 40.0;
  g1.ut = 2;
  g1.dt = 2;
  g1.ru = 30.0;
  g1.rd = 30.0;
  g1.cu = {30.0, 60.0};
  g1.nd = {2, 4};
  g1.pb = {20.0, 50.0, 80.0};
  g1.cb = {40.0, 100.0, 190.0};
  g1.nl = 2;
  g1.v0 = 1;
  g1.p0 = 40.0;
  g1.init_state_periods = 2;

  ucmip::GeneratorParams g2;
  g2.id = 1;
  g2.bus = 2;
  g2.p_min = 10.0;
  g2.p_max = 50.0;
  g2.su = 25.0;
  g2.sd = 25.0;
  g2.ut = 1;
  g2.dt = 1;
  g2.ru = 20.0;
  g2.rd = 20.0;
  g2.cu = {25.0};
  g2.nd = {1};
  g2.pb = {10.0, 50.0};
  g2.cb = {30.0, 150.0};
  g2.nl = 1;
  g2.v0 = 0;
  g2.p0 = 0.0;
  g2.init_state_periods = 1;

  sys.generators = {g1, g2};
  return sys;
}

inline ucmip::LoadScenario triangle_loads_t4() {
  ucmip::LoadScenario scen;
  scen.d = ucmip::Mat(3, 4);
  const double totals[4] = {45.0, 70.0, 95.0, 60.0};
  const double split[3] = {0.2, 0.3, 0.5};
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 4; ++t) scen.d(i, t) = split[i] * totals[t];
  }
  scen.r = {2.0, 3.0, 4.0, 3.0};
  return scen;
}

inline ucmip::UcInstance triangle_instance_t4() {
  return ucmip::make_instance(triangle_system(), triangle_loads_t4());
}

// Same system over a two-period horizon; small enough that the on/off
// enumeration oracle has only 16 patterns.
inline ucmip::UcInstance triangle_instance_t2() {
  ucmip::LoadScenario scen;
  scen.d = ucmip::Mat(3, 2);
  const double totals[2] = {50.0, 85.0};
  const double split[3] = {0.2, 0.3, 0.5};
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 2; ++t) scen.d(i, t) = split[i] * totals[t];
  }
  scen.r = {2.0, 3.0};
  return ucmip::make_instance(triangle_system(), scen);
}

}  // namespace ucfix
