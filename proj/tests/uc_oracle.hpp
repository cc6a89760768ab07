// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ucmip/common.hpp"
#include "ucmip/milp.hpp"
#include "ucmip/simplex.hpp"
#include "ucmip/uc_model.hpp"

namespace ucfix {

struct UcEnumResult {
  bool feasible = false;
  double objective = ucmip::kInf;
  std::vector<double> x;
};

// Exhaustive reference optimum: enumerate every on/off pattern over the
// horizon, derive the consistent x/s/z values from it and the initial
// status, fix all binaries and solve the continuous remainder.
inline UcEnumResult enumerate_uc_optimum(const ucmip::UcInstance& inst,
                                         const ucmip::MilpProblem& prob,
                                         const ucmip::VariableMap& vmap) {
  const int g_count = vmap.num_gens();
  const int t_count = vmap.horizon();
  const int bits = g_count * t_count;
  if (bits > 24) throw ucmip::ConfigError("enumerate_uc_optimum: pattern space too large");

  UcEnumResult best;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
    ucmip::Assignment fix;
    for (int g = 0; g < g_count; ++g) {
      int prev_on = inst.system.generators[g].v0;
      for (int t = 0; t < t_count; ++t) {
        const int on = (mask >> (g * t_count + t)) & 1u;
        fix.add(vmap.x(g, t), on && prev_on ? 1.0 : 0.0);
        fix.add(vmap.s(g, t), on && !prev_on ? 1.0 : 0.0);
        fix.add(vmap.z(g, t), !on && prev_on ? 1.0 : 0.0);
        prev_on = on;
      }
    }
    const ucmip::MilpProblem sub = ucmip::fix_variables(prob, fix);
    const ucmip::LpSolution sol = ucmip::solve_lp(sub);
    if (sol.status == ucmip::LpStatus::Optimal && sol.objective < best.objective - 1e-12) {
      best.feasible = true;
      best.objective = sol.objective;
      best.x = sol.x;
    }
  }
  return best;
}

}  // namespace ucfix
