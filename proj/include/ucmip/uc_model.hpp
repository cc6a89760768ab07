// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"
#include "ucmip/milp.hpp"
#include "ucmip/power_system.hpp"

namespace ucmip {

enum class VarKind { X, S, Z, PAbove, PBar, StartCost, ProdCost };

// Column layout: seven equally sized blocks in the order x, s, z, p', p-bar,
// f, v, each block generator-major. The x block comes first so that column d
// is also prediction dimension d for the neural models.
class VariableMap {
 public:
  struct Entry {
    VarKind kind;
    int gen;
    int t;
  };

  VariableMap() = default;
  VariableMap(int num_gens, int horizon, std::vector<double> start_cost_base,
              std::vector<double> run_cost_base)
      : num_gens_(num_gens),
        horizon_(horizon),
        start_cost_base_(std::move(start_cost_base)),
        run_cost_base_(std::move(run_cost_base)) {
    if (num_gens_ < 1 || horizon_ < 1) throw ConfigError("VariableMap: empty shape");
    if (static_cast<int>(start_cost_base_.size()) != num_gens_ ||
        static_cast<int>(run_cost_base_.size()) != num_gens_) {
      throw ShapeError("VariableMap: cost vectors must have one entry per generator");
    }
  }

  int num_gens() const { return num_gens_; }
  int horizon() const { return horizon_; }
  int block_size() const { return num_gens_ * horizon_; }
  int num_vars() const { return 7 * block_size(); }
  int num_binaries() const { return 3 * block_size(); }

  int x(int g, int t) const { return col(0, g, t); }
  int s(int g, int t) const { return col(1, g, t); }
  int z(int g, int t) const { return col(2, g, t); }
  int p_above(int g, int t) const { return col(3, g, t); }
  int p_bar(int g, int t) const { return col(4, g, t); }
  int f_cost(int g, int t) const { return col(5, g, t); }
  int v_cost(int g, int t) const { return col(6, g, t); }

  // First-rung start cost CU^1 and commitment cost CB^1 per generator; kept
  // here so a schedule can be priced without the system definition.
  double start_cost_base(int g) const { return start_cost_base_[g]; }
  double run_cost_base(int g) const { return run_cost_base_[g]; }

  Entry at(int column) const {
    if (column < 0 || column >= num_vars()) throw ConfigError("VariableMap: column out of range");
    static constexpr VarKind kKinds[] = {VarKind::X,    VarKind::S,         VarKind::Z,
                                         VarKind::PAbove, VarKind::PBar,    VarKind::StartCost,
                                         VarKind::ProdCost};
    const int block = column / block_size();
    const int rest = column % block_size();
    return Entry{kKinds[block], rest / horizon_, rest % horizon_};
  }

 private:
  int col(int block, int g, int t) const {
    if (g < 0 || g >= num_gens_ || t < 0 || t >= horizon_) {
      throw ConfigError("VariableMap: (g, t) out of range");
    }
    return block * block_size() + g * horizon_ + t;
  }

  int num_gens_ = 0;
  int horizon_ = 0;
  std::vector<double> start_cost_base_;
  std::vector<double> run_cost_base_;
};

// Incremental cost per MW on each piecewise segment.
inline std::vector<double> segment_slopes(const GeneratorParams& g) {
  g.validate();
  std::vector<double> vc(g.nl);
  for (int n = 0; n < g.nl; ++n) {
    vc[n] = (g.cb[n + 1] - g.cb[n]) / (g.pb[n + 1] - g.pb[n]);
  }
  return vc;
}

// On/off history before the first period. A unit that has been on for k
// periods contributes x = 1 for the last k pre-horizon periods; starts and
// shutdowns in the unknown past are taken as zero.
inline double history_x(const GeneratorParams& g, int paper_tau) {
  return (g.v0 == 1 && paper_tau >= 1 - g.init_state_periods) ? 1.0 : 0.0;
}

inline double history_p_above(const GeneratorParams& g) {
  return g.v0 == 1 ? std::max(g.p0 - g.p_min, 0.0) : 0.0;
}

struct UcBuild {
  MilpProblem problem;
  VariableMap vmap;
};

// Builds the commitment MILP with every constraint written as a <= row;
// equalities become two opposing rows and >= rows are negated. Pre-horizon
// terms are substituted from the generator history.
inline UcBuild build_uc_milp(const UcInstance& inst) {
  inst.validate();
  const int G = inst.system.num_gens();
  const int T = inst.horizon;
  const int M = inst.system.num_lines();
  if (G < 1) throw ConfigError("build_uc_milp: system has no generators");

  std::vector<double> cu1(G), cb1(G);
  for (int g = 0; g < G; ++g) {
    cu1[g] = inst.system.generators[g].cu.front();
    cb1[g] = inst.system.generators[g].cb.front();
  }
  VariableMap vmap(G, T, cu1, cb1);
  const int nv = vmap.num_vars();

  MilpProblem p;
  p.c.assign(nv, 0.0);
  p.l.assign(nv, 0.0);
  p.u.assign(nv, 0.0);
  p.is_integer.assign(nv, 0);

  std::vector<std::vector<double>> vc(G);
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    vc[g] = segment_slopes(gen);
    // Epigraph variables get exact envelope caps: the largest value either
    // lower bound can force. Tighter boxes help the LP without cutting the
    // optimum.
    double f_cap = 0.0;
    for (double cost : gen.cu) f_cap = std::max(f_cap, cost - gen.cu.front());
    double v_cap = 0.0;
    for (int n = 0; n < gen.nl; ++n) {
      v_cap = std::max(v_cap, vc[g][n] * (gen.p_max - gen.pb[n]) + gen.cb[n] - gen.cb.front());
    }
    for (int t = 0; t < T; ++t) {
      for (int bcol : {vmap.x(g, t), vmap.s(g, t), vmap.z(g, t)}) {
        p.u[bcol] = 1.0;
        p.is_integer[bcol] = 1;
      }
      p.c[vmap.x(g, t)] = cb1[g];
      p.c[vmap.s(g, t)] = cu1[g] + cb1[g];
      p.c[vmap.f_cost(g, t)] = 1.0;
      p.c[vmap.v_cost(g, t)] = 1.0;
      p.u[vmap.p_above(g, t)] = gen.p_max - gen.p_min;
      p.u[vmap.p_bar(g, t)] = gen.p_max;
      p.u[vmap.f_cost(g, t)] = f_cap;
      p.u[vmap.v_cost(g, t)] = v_cap;
    }
  }

  std::vector<int> rows, cols;
  std::vector<double> vals;
  std::vector<double> rhs;
  auto add_row = [&](const std::vector<std::pair<int, double>>& terms, double b) {
    const int r = static_cast<int>(rhs.size());
    for (const auto& [col, coef] : terms) {
      rows.push_back(r);
      cols.push_back(col);
      vals.push_back(coef);
    }
    rhs.push_back(b);
  };

  // Load balance: committed minimum plus dispatch covers demand.
  for (int tt = 1; tt <= T; ++tt) {
    std::vector<std::pair<int, double>> terms;
    for (int g = 0; g < G; ++g) {
      const double pmin = inst.system.generators[g].p_min;
      terms.push_back({vmap.p_above(g, tt - 1), -1.0});
      terms.push_back({vmap.s(g, tt - 1), -pmin});
      terms.push_back({vmap.x(g, tt - 1), -pmin});
    }
    add_row(terms, -inst.scenario.total_load(tt - 1));
  }

  // Spinning reserve: available maxima cover demand plus the requirement.
  for (int tt = 1; tt <= T; ++tt) {
    std::vector<std::pair<int, double>> terms;
    for (int g = 0; g < G; ++g) terms.push_back({vmap.p_bar(g, tt - 1), -1.0});
    add_row(terms, -(inst.scenario.total_load(tt - 1) + inst.scenario.r[tt - 1]));
  }

  // Available maximum is at least the actual output...
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      add_row({{vmap.p_above(g, tt - 1), 1.0},
               {vmap.s(g, tt - 1), gen.p_min},
               {vmap.x(g, tt - 1), gen.p_min},
               {vmap.p_bar(g, tt - 1), -1.0}},
              0.0);
    }
  }
  // ...and at most capacity, relaxed toward the shut-down ramp when the unit
  // goes off next period.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms = {{vmap.p_bar(g, tt - 1), 1.0},
                                                   {vmap.s(g, tt - 1), -gen.p_max},
                                                   {vmap.x(g, tt - 1), -gen.p_max}};
      if (tt < T) terms.push_back({vmap.z(g, tt), -(gen.sd - gen.p_max)});
      add_row(terms, 0.0);
    }
  }

  // Minimum up: starts within the window pin the unit on.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms;
      for (int i = tt - gen.ut + 1; i <= tt - 1; ++i) {
        if (i >= 1) terms.push_back({vmap.s(g, i - 1), 1.0});
      }
      terms.push_back({vmap.x(g, tt - 1), -1.0});
      add_row(terms, 0.0);
    }
  }

  // Minimum down: no start while a recent on-state still forces rest.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms;
      double b = 1.0;
      for (int i = tt - gen.dt; i <= tt; ++i) {
        if (i >= 1) terms.push_back({vmap.s(g, i - 1), 1.0});
      }
      const int xi = tt - gen.dt;
      if (xi >= 1) {
        terms.push_back({vmap.x(g, xi - 1), 1.0});
      } else {
        b -= history_x(gen, xi);
      }
      add_row(terms, b);
    }
  }

  // Ramp up, with the start-up ramp on s.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms = {{vmap.p_bar(g, tt - 1), 1.0},
                                                   {vmap.s(g, tt - 1), -gen.su},
                                                   {vmap.x(g, tt - 1), -(gen.ru + gen.p_min)}};
      double b = 0.0;
      if (tt >= 2) {
        terms.push_back({vmap.p_above(g, tt - 2), -1.0});
      } else {
        b = history_p_above(gen);
      }
      add_row(terms, b);
    }
  }

  // Ramp down, with the shut-down ramp on z.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms = {{vmap.p_above(g, tt - 1), -1.0},
                                                   {vmap.z(g, tt - 1), -(gen.sd - gen.p_min)},
                                                   {vmap.x(g, tt - 1), -gen.rd}};
      double b = 0.0;
      if (tt >= 2) {
        terms.push_back({vmap.p_above(g, tt - 2), 1.0});
      } else {
        b = -history_p_above(gen);
      }
      add_row(terms, b);
    }
  }

  // Line limits via PTDF: generator injections minus load withdrawals stay
  // within both capacity directions. Rows whose sensitivities all vanish are
  // constant checks; they are verified here and not emitted.
  for (int l = 0; l < M; ++l) {
    const Line& line = inst.system.lines[l];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms;
      for (int g = 0; g < G; ++g) {
        const double alpha = inst.ptdf_gen(g, l);
        if (std::abs(alpha) <= 1e-12) continue;
        const double pmin = inst.system.generators[g].p_min;
        terms.push_back({vmap.p_above(g, tt - 1), alpha});
        terms.push_back({vmap.x(g, tt - 1), alpha * pmin});
        terms.push_back({vmap.s(g, tt - 1), alpha * pmin});
      }
      double withdraw = 0.0;
      for (int i = 0; i < inst.system.num_buses(); ++i) {
        withdraw += inst.scenario.d(i, tt - 1) * inst.ptdf_bus(i, l);
      }
      if (terms.empty()) {
        if (-withdraw > line.f_pos + 1e-9 || -withdraw < line.f_neg - 1e-9) {
          throw ConfigError("build_uc_milp: line " + std::to_string(line.id) +
                            " limit unsatisfiable for any dispatch");
        }
        continue;
      }
      add_row(terms, line.f_pos + withdraw);
      std::vector<std::pair<int, double>> neg;
      neg.reserve(terms.size());
      for (const auto& [col, coef] : terms) neg.push_back({col, -coef});
      add_row(neg, -line.f_neg - withdraw);
    }
  }

  // State transition: on-state at t-1 carries to t as either staying on or a
  // shutdown. Written as two opposing inequalities.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      std::vector<std::pair<int, double>> terms = {{vmap.z(g, tt - 1), 1.0},
                                                   {vmap.x(g, tt - 1), 1.0}};
      double b = 0.0;
      if (tt >= 2) {
        terms.push_back({vmap.s(g, tt - 2), -1.0});
        terms.push_back({vmap.x(g, tt - 2), -1.0});
      } else {
        b = history_x(gen, 0);
      }
      add_row(terms, b);
      std::vector<std::pair<int, double>> neg;
      neg.reserve(terms.size());
      for (const auto& [col, coef] : terms) neg.push_back({col, -coef});
      add_row(neg, -b);
    }
  }

  // Start-up cost epigraph: rung n binds when the unit starts after being
  // down longer than nd[n]. The first rung has zero lift and is skipped.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      for (std::size_t n = 1; n < gen.cu.size(); ++n) {
        const double lift = gen.cu[n] - gen.cu.front();
        if (lift <= 1e-12) continue;
        std::vector<std::pair<int, double>> terms = {{vmap.f_cost(g, tt - 1), -1.0},
                                                     {vmap.s(g, tt - 1), lift}};
        double b = 0.0;
        for (int i = gen.dt; i <= gen.nd[n]; ++i) {
          if (tt - i >= 1) terms.push_back({vmap.s(g, tt - i - 1), -lift});
        }
        const int xi = tt - gen.nd[n];
        if (xi >= 1) {
          terms.push_back({vmap.x(g, xi - 1), -lift});
        } else {
          b += lift * history_x(gen, xi);
        }
        add_row(terms, b);
      }
    }
  }

  // Production cost epigraph, one cut per segment.
  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    for (int tt = 1; tt <= T; ++tt) {
      for (int n = 0; n < gen.nl; ++n) {
        add_row({{vmap.v_cost(g, tt - 1), -1.0}, {vmap.p_above(g, tt - 1), vc[g][n]}},
                vc[g][n] * (gen.pb[n] - gen.p_min) - (gen.cb[n] - gen.cb.front()));
      }
    }
  }

  p.b = std::move(rhs);
  p.A = std::make_shared<SparseMatrix>(static_cast<int>(p.b.size()), nv, rows, cols, vals);
  p.validate();
  return UcBuild{std::move(p), std::move(vmap)};
}

struct UcSchedule {
  Mat x, s, z;             // binary state, start, shutdown
  Mat p_above, p_bar;      // output above minimum; available maximum
  Mat f_cost, v_cost;      // start-up and production cost epigraph values
  double total_cost = 0.0;
};

// Reads a solver vector back into schedule matrices. Binary entries must sit
// within tol of an integer; total_cost re-prices the schedule from scratch.
inline UcSchedule decode_solution(const std::vector<double>& xvec, const VariableMap& vmap,
                                  double tol = 1e-6) {
  if (static_cast<int>(xvec.size()) != vmap.num_vars()) {
    throw ShapeError("decode_solution: vector length does not match the variable map");
  }
  const int G = vmap.num_gens();
  const int T = vmap.horizon();
  UcSchedule sched;
  sched.x = Mat(G, T);
  sched.s = Mat(G, T);
  sched.z = Mat(G, T);
  sched.p_above = Mat(G, T);
  sched.p_bar = Mat(G, T);
  sched.f_cost = Mat(G, T);
  sched.v_cost = Mat(G, T);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) {
      for (auto [m, col] : {std::pair<Mat*, int>{&sched.x, vmap.x(g, t)},
                            {&sched.s, vmap.s(g, t)},
                            {&sched.z, vmap.z(g, t)}}) {
        const double v = xvec[col];
        const double r = std::round(v);
        if (std::abs(v - r) > tol || r < -0.5 || r > 1.5) {
          throw DecodeError("decode_solution: column " + std::to_string(col) +
                            " is not binary: " + fmt_full(v));
        }
        (*m)(g, t) = r;
      }
      sched.p_above(g, t) = xvec[vmap.p_above(g, t)];
      sched.p_bar(g, t) = xvec[vmap.p_bar(g, t)];
      sched.f_cost(g, t) = xvec[vmap.f_cost(g, t)];
      sched.v_cost(g, t) = xvec[vmap.v_cost(g, t)];
      sched.total_cost += sched.f_cost(g, t) + sched.v_cost(g, t) +
                          vmap.start_cost_base(g) * sched.s(g, t) +
                          vmap.run_cost_base(g) * (sched.s(g, t) + sched.x(g, t));
    }
  }
  return sched;
}

struct Violation {
  std::string family;
  int who;  // generator or line index, -1 for system-wide rows
  int t;    // zero-based period
  double amount;
};

struct ViolationReport {
  std::vector<Violation> violations;
  bool empty() const { return violations.empty(); }
  std::string describe() const {
    std::string out;
    for (const auto& v : violations) {
      out += v.family + "(who=" + std::to_string(v.who) + ", t=" + std::to_string(v.t) +
             ") by " + fmt_full(v.amount) + "\n";
    }
    return out;
  }
};

// Re-checks every constraint family directly on the schedule, including the
// constant line rows the builder elides. Empty report means feasible within
// tol.
inline ViolationReport validate_schedule(const UcInstance& inst, const UcSchedule& sched,
                                         double tol = 1e-6) {
  const int G = inst.system.num_gens();
  const int T = inst.horizon;
  ViolationReport rep;
  auto flag = [&](const std::string& family, int who, int t, double amount) {
    if (amount > tol) rep.violations.push_back({family, who, t - 1, amount});
  };

  for (int tt = 1; tt <= T; ++tt) {
    double committed = 0.0, avail = 0.0;
    for (int g = 0; g < G; ++g) {
      const GeneratorParams& gen = inst.system.generators[g];
      committed += sched.p_above(g, tt - 1) +
                   gen.p_min * (sched.s(g, tt - 1) + sched.x(g, tt - 1));
      avail += sched.p_bar(g, tt - 1);
    }
    const double demand = inst.scenario.total_load(tt - 1);
    flag("load_balance", -1, tt, demand - committed);
    flag("spinning_reserve", -1, tt, demand + inst.scenario.r[tt - 1] - avail);
  }

  for (int g = 0; g < G; ++g) {
    const GeneratorParams& gen = inst.system.generators[g];
    const std::vector<double> vc = segment_slopes(gen);
    for (int tt = 1; tt <= T; ++tt) {
      const double x = sched.x(g, tt - 1);
      const double s = sched.s(g, tt - 1);
      const double z = sched.z(g, tt - 1);
      const double pa = sched.p_above(g, tt - 1);
      const double pbar = sched.p_bar(g, tt - 1);

      if (x < -tol || x > 1 + tol || s < -tol || s > 1 + tol || z < -tol || z > 1 + tol) {
        flag("binary_domain", g, tt, 1.0);
      }
      flag("nonnegative", g, tt, -pa);
      flag("nonnegative", g, tt, -sched.f_cost(g, tt - 1));
      flag("nonnegative", g, tt, -sched.v_cost(g, tt - 1));

      flag("generation_lower", g, tt, pa + gen.p_min * (s + x) - pbar);
      const double z_next = tt < T ? sched.z(g, tt) : 0.0;
      flag("generation_upper", g, tt,
           pbar - gen.p_max * (s + x) - (gen.sd - gen.p_max) * z_next);

      double up_window = 0.0;
      for (int i = tt - gen.ut + 1; i <= tt - 1; ++i) {
        if (i >= 1) up_window += sched.s(g, i - 1);
      }
      flag("minimum_up", g, tt, up_window - x);

      double dn_window = 0.0;
      for (int i = tt - gen.dt; i <= tt; ++i) {
        if (i >= 1) dn_window += sched.s(g, i - 1);
      }
      const int xi = tt - gen.dt;
      const double x_back = xi >= 1 ? sched.x(g, xi - 1) : history_x(gen, xi);
      flag("minimum_down", g, tt, dn_window - (1.0 - x_back));

      const double pa_prev = tt >= 2 ? sched.p_above(g, tt - 2) : history_p_above(gen);
      flag("ramp_up", g, tt, pbar - pa_prev - gen.su * s - (gen.ru + gen.p_min) * x);
      flag("ramp_down", g, tt, pa_prev - pa - (gen.sd - gen.p_min) * z - gen.rd * x);

      const double s_prev = tt >= 2 ? sched.s(g, tt - 2) : 0.0;
      const double x_prev = tt >= 2 ? sched.x(g, tt - 2) : history_x(gen, 0);
      const double drift = std::abs(s_prev + x_prev - z - x);
      flag("state_transition", g, tt, drift);

      for (std::size_t n = 1; n < gen.cu.size(); ++n) {
        const double lift = gen.cu[n] - gen.cu.front();
        if (lift <= 1e-12) continue;
        double recent = 0.0;
        for (int i = gen.dt; i <= gen.nd[n]; ++i) {
          if (tt - i >= 1) recent += sched.s(g, tt - i - 1);
        }
        const int xj = tt - gen.nd[n];
        const double x_old = xj >= 1 ? sched.x(g, xj - 1) : history_x(gen, xj);
        flag("startup_cost", g, tt,
             lift * (s - recent - x_old) - sched.f_cost(g, tt - 1));
      }

      for (int n = 0; n < gen.nl; ++n) {
        flag("production_cost", g, tt,
             vc[n] * (pa + gen.p_min - gen.pb[n]) + gen.cb[n] - gen.cb.front() -
                 sched.v_cost(g, tt - 1));
      }
    }
  }

  for (int l = 0; l < inst.system.num_lines(); ++l) {
    const Line& line = inst.system.lines[l];
    for (int tt = 1; tt <= T; ++tt) {
      double flow = 0.0;
      for (int g = 0; g < G; ++g) {
        const GeneratorParams& gen = inst.system.generators[g];
        flow += (sched.p_above(g, tt - 1) +
                 gen.p_min * (sched.x(g, tt - 1) + sched.s(g, tt - 1))) *
                inst.ptdf_gen(g, l);
      }
      for (int i = 0; i < inst.system.num_buses(); ++i) {
        flow -= inst.scenario.d(i, tt - 1) * inst.ptdf_bus(i, l);
      }
      flag("line_limit", l, tt, flow - line.f_pos);
      flag("line_limit", l, tt, line.f_neg - flow);
    }
  }
  return rep;
}

}  // namespace ucmip
