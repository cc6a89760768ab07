// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ucmip/bnb.hpp"
#include "ucmip/power_system.hpp"
#include "ucmip/uc_model.hpp"
#include "uc_fixtures.hpp"
#include "uc_oracle.hpp"

using namespace ucmip;

namespace {

SystemSpec single_bus_system(GeneratorParams g) {
  SystemSpec sys;
  sys.buses = {1};
  sys.slack_bus = 1;
  g.bus = 1;
  sys.generators = {std::move(g)};
  return sys;
}

GeneratorParams mid_unit() {
  GeneratorParams g;
  g.p_min = 20.0;
  g.p_max = 80.0;
  g.su = 40.0;
  g.sd = 40.0;
  g.ut = 1;
  g.dt = 1;
  g.ru = 30.0;
  g.rd = 30.0;
  g.cu = {30.0, 60.0};
  g.nd = {1, 3};
  g.pb = {20.0, 50.0, 80.0};
  g.cb = {40.0, 100.0, 190.0};
  g.nl = 2;
  g.v0 = 1;
  g.p0 = 40.0;
  g.init_state_periods = 2;
  return g;
}

UcInstance single_gen_instance(const GeneratorParams& g, const std::vector<double>& load,
                               double reserve = 0.0) {
  LoadScenario scen;
  const int t_len = static_cast<int>(load.size());
  scen.d = Mat(1, t_len);
  scen.r.assign(t_len, reserve);
  for (int t = 0; t < t_len; ++t) scen.d(0, t) = load[t];
  return make_instance(single_bus_system(g), scen);
}

}  // namespace

TEST_CASE("validation rejects malformed systems") {
  GeneratorParams g = mid_unit();
  g.p_min = 90.0;
  REQUIRE_THROWS_AS(g.validate(), ConfigError);

  g = mid_unit();
  g.pb = {25.0, 50.0, 80.0};  // does not start at p_min
  REQUIRE_THROWS_AS(g.validate(), ConfigError);

  g = mid_unit();
  g.dt = 2;  // nd[0] now below dt
  REQUIRE_THROWS_AS(g.validate(), ConfigError);

  SystemSpec sys = ucfix::triangle_system();
  sys.generators[1].bus = 1;  // two units on one bus
  REQUIRE_THROWS_AS(sys.validate(), ConfigError);

  sys = ucfix::triangle_system();
  sys.buses.push_back(4);  // island
  REQUIRE_THROWS_AS(sys.validate(), ConfigError);
}

TEST_CASE("ptdf of a two bus system puts all transfer on the only line") {
  SystemSpec sys;
  sys.buses = {1, 2};
  sys.slack_bus = 2;
  sys.lines = {{0, 1, 2, 0.1, 10.0, 100.0, -100.0}};
  GeneratorParams g = mid_unit();
  g.bus = 1;
  sys.generators = {g};

  const PtdfMatrices ptdf = compute_ptdf(sys);
  REQUIRE(ptdf.ptdf_bus(0, 0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ptdf.ptdf_bus(1, 0) == Catch::Approx(0.0).margin(1e-12));  // slack row
  REQUIRE(ptdf.ptdf_gen(0, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ptdf of the equal reactance triangle splits two to one") {
  SystemSpec sys;
  sys.buses = {1, 2, 3};
  sys.slack_bus = 3;
  sys.lines = {{0, 1, 2, 0.2, 5.0, 100.0, -100.0},
               {1, 2, 3, 0.2, 5.0, 100.0, -100.0},
               {2, 1, 3, 0.2, 5.0, 100.0, -100.0}};
  const PtdfMatrices ptdf = compute_ptdf(sys);
  // Injection at bus 1: the direct line carries 2/3, the detour 1/3.
  REQUIRE(ptdf.ptdf_bus(0, 2) == Catch::Approx(2.0 / 3.0).margin(1e-10));
  REQUIRE(ptdf.ptdf_bus(0, 0) == Catch::Approx(1.0 / 3.0).margin(1e-10));
  REQUIRE(ptdf.ptdf_bus(0, 1) == Catch::Approx(1.0 / 3.0).margin(1e-10));
  for (int l = 0; l < 3; ++l) {
    REQUIRE(ptdf.ptdf_bus(2, l) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("ptdf reproduces direct dc flows for balanced injections") {
  SystemSpec sys;
  sys.buses = {1, 2, 3, 4, 5, 6};
  sys.slack_bus = 4;
  SplitMix64 rng(0xDCF10);
  const int ends[8][2] = {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 1}, {1, 4}, {2, 5}};
  for (int l = 0; l < 8; ++l) {
    sys.lines.push_back({l, ends[l][0], ends[l][1], rng.uniform(0.05, 0.3), 5.0, 999.0, -999.0});
  }
  const PtdfMatrices ptdf = compute_ptdf(sys);
  const int n = sys.num_buses();
  const int slack = sys.bus_index(sys.slack_bus);

  Mat bprime(n, n);
  for (const auto& l : sys.lines) {
    const int a = sys.bus_index(l.from_bus), b = sys.bus_index(l.to_bus);
    const double w = 1.0 / l.reactance;
    bprime(a, a) += w;
    bprime(b, b) += w;
    bprime(a, b) -= w;
    bprime(b, a) -= w;
  }

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> inject(n);
    double mean = 0.0;
    for (double& v : inject) {
      v = rng.uniform(-50.0, 50.0);
      mean += v;
    }
    for (double& v : inject) v -= mean / n;

    // Direct DC solve with the slack angle pinned to zero.
    Mat reduced(n - 1, n - 1);
    std::vector<double> rhs;
    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
      if (i != slack) keep.push_back(i);
    }
    for (int i = 0; i < n - 1; ++i) {
      rhs.push_back(inject[keep[i]]);
      for (int j = 0; j < n - 1; ++j) reduced(i, j) = bprime(keep[i], keep[j]);
    }
    REQUIRE(lu_solve(reduced, rhs));
    std::vector<double> theta(n, 0.0);
    for (int i = 0; i < n - 1; ++i) theta[keep[i]] = rhs[i];

    for (int l = 0; l < sys.num_lines(); ++l) {
      const int a = sys.bus_index(sys.lines[l].from_bus);
      const int b = sys.bus_index(sys.lines[l].to_bus);
      const double direct = (theta[a] - theta[b]) / sys.lines[l].reactance;
      double from_ptdf = 0.0;
      for (int i = 0; i < n; ++i) from_ptdf += inject[i] * ptdf.ptdf_bus(i, l);
      REQUIRE(from_ptdf == Catch::Approx(direct).margin(1e-8));
    }
  }
}

TEST_CASE("segment slopes are breakpoint finite differences") {
  GeneratorParams g = mid_unit();
  g.p_min = 10.0;
  g.p_max = 30.0;
  g.su = 30.0;
  g.sd = 30.0;
  g.pb = {10.0, 20.0, 30.0};
  g.cb = {100.0, 150.0, 220.0};
  const std::vector<double> vc = segment_slopes(g);
  REQUIRE(vc.size() == 2);
  REQUIRE(vc[0] == Catch::Approx(5.0).margin(1e-12));
  REQUIRE(vc[1] == Catch::Approx(7.0).margin(1e-12));

  GeneratorParams one = mid_unit();
  one.p_min = 0.0;
  one.p_max = 100.0;
  one.pb = {0.0, 100.0};
  one.cb = {0.0, 500.0};
  one.nl = 1;
  REQUIRE(segment_slopes(one) == std::vector<double>{5.0});

  // Convex curves give non-decreasing slopes.
  SplitMix64 rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    GeneratorParams conv = mid_unit();
    const int nl = 2 + static_cast<int>(rng.uniform_int(4));
    conv.nl = nl;
    conv.pb.assign(nl + 1, 0.0);
    conv.cb.assign(nl + 1, 50.0);
    conv.p_min = 10.0;
    double slope = rng.uniform(0.5, 2.0);
    conv.pb[0] = conv.p_min;
    for (int i = 1; i <= nl; ++i) {
      conv.pb[i] = conv.pb[i - 1] + rng.uniform(5.0, 20.0);
      conv.cb[i] = conv.cb[i - 1] + slope * (conv.pb[i] - conv.pb[i - 1]);
      slope += rng.uniform(0.0, 1.0);
    }
    conv.p_max = conv.pb[nl];
    conv.su = conv.p_max;
    conv.sd = conv.p_max;
    const std::vector<double> slopes = segment_slopes(conv);
    for (std::size_t i = 0; i + 1 < slopes.size(); ++i) REQUIRE(slopes[i] <= slopes[i + 1] + 1e-12);
  }

  GeneratorParams bad = mid_unit();
  bad.pb = {20.0, 20.0, 80.0};  // zero-width segment
  REQUIRE_THROWS_AS(segment_slopes(bad), ConfigError);
}

TEST_CASE("milp layout: seven blocks, x first, exact binary count") {
  const UcInstance inst = ucfix::triangle_instance_t4();
  const UcBuild built = build_uc_milp(inst);
  const MilpProblem& p = built.problem;
  const VariableMap& vmap = built.vmap;

  REQUIRE(vmap.num_gens() == 2);
  REQUIRE(vmap.horizon() == 4);
  REQUIRE(p.num_vars() == 7 * 2 * 4);
  REQUIRE(p.num_integer() == 3 * 2 * 4);
  REQUIRE(vmap.num_binaries() == 24);

  // x block occupies the first G*T columns, generator-major.
  for (int g = 0; g < 2; ++g) {
    for (int t = 0; t < 4; ++t) {
      REQUIRE(vmap.x(g, t) == g * 4 + t);
      REQUIRE(p.is_integer[vmap.x(g, t)] == 1);
      REQUIRE(p.is_integer[vmap.s(g, t)] == 1);
      REQUIRE(p.is_integer[vmap.z(g, t)] == 1);
      REQUIRE(p.is_integer[vmap.p_above(g, t)] == 0);
      const auto ent = vmap.at(vmap.x(g, t));
      REQUIRE(ent.kind == VarKind::X);
      REQUIRE(ent.gen == g);
      REQUIRE(ent.t == t);
    }
  }

  // Objective: start pays first-rung start cost plus commitment cost, the
  // remaining-on state pays commitment cost, epigraph variables enter as-is.
  REQUIRE(p.c[vmap.s(0, 1)] == Catch::Approx(70.0));
  REQUIRE(p.c[vmap.x(0, 1)] == Catch::Approx(40.0));
  REQUIRE(p.c[vmap.s(1, 2)] == Catch::Approx(55.0));
  REQUIRE(p.c[vmap.x(1, 2)] == Catch::Approx(30.0));
  REQUIRE(p.c[vmap.f_cost(0, 0)] == 1.0);
  REQUIRE(p.c[vmap.v_cost(1, 3)] == 1.0);
  REQUIRE(p.c[vmap.p_above(0, 0)] == 0.0);

  // Envelope caps: dispatch width, capacity, start-cost lift, cost-curve rise.
  REQUIRE(p.u[vmap.p_above(0, 0)] == Catch::Approx(60.0));
  REQUIRE(p.u[vmap.p_bar(0, 0)] == Catch::Approx(80.0));
  REQUIRE(p.u[vmap.f_cost(0, 0)] == Catch::Approx(30.0));
  REQUIRE(p.u[vmap.v_cost(0, 0)] == Catch::Approx(150.0));
}

TEST_CASE("single period, single generator: cost decomposition is exact") {
  GeneratorParams g = mid_unit();
  g.nd = {1, 3};
  const UcInstance inst = single_gen_instance(g, {55.0});
  const UcBuild built = build_uc_milp(inst);

  const BnbResult r = solve_bnb(built.problem);
  REQUIRE(r.status == BnbStatus::Optimal);
  // Unit stays on: p' = 35 on the second segment, v = 3*5 + 60 = 75, plus
  // the commitment cost 40. No start, so f = 0.
  REQUIRE(r.upper_bound == Catch::Approx(115.0).margin(1e-6));

  const UcSchedule sched = decode_solution(r.incumbent, built.vmap);
  REQUIRE(sched.x(0, 0) == 1.0);
  REQUIRE(sched.s(0, 0) == 0.0);
  REQUIRE(sched.v_cost(0, 0) == Catch::Approx(75.0).margin(1e-6));
  REQUIRE(sched.f_cost(0, 0) == Catch::Approx(0.0).margin(1e-6));
  REQUIRE(sched.total_cost == Catch::Approx(115.0).margin(1e-6));
  REQUIRE(validate_schedule(inst, sched).empty());

  const ucfix::UcEnumResult oracle = ucfix::enumerate_uc_optimum(inst, built.problem, built.vmap);
  REQUIRE(oracle.feasible);
  REQUIRE(oracle.objective == Catch::Approx(r.upper_bound).margin(1e-6));
}

TEST_CASE("ramp limits shape the dispatch at the horizon boundary") {
  GeneratorParams g;
  g.p_min = 50.0;
  g.p_max = 120.0;
  g.su = 60.0;
  g.sd = 55.0;
  g.ut = 1;
  g.dt = 1;
  g.ru = 15.0;
  g.rd = 10.0;
  g.cu = {10.0};
  g.nd = {1};
  g.pb = {50.0, 120.0};
  g.cb = {0.0, 140.0};
  g.nl = 1;
  g.v0 = 1;
  g.p0 = 80.0;
  g.init_state_periods = 1;

  const UcInstance inst = single_gen_instance(g, {5.0, 5.0});
  const UcBuild built = build_uc_milp(inst);
  const BnbResult r = solve_bnb(built.problem);
  REQUIRE(r.status == BnbStatus::Optimal);

  // Shutting down is blocked by the ramp-down rate from p0 = 80, so the unit
  // coasts down: p' = 30 - rd = 20, then 10, at slope 2 each.
  REQUIRE(r.upper_bound == Catch::Approx(60.0).margin(1e-6));
  const UcSchedule sched = decode_solution(r.incumbent, built.vmap);
  REQUIRE(sched.x(0, 0) == 1.0);
  REQUIRE(sched.x(0, 1) == 1.0);
  REQUIRE(sched.p_above(0, 0) == Catch::Approx(20.0).margin(1e-6));
  REQUIRE(sched.p_above(0, 1) == Catch::Approx(10.0).margin(1e-6));
  REQUIRE(validate_schedule(inst, sched).empty());
}

TEST_CASE("line limits bind and can prove infeasibility") {
  SystemSpec sys;
  sys.buses = {1, 2};
  sys.slack_bus = 2;
  sys.lines = {{0, 1, 2, 0.1, 10.0, 30.0, -30.0}};
  GeneratorParams g;
  g.bus = 1;
  g.p_min = 20.0;
  g.p_max = 80.0;
  g.su = 80.0;
  g.sd = 80.0;
  g.ut = 1;
  g.dt = 1;
  g.ru = 80.0;
  g.rd = 80.0;
  g.cu = {10.0};
  g.nd = {1};
  g.pb = {20.0, 80.0};
  g.cb = {20.0, 80.0};
  g.nl = 1;
  g.v0 = 1;
  g.p0 = 20.0;
  g.init_state_periods = 1;
  sys.generators = {g};

  LoadScenario light;
  light.d = Mat(2, 1);
  light.d(0, 0) = 0.0;
  light.d(1, 0) = 25.0;
  light.r = {0.0};
  const UcInstance ok = make_instance(sys, light);
  const UcBuild built_ok = build_uc_milp(ok);
  const BnbResult r_ok = solve_bnb(built_ok.problem);
  REQUIRE(r_ok.status == BnbStatus::Optimal);
  // Generation rides the line at 25 MW: p' = 5 at slope 1 plus base cost 20.
  REQUIRE(r_ok.upper_bound == Catch::Approx(25.0).margin(1e-6));
  REQUIRE(validate_schedule(ok, decode_solution(r_ok.incumbent, built_ok.vmap)).empty());

  LoadScenario heavy = light;
  heavy.d(1, 0) = 50.0;  // exceeds the 30 MW line
  const UcInstance bad = make_instance(sys, heavy);
  const UcBuild built_bad = build_uc_milp(bad);
  const BnbResult r_bad = solve_bnb(built_bad.problem);
  REQUIRE(r_bad.status == BnbStatus::InfeasibleProven);
}

TEST_CASE("scenario generation scales, splits and reproduces") {
  const std::vector<double> shape = {60.0, 80.0, 100.0, 70.0};
  const auto quiet = generate_load_scenarios(3, shape, 3, 90.0, 0.1, 0.0, 7);
  REQUIRE(quiet.size() == 3);
  for (const auto& scen : quiet) {
    scen.validate();
    for (int t = 0; t < 4; ++t) {
      const double want_total = 90.0 * shape[t] / 100.0;
      REQUIRE(scen.total_load(t) == Catch::Approx(want_total).margin(1e-9));
      REQUIRE(scen.r[t] == Catch::Approx(0.1 * scen.total_load(t)).margin(1e-12));
      for (int i = 0; i < 3; ++i) REQUIRE(scen.d(i, t) == quiet[0].d(i, t));
    }
  }

  const auto no_reserve = generate_load_scenarios(3, shape, 1, 90.0, 0.0, 0.0, 7);
  for (double r : no_reserve[0].r) REQUIRE(r == 0.0);

  const auto a = generate_load_scenarios(4, shape, 2, 120.0, 0.05, 0.1, 42);
  const auto b = generate_load_scenarios(4, shape, 2, 120.0, 0.05, 0.1, 42);
  const auto c = generate_load_scenarios(4, shape, 2, 120.0, 0.05, 0.1, 43);
  bool differs_seed = false, differs_scen = false;
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < 4; ++i) {
      for (int t = 0; t < 4; ++t) {
        REQUIRE(a[s].d(i, t) == b[s].d(i, t));  // bit-identical under the seed
        differs_seed = differs_seed || a[s].d(i, t) != c[s].d(i, t);
        differs_scen = differs_scen || a[0].d(i, t) != a[1].d(i, t);
      }
    }
  }
  REQUIRE(differs_seed);
  REQUIRE(differs_scen);

  REQUIRE_THROWS_AS(generate_load_scenarios(3, shape, 1, 90.0, 0.0, 1.5, 7), ConfigError);
}

TEST_CASE("decode: all-off vector, fractional rejection, solver round trip") {
  const UcInstance inst = ucfix::triangle_instance_t2();
  const UcBuild built = build_uc_milp(inst);

  std::vector<double> zeros(built.problem.num_vars(), 0.0);
  const UcSchedule off = decode_solution(zeros, built.vmap);
  REQUIRE(off.total_cost == 0.0);
  for (int g = 0; g < 2; ++g) {
    for (int t = 0; t < 2; ++t) REQUIRE(off.x(g, t) == 0.0);
  }

  std::vector<double> frac = zeros;
  frac[built.vmap.x(0, 0)] = 0.4;
  REQUIRE_THROWS_AS(decode_solution(frac, built.vmap), DecodeError);

  const BnbResult r = solve_bnb(built.problem);
  REQUIRE(r.status == BnbStatus::Optimal);
  const UcSchedule sched = decode_solution(r.incumbent, built.vmap);
  REQUIRE(sched.total_cost ==
          Catch::Approx(r.upper_bound).epsilon(1e-6).margin(1e-9));
  REQUIRE(validate_schedule(inst, sched).empty());

  const ucfix::UcEnumResult oracle = ucfix::enumerate_uc_optimum(inst, built.problem, built.vmap);
  REQUIRE(oracle.feasible);
  REQUIRE(r.upper_bound == Catch::Approx(oracle.objective).margin(1e-6));
}

TEST_CASE("validator reports the family that breaks") {
  const UcInstance inst = ucfix::triangle_instance_t4();
  const UcBuild built = build_uc_milp(inst);

  // Everything off against positive load: load balance fails at every t.
  const UcSchedule off = decode_solution(std::vector<double>(built.problem.num_vars(), 0.0),
                                         built.vmap);
  const ViolationReport rep = validate_schedule(inst, off);
  REQUIRE_FALSE(rep.empty());
  int load_hits = 0;
  for (const auto& v : rep.violations) {
    if (v.family == "load_balance") {
      ++load_hits;
      REQUIRE(v.who == -1);
    }
  }
  REQUIRE(load_hits == 4);

  // A unit that vanishes without a shutdown flag breaks the state chain.
  GeneratorParams g = mid_unit();
  g.p0 = 20.0;
  const UcInstance tiny = single_gen_instance(g, {0.0, 0.0});
  UcSchedule sched;
  sched.x = Mat(1, 2);
  sched.s = Mat(1, 2);
  sched.z = Mat(1, 2);
  sched.p_above = Mat(1, 2);
  sched.p_bar = Mat(1, 2);
  sched.f_cost = Mat(1, 2);
  sched.v_cost = Mat(1, 2);
  sched.x(0, 0) = 1.0;
  sched.p_bar(0, 0) = 20.0;
  const ViolationReport chain = validate_schedule(tiny, sched);
  REQUIRE(chain.violations.size() == 1);
  REQUIRE(chain.violations[0].family == "state_transition");
  REQUIRE(chain.violations[0].t == 1);
  REQUIRE(chain.violations[0].amount == Catch::Approx(1.0));
}

TEST_CASE("system and scenario json round trips") {
  const SystemSpec sys = ucfix::triangle_system();
  const auto j1 = system_to_json(sys);
  const SystemSpec back = system_from_json(j1);
  REQUIRE(system_to_json(back) == j1);
  REQUIRE(back.generators[0].cu == sys.generators[0].cu);
  REQUIRE(back.lines[2].f_neg == sys.lines[2].f_neg);

  const LoadScenario scen = ucfix::triangle_loads_t4();
  const auto j2 = scenario_to_json(scen);
  const LoadScenario scen_back = scenario_from_json(j2);
  REQUIRE(scenario_to_json(scen_back) == j2);
  REQUIRE(scen_back.d(2, 3) == scen.d(2, 3));
}

TEST_CASE("instance validation checks shapes") {
  const SystemSpec sys = ucfix::triangle_system();
  UcInstance inst = ucfix::triangle_instance_t4();
  inst.horizon = 5;
  REQUIRE_THROWS_AS(inst.validate(), ConfigError);
  inst = ucfix::triangle_instance_t4();
  inst.ptdf_bus = Mat(2, 3);
  REQUIRE_THROWS_AS(inst.validate(), ConfigError);
  REQUIRE_NOTHROW(ucfix::triangle_instance_t4().validate());
}

TEST_CASE("four period two generator instance matches the enumeration oracle") {
  const UcInstance inst = ucfix::triangle_instance_t4();
  const UcBuild built = build_uc_milp(inst);

  const BnbResult r = solve_bnb(built.problem);
  REQUIRE(r.status == BnbStatus::Optimal);

  const ucfix::UcEnumResult oracle = ucfix::enumerate_uc_optimum(inst, built.problem, built.vmap);
  REQUIRE(oracle.feasible);
  REQUIRE(r.upper_bound == Catch::Approx(oracle.objective).margin(1e-6));

  const UcSchedule sched = decode_solution(r.incumbent, built.vmap);
  REQUIRE(validate_schedule(inst, sched).empty());
  REQUIRE(sched.total_cost == Catch::Approx(r.upper_bound).epsilon(1e-6).margin(1e-9));
}
