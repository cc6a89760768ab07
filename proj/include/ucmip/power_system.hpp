// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"

namespace ucmip {

// Piecewise-linear cost data uses nl+1 breakpoints: pb[0] = p_min and
// pb[nl] = p_max, with cb the cost at each breakpoint. Start-up costs come as
// parallel vectors cu/nd: cu[k] is the price of a start after nd[k] periods
// of downtime.
struct GeneratorParams {
  int id = 0;
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double su = 0.0;  // start-up ramp cap, MW
  double sd = 0.0;  // shut-down ramp cap, MW
  int ut = 1;       // minimum up time, periods
  int dt = 1;       // minimum down time, periods
  double ru = 0.0;  // ramp-up rate, MW per period
  double rd = 0.0;  // ramp-down rate, MW per period
  std::vector<double> cu;  // start-up cost ladder, $
  std::vector<int> nd;     // downtime thresholds for cu, periods
  std::vector<double> pb;  // output breakpoints, MW
  std::vector<double> cb;  // cost at breakpoints, $
  int nl = 1;              // piecewise segment count
  int v0 = 0;              // initial on/off status
  double p0 = 0.0;         // initial output, MW
  int init_state_periods = 1;  // periods already spent in the initial state

  void validate() const {
    if (p_min > p_max) throw ConfigError("generator: p_min > p_max");
    if (ut < 1 || dt < 1) throw ConfigError("generator: ut and dt must be >= 1");
    if (su < p_min || sd < p_min) {
      throw ConfigError("generator: start-up/shut-down ramp below p_min");
    }
    if (static_cast<int>(pb.size()) != nl + 1 || pb.size() != cb.size()) {
      throw ConfigError("generator: need nl+1 breakpoints with matching costs");
    }
    for (int n = 0; n < nl; ++n) {
      if (pb[n + 1] <= pb[n]) throw ConfigError("generator: pb not strictly increasing");
      if (cb[n + 1] < cb[n]) throw ConfigError("generator: cb decreasing");
    }
    if (std::abs(pb.front() - p_min) > 1e-9 || std::abs(pb.back() - p_max) > 1e-9) {
      throw ConfigError("generator: pb must span [p_min, p_max]");
    }
    if (cu.size() != nd.size() || cu.empty()) {
      throw ConfigError("generator: cu and nd must be non-empty and equal length");
    }
    // Longer downtime never makes a start cheaper; the ladder starts at the
    // minimum-down threshold.
    if (nd.front() < dt) throw ConfigError("generator: nd[0] below dt");
    for (std::size_t k = 0; k + 1 < nd.size(); ++k) {
      if (nd[k + 1] <= nd[k]) throw ConfigError("generator: nd not increasing");
      if (cu[k + 1] < cu[k]) throw ConfigError("generator: cu decreasing");
    }
    if (init_state_periods < 1) throw ConfigError("generator: init_state_periods < 1");
  }
};

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;    // p.u.
  double susceptance = 0.0;  // p.u.
  double f_pos = 0.0;        // forward capacity, MW
  double f_neg = 0.0;        // reverse capacity, MW (non-positive)

  void validate() const {
    if (from_bus == to_bus) throw ConfigError("line: from_bus == to_bus");
    if (reactance <= 0.0) throw ConfigError("line: reactance must be positive");
    if (f_neg > 0.0 || f_pos < 0.0) throw ConfigError("line: need f_neg <= 0 <= f_pos");
  }
};

// Buses are identified by arbitrary integer ids; positions in `buses` define
// the row order of every per-bus matrix (loads, PTDF).
struct SystemSpec {
  std::vector<int> buses;
  std::vector<Line> lines;
  std::vector<GeneratorParams> generators;
  int slack_bus = 0;

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_lines() const { return static_cast<int>(lines.size()); }
  int num_gens() const { return static_cast<int>(generators.size()); }

  int bus_index(int bus_id) const {
    for (int i = 0; i < num_buses(); ++i) {
      if (buses[i] == bus_id) return i;
    }
    throw ConfigError("unknown bus id " + std::to_string(bus_id));
  }

  void validate() const {
    if (buses.empty()) throw ConfigError("system: no buses");
    for (int i = 0; i < num_buses(); ++i) {
      for (int j = i + 1; j < num_buses(); ++j) {
        if (buses[i] == buses[j]) throw ConfigError("system: duplicate bus id");
      }
    }
    bus_index(slack_bus);
    std::vector<char> has_gen(buses.size(), 0);
    for (const auto& g : generators) {
      g.validate();
      const int bi = bus_index(g.bus);
      if (has_gen[bi]) throw ConfigError("system: more than one generator on a bus");
      has_gen[bi] = 1;
    }
    for (const auto& l : lines) {
      l.validate();
      bus_index(l.from_bus);
      bus_index(l.to_bus);
    }
    if (!connected()) throw ConfigError("system: bus graph is disconnected");
  }

  bool connected() const {
    if (buses.empty()) return false;
    std::vector<char> seen(buses.size(), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    int count = 1;
    while (!frontier.empty()) {
      const int at = frontier.front();
      frontier.pop();
      for (const auto& l : lines) {
        const int a = bus_index(l.from_bus);
        const int b = bus_index(l.to_bus);
        const int next = a == at ? b : (b == at ? a : -1);
        if (next >= 0 && !seen[next]) {
          seen[next] = 1;
          ++count;
          frontier.push(next);
        }
      }
    }
    return count == num_buses();
  }
};

// d is num_buses x T (MW per bus and period); r is the spinning-reserve
// requirement per period.
struct LoadScenario {
  Mat d;
  std::vector<double> r;

  int horizon() const { return d.cols(); }

  void validate() const {
    if (d.cols() < 1) throw ConfigError("scenario: empty horizon");
    if (static_cast<int>(r.size()) != d.cols()) throw ConfigError("scenario: r length != T");
    const double* p = d.data();
    for (int i = 0; i < d.rows() * d.cols(); ++i) {
      if (p[i] < 0.0) throw ConfigError("scenario: negative load");
    }
    for (double v : r) {
      if (v < 0.0) throw ConfigError("scenario: negative reserve");
    }
  }

  double total_load(int t) const {
    double sum = 0.0;
    for (int i = 0; i < d.rows(); ++i) sum += d(i, t);
    return sum;
  }
};

// DC power-transfer factors. ptdf_bus(i, l) is the MW flow induced on line l
// by 1 MW injected at bus i and withdrawn at the slack; the slack row is zero.
struct PtdfMatrices {
  Mat ptdf_gen;  // num_gens x num_lines
  Mat ptdf_bus;  // num_buses x num_lines
};

inline PtdfMatrices compute_ptdf(const SystemSpec& sys) {
  sys.validate();
  const int n = sys.num_buses();
  const int m = sys.num_lines();
  const int slack = sys.bus_index(sys.slack_bus);

  // Susceptance Laplacian from 1/reactance weights, slack row/col removed.
  Mat bprime(n, n);
  for (const auto& l : sys.lines) {
    const int a = sys.bus_index(l.from_bus);
    const int b = sys.bus_index(l.to_bus);
    const double w = 1.0 / l.reactance;
    bprime(a, a) += w;
    bprime(b, b) += w;
    bprime(a, b) -= w;
    bprime(b, a) -= w;
  }
  std::vector<int> keep;
  keep.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (i != slack) keep.push_back(i);
  }
  const int k = static_cast<int>(keep.size());
  PtdfMatrices out;
  out.ptdf_bus = Mat(n, m);
  out.ptdf_gen = Mat(sys.num_gens(), m);
  if (k > 0 && m > 0) {
    Mat reduced(k, k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) reduced(i, j) = bprime(keep[i], keep[j]);
    }
    Mat inv;
    if (!invert(reduced, inv)) {
      throw NumericalError("compute_ptdf: reduced susceptance matrix is singular");
    }
    // Column ci of the inverse is the angle response to injection at keep[ci].
    std::vector<double> theta(n, 0.0);
    for (int ci = 0; ci < k; ++ci) {
      const int bus = keep[ci];
      for (int r = 0; r < n; ++r) theta[r] = 0.0;
      for (int r = 0; r < k; ++r) theta[keep[r]] = inv(r, ci);
      for (int l = 0; l < m; ++l) {
        const int a = sys.bus_index(sys.lines[l].from_bus);
        const int b = sys.bus_index(sys.lines[l].to_bus);
        out.ptdf_bus(bus, l) = (theta[a] - theta[b]) / sys.lines[l].reactance;
      }
    }
  }
  for (int g = 0; g < sys.num_gens(); ++g) {
    const int bi = sys.bus_index(sys.generators[g].bus);
    for (int l = 0; l < m; ++l) out.ptdf_gen(g, l) = out.ptdf_bus(bi, l);
  }
  return out;
}

struct UcInstance {
  SystemSpec system;
  LoadScenario scenario;
  int horizon = 0;
  Mat ptdf_gen;
  Mat ptdf_bus;

  void validate() const {
    system.validate();
    scenario.validate();
    if (scenario.horizon() != horizon) throw ConfigError("instance: horizon mismatch");
    if (scenario.d.rows() != system.num_buses()) {
      throw ConfigError("instance: load rows != bus count");
    }
    if (ptdf_bus.rows() != system.num_buses() || ptdf_bus.cols() != system.num_lines() ||
        ptdf_gen.rows() != system.num_gens() || ptdf_gen.cols() != system.num_lines()) {
      throw ConfigError("instance: PTDF shape mismatch");
    }
  }
};

inline UcInstance make_instance(const SystemSpec& sys, const LoadScenario& scen) {
  UcInstance inst;
  inst.system = sys;
  inst.scenario = scen;
  inst.horizon = scen.horizon();
  PtdfMatrices ptdf = compute_ptdf(sys);
  inst.ptdf_gen = std::move(ptdf.ptdf_gen);
  inst.ptdf_bus = std::move(ptdf.ptdf_bus);
  inst.validate();
  return inst;
}

// Scales base_shape to the requested peak, splits it over buses with weights
// drawn once from the seed, then perturbs each entry with Normal(0, sigma)
// multiplicative noise clipped at zero. Reserve tracks realized total load.
inline std::vector<LoadScenario> generate_load_scenarios(int num_buses,
                                                         const std::vector<double>& base_shape,
                                                         int n_scenarios, double peak,
                                                         double reserve_fraction,
                                                         double noise_sigma, uint64_t seed) {
  if (num_buses < 1) throw ConfigError("scenarios: need at least one bus");
  if (base_shape.empty()) throw ConfigError("scenarios: empty base shape");
  if (noise_sigma < 0.0 || noise_sigma >= 1.0) {
    throw ConfigError("scenarios: noise_sigma outside [0, 1)");
  }
  double shape_max = 0.0;
  for (double v : base_shape) {
    if (v <= 0.0) throw ConfigError("scenarios: base shape must be positive");
    shape_max = std::max(shape_max, v);
  }
  SplitMix64 rng(seed);
  // One weight split per system; every scenario shares it.
  std::vector<double> weight(num_buses);
  double wsum = 0.0;
  for (int i = 0; i < num_buses; ++i) {
    weight[i] = rng.uniform(0.5, 1.5);
    wsum += weight[i];
  }
  for (double& w : weight) w /= wsum;

  const int t_len = static_cast<int>(base_shape.size());
  std::vector<LoadScenario> out;
  out.reserve(n_scenarios);
  for (int s = 0; s < n_scenarios; ++s) {
    LoadScenario scen;
    scen.d = Mat(num_buses, t_len);
    scen.r.assign(t_len, 0.0);
    for (int i = 0; i < num_buses; ++i) {
      for (int t = 0; t < t_len; ++t) {
        const double base = peak * base_shape[t] / shape_max * weight[i];
        const double noisy = noise_sigma > 0.0 ? base * (1.0 + rng.normal(0.0, noise_sigma)) : base;
        scen.d(i, t) = std::max(noisy, 0.0);
      }
    }
    for (int t = 0; t < t_len; ++t) scen.r[t] = reserve_fraction * scen.total_load(t);
    out.push_back(std::move(scen));
  }
  return out;
}

inline nlohmann::json system_to_json(const SystemSpec& sys) {
  nlohmann::json j;
  j["buses"] = sys.buses;
  j["slack_bus"] = sys.slack_bus;
  j["lines"] = nlohmann::json::array();
  for (const auto& l : sys.lines) {
    j["lines"].push_back({{"id", l.id},
                          {"from_bus", l.from_bus},
                          {"to_bus", l.to_bus},
                          {"reactance", l.reactance},
                          {"susceptance", l.susceptance},
                          {"f_pos", l.f_pos},
                          {"f_neg", l.f_neg}});
  }
  j["generators"] = nlohmann::json::array();
  for (const auto& g : sys.generators) {
    j["generators"].push_back({{"id", g.id},
                               {"bus", g.bus},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"su", g.su},
                               {"sd", g.sd},
                               {"ut", g.ut},
                               {"dt", g.dt},
                               {"ru", g.ru},
                               {"rd", g.rd},
                               {"cu", g.cu},
                               {"nd", g.nd},
                               {"pb", g.pb},
                               {"cb", g.cb},
                               {"nl", g.nl},
                               {"v0", g.v0},
                               {"p0", g.p0},
                               {"init_state_periods", g.init_state_periods}});
  }
  return j;
}

inline SystemSpec system_from_json(const nlohmann::json& j) {
  SystemSpec sys;
  sys.buses = j.at("buses").get<std::vector<int>>();
  sys.slack_bus = j.at("slack_bus").get<int>();
  for (const auto& jl : j.at("lines")) {
    Line l;
    l.id = jl.at("id").get<int>();
    l.from_bus = jl.at("from_bus").get<int>();
    l.to_bus = jl.at("to_bus").get<int>();
    l.reactance = jl.at("reactance").get<double>();
    l.susceptance = jl.at("susceptance").get<double>();
    l.f_pos = jl.at("f_pos").get<double>();
    l.f_neg = jl.at("f_neg").get<double>();
    sys.lines.push_back(l);
  }
  for (const auto& jg : j.at("generators")) {
    GeneratorParams g;
    g.id = jg.at("id").get<int>();
    g.bus = jg.at("bus").get<int>();
    g.p_min = jg.at("p_min").get<double>();
    g.p_max = jg.at("p_max").get<double>();
    g.su = jg.at("su").get<double>();
    g.sd = jg.at("sd").get<double>();
    g.ut = jg.at("ut").get<int>();
    g.dt = jg.at("dt").get<int>();
    g.ru = jg.at("ru").get<double>();
    g.rd = jg.at("rd").get<double>();
    g.cu = jg.at("cu").get<std::vector<double>>();
    g.nd = jg.at("nd").get<std::vector<int>>();
    g.pb = jg.at("pb").get<std::vector<double>>();
    g.cb = jg.at("cb").get<std::vector<double>>();
    g.nl = jg.at("nl").get<int>();
    g.v0 = jg.at("v0").get<int>();
    g.p0 = jg.at("p0").get<double>();
    g.init_state_periods = jg.at("init_state_periods").get<int>();
    sys.generators.push_back(std::move(g));
  }
  sys.validate();
  return sys;
}

inline nlohmann::json scenario_to_json(const LoadScenario& scen) {
  nlohmann::json j;
  j["d"] = nlohmann::json::array();
  for (int i = 0; i < scen.d.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int t = 0; t < scen.d.cols(); ++t) row.push_back(scen.d(i, t));
    j["d"].push_back(std::move(row));
  }
  j["r"] = scen.r;
  return j;
}

inline LoadScenario scenario_from_json(const nlohmann::json& j) {
  LoadScenario scen;
  const auto& rows = j.at("d");
  const int n = static_cast<int>(rows.size());
  const int t_len = n > 0 ? static_cast<int>(rows[0].size()) : 0;
  scen.d = Mat(n, t_len);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != t_len) {
      throw ConfigError("scenario json: ragged load matrix");
    }
    for (int t = 0; t < t_len; ++t) scen.d(i, t) = rows[i][t].get<double>();
  }
  scen.r = j.at("r").get<std::vector<double>>();
  scen.validate();
  return scen;
}

}  // namespace ucmip
