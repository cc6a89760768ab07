// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ucmip/bnb.hpp"
#include "ucmip/graphs.hpp"
#include "ucmip/milp.hpp"
#include "ucmip/models.hpp"
#include "ucmip/uc_model.hpp"

namespace ucmip {

// Dive by restriction: fix the state variables the model predicts most
// reliably, at several fixing ratios, and solve the resulting sub-MIPs in
// parallel. Any feasible sub-MIP optimum is an upper bound on the original
// optimum, so the best of them is returned.
struct DivingConfig {
  double epsilon = 0.95;  // per-dimension accuracy threshold for fixing
  std::vector<double> ratios = {0.75, 0.80, 0.85, 0.90, 0.95, 1.00};
  // Budget for the whole dive. Time and node limits are split evenly across
  // sub-MIPs; leftover budget from early finishers is not redistributed, so
  // results do not depend on completion order.
  BnbConfig sub_solver;
  int workers = 2;  // max concurrent solves
  // Each solve gets its own policy instance; a shared pointer in sub_solver
  // would race on the policy's internal statistics.
  std::function<std::unique_ptr<BranchingPolicy>()> branching_factory;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("DivingConfig: epsilon outside [0,1]");
    if (ratios.empty()) throw ConfigError("DivingConfig: empty ratio set");
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0)) throw ConfigError("DivingConfig: ratio outside [0,1]");
      if (i > 0 && ratios[i] < ratios[i - 1]) throw ConfigError("DivingConfig: ratios must be ascending");
    }
    if (workers < 1) throw ConfigError("DivingConfig: workers must be positive");
    if (sub_solver.branching != nullptr) {
      throw ConfigError("DivingConfig: set branching_factory instead of sub_solver.branching");
    }
  }
};

// Dimensions whose validation accuracy clears the threshold, most reliable
// first. Ties keep the lower dimension so the order is total.
struct CandidateSet {
  std::vector<std::pair<int, double>> dims;  // (dimension, accuracy)

  int size() const { return static_cast<int>(dims.size()); }
  bool empty() const { return dims.empty(); }
};

inline CandidateSet select_candidates(const std::vector<double>& acc, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("select_candidates: epsilon outside [0,1]");
  CandidateSet set;
  for (std::size_t d = 0; d < acc.size(); ++d) {
    if (!(acc[d] >= 0.0 && acc[d] <= 1.0)) throw ConfigError("select_candidates: accuracy outside [0,1]");
    if (acc[d] >= epsilon) set.dims.push_back({static_cast<int>(d), acc[d]});
  }
  std::stable_sort(set.dims.begin(), set.dims.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return set;
}

// Number of candidates fixed at ratio rho out of n. The nudge keeps decimal
// ratios like 0.85 from landing one ulp below an integer product.
inline int ratio_fix_count(double rho, int n) {
  return static_cast<int>(std::floor(rho * n + 1e-9));
}

// One sub-MIP per ratio: the first floor(rho * |cands|) candidates are fixed
// to round(p_d). Candidate dimensions double as problem columns because the
// state block leads the column order. Fix sets nest: a smaller ratio fixes a
// prefix of a larger ratio's set.
inline std::vector<MilpProblem> build_sub_mips(const MilpProblem& problem,
                                               const std::vector<double>& probs,
                                               const CandidateSet& cands,
                                               const std::vector<double>& ratios) {
  std::vector<MilpProblem> subs;
  subs.reserve(ratios.size());
  for (double rho : ratios) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("build_sub_mips: ratio outside [0,1]");
    const int k = ratio_fix_count(rho, cands.size());
    Assignment fixes;
    for (int i = 0; i < k; ++i) {
      const int d = cands.dims[i].first;
      if (d < 0 || d >= static_cast<int>(probs.size())) {
        throw ShapeError("build_sub_mips: candidate dimension outside the probability vector");
      }
      if (!(probs[d] >= 0.0 && probs[d] <= 1.0)) {
        throw ConfigError("build_sub_mips: probability outside [0,1]");
      }
      fixes.add(d, std::floor(probs[d] + 0.5));
    }
    subs.push_back(fix_variables(problem, fixes));
  }
  return subs;
}

struct SubMipOutcome {
  BnbStatus status = BnbStatus::NoIncumbentLimit;
  bool has_solution = false;
  double objective = kInf;
  std::vector<double> x;
  long long nodes = 0;
  long long lp_iterations = 0;
  double elapsed_s = 0.0;
  std::vector<TimelineEntry> timeline;
  std::string error;  // non-empty when the solve aborted
};

struct DivingResult {
  double c_min = kInf;
  std::vector<double> x_min;
  int winner = -1;  // index into the sub-MIP list, -1 when nothing solved
  std::vector<SubMipOutcome> outcomes;       // position-indexed, order of input
  std::vector<TimelineEntry> timeline;       // merged best-so-far curve
};

namespace detail {

// All solves start together, so per-solve work counters share one axis.
// Sorting by (work, slot) keeps the merge independent of wall-clock jitter.
inline std::vector<TimelineEntry> merge_timelines(const std::vector<SubMipOutcome>& outcomes) {
  std::vector<std::pair<int, TimelineEntry>> events;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    for (const TimelineEntry& e : outcomes[i].timeline) events.push_back({static_cast<int>(i), e});
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.second.work != b.second.work) return a.second.work < b.second.work;
    if (a.first != b.first) return a.first < b.first;
    return a.second.objective < b.second.objective;
  });
  std::vector<TimelineEntry> merged;
  double best = kInf;
  for (const auto& [slot, e] : events) {
    if (e.objective < best) {
      best = e.objective;
      merged.push_back(e);
    }
  }
  return merged;
}

inline BnbConfig per_sub_config(const DivingConfig& config, int num_subs) {
  BnbConfig cfg = config.sub_solver;
  if (std::isfinite(cfg.time_limit)) cfg.time_limit /= num_subs;
  if (cfg.node_limit != std::numeric_limits<long long>::max()) {
    cfg.node_limit = std::max(1LL, cfg.node_limit / num_subs);
  }
  return cfg;
}

inline std::vector<SubMipOutcome> run_sub_mips(const std::vector<MilpProblem>& sub_mips,
                                               const DivingConfig& config) {
  const int n = static_cast<int>(sub_mips.size());
  const BnbConfig shared = per_sub_config(config, n);
  std::vector<SubMipOutcome> outcomes(n);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      SubMipOutcome& out = outcomes[i];
      try {
        BnbConfig cfg = shared;
        std::unique_ptr<BranchingPolicy> policy;
        if (config.branching_factory) {
          policy = config.branching_factory();
          cfg.branching = policy.get();
        }
        BnbResult res = solve_bnb(sub_mips[i], cfg);
        out.status = res.status;
        out.has_solution = res.has_incumbent();
        out.objective = out.has_solution ? res.upper_bound : kInf;
        out.x = std::move(res.incumbent);
        out.nodes = res.nodes_processed;
        out.lp_iterations = res.lp_iterations;
        out.elapsed_s = res.elapsed_s;
        out.timeline = std::move(res.incumbent_timeline);
      } catch (const std::exception& ex) {
        // A thrown solve must not take down the other threads; record it as
        // an incumbent-less slot.
        out = SubMipOutcome{};
        out.error = ex.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int num_workers = std::min(config.workers, n);
  pool.reserve(num_workers);
  for (int w = 0; w < num_workers; ++w) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  return outcomes;
}

inline DivingResult pick_best(std::vector<SubMipOutcome> outcomes) {
  DivingResult res;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].has_solution && outcomes[i].objective < res.c_min) {
      res.c_min = outcomes[i].objective;
      res.winner = static_cast<int>(i);
    }
  }
  if (res.winner >= 0) res.x_min = outcomes[res.winner].x;
  res.timeline = merge_timelines(outcomes);
  res.outcomes = std::move(outcomes);
  return res;
}

}  // namespace detail

// Solves every sub-MIP under an even split of the budget and returns the best
// feasible result. Ties go to the earlier list position, so the output does
// not depend on which worker finished first.
inline DivingResult solve_parallel(const std::vector<MilpProblem>& sub_mips,
                                   const DivingConfig& config) {
  if (sub_mips.empty()) throw ConfigError("solve_parallel: empty sub-MIP list");
  config.validate();
  DivingResult res = detail::pick_best(detail::run_sub_mips(sub_mips, config));
  if (res.winner < 0) {
    throw NoSolutionError("solve_parallel: no sub-MIP produced a feasible point");
  }
  return res;
}

// Model scores for every state dimension, as probabilities of being 1 in the
// best solution. Row-major generator-by-period order matches the column order
// of the state block.
inline std::vector<double> dive_probabilities_pi(ParamStore& params, const PiGcnConfig& cfg,
                                                 const UcInstance& inst) {
  const SpatiotemporalGraph st = build_spatiotemporal_graph(inst);
  const SpatialGraph sp = build_spatial_graph(inst);
  const ScaledLaplacian lap = scaled_laplacian(st.adjacency);
  Tape t;
  const Var logits = pi_gcn_forward(t, params, cfg, st, sp, lap, generator_bus_rows(inst));
  const std::vector<double>& v = t.values(logits);
  std::vector<double> probs(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) probs[i] = Tape::stable_sigmoid(v[i]);
  return probs;
}

inline std::vector<double> dive_probabilities_mb(ParamStore& params, const MbGcnConfig& cfg,
                                                 const UcBuild& built) {
  const LpSolution lp = solve_lp(built.problem);
  if (lp.status != LpStatus::Optimal) {
    throw NumericalError("dive_probabilities_mb: root relaxation is not optimal");
  }
  const BipartiteGraph g = build_bipartite_graph(built.problem, lp, {});
  std::vector<int> cols(built.vmap.block_size());
  std::iota(cols.begin(), cols.end(), 0);
  Tape t;
  const Var logits = mb_gcn_forward(t, params, cfg, g, cols);
  const std::vector<double>& v = t.values(logits);
  std::vector<double> probs(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) probs[i] = Tape::stable_sigmoid(v[i]);
  return probs;
}

struct DiveOutcome {
  UcSchedule schedule;
  double c_min = kInf;
  std::vector<TimelineEntry> timeline;
  bool fell_back = false;  // sub-MIPs yielded nothing, plain solve used
  int candidate_count = 0;
  std::vector<int> fixes_per_ratio;
  std::vector<SubMipOutcome> sub_results;
  long long total_nodes = 0;          // across sub-MIPs plus any fallback
  long long total_lp_iterations = 0;  // same scope as total_nodes
};

// Full dive on a prebuilt MILP given model probabilities. Falls back to a
// plain solve on the remaining budget when every sub-MIP comes back empty;
// only if that also finds nothing does the no-solution error escape.
inline DiveOutcome neural_dive_with_probs(const UcBuild& built, const std::vector<double>& probs,
                                          const std::vector<double>& acc,
                                          const DivingConfig& config) {
  config.validate();
  const int dims = built.vmap.block_size();
  if (static_cast<int>(probs.size()) != dims || static_cast<int>(acc.size()) != dims) {
    throw ShapeError("neural_dive: probability and accuracy vectors must cover the state block");
  }
  const CandidateSet cands = select_candidates(acc, config.epsilon);
  const std::vector<MilpProblem> subs = build_sub_mips(built.problem, probs, cands, config.ratios);

  const auto wall_start = std::chrono::steady_clock::now();
  DivingResult dive = detail::pick_best(detail::run_sub_mips(subs, config));

  DiveOutcome out;
  out.candidate_count = cands.size();
  for (double rho : config.ratios) out.fixes_per_ratio.push_back(ratio_fix_count(rho, cands.size()));
  for (const SubMipOutcome& o : dive.outcomes) {
    out.total_nodes += o.nodes;
    out.total_lp_iterations += o.lp_iterations;
  }

  if (dive.winner < 0) {
    // Remaining budget: nodes actually spent come off the node budget; the
    // time budget shrinks by the wall clock consumed so far.
    BnbConfig cfg = config.sub_solver;
    if (cfg.node_limit != std::numeric_limits<long long>::max()) {
      long long spent = 0;
      for (const SubMipOutcome& o : dive.outcomes) spent += o.nodes;
      cfg.node_limit = std::max(1LL, cfg.node_limit - spent);
    }
    if (std::isfinite(cfg.time_limit)) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
      cfg.time_limit = std::max(0.1, cfg.time_limit - wall);
    }
    std::unique_ptr<BranchingPolicy> policy;
    if (config.branching_factory) {
      policy = config.branching_factory();
      cfg.branching = policy.get();
    }
    const BnbResult plain = solve_bnb(built.problem, cfg);
    if (!plain.has_incumbent()) {
      throw NoSolutionError("neural_dive: no sub-MIP or fallback solve found a feasible point");
    }
    out.fell_back = true;
    out.c_min = plain.upper_bound;
    out.timeline = plain.incumbent_timeline;
    out.sub_results = std::move(dive.outcomes);
    out.total_nodes += plain.nodes_processed;
    out.total_lp_iterations += plain.lp_iterations;
    out.schedule = decode_solution(plain.incumbent, built.vmap);
    return out;
  }

  out.c_min = dive.c_min;
  out.timeline = std::move(dive.timeline);
  out.sub_results = std::move(dive.outcomes);
  out.schedule = decode_solution(dive.x_min, built.vmap);
  return out;
}

inline DiveOutcome neural_dive(const UcInstance& inst, ParamStore& params,
                               const PiGcnConfig& model_cfg, const std::vector<double>& acc,
                               const DivingConfig& config) {
  const UcBuild built = build_uc_milp(inst);
  return neural_dive_with_probs(built, dive_probabilities_pi(params, model_cfg, inst), acc, config);
}

inline DiveOutcome neural_dive(const UcInstance& inst, ParamStore& params,
                               const MbGcnConfig& model_cfg, const std::vector<double>& acc,
                               const DivingConfig& config) {
  const UcBuild built = build_uc_milp(inst);
  return neural_dive_with_probs(built, dive_probabilities_mb(params, model_cfg, built), acc, config);
}

}  // namespace ucmip
