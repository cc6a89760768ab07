// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ucmip/bnb.hpp"
#include "ucmip/diving.hpp"
#include "ucmip/graphs.hpp"
#include "ucmip/io.hpp"
#include "ucmip/models.hpp"
#include "ucmip/optim.hpp"
#include "ucmip/power_system.hpp"
#include "ucmip/uc_model.hpp"

namespace ucmip {

// ---------------------------------------------------------------------------
// Desk-scale study system: a nine-bus ring with two chords and three units.
// The baseload unit starts committed; the mid unit follows the shoulder; the
// peaker is the marginal machine on noisy peaks, so its commitment is the
// load-dependent signal the models are asked to learn.
// ---------------------------------------------------------------------------

inline SystemSpec make_desk_system() {
  SystemSpec sys;
  sys.buses = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  sys.slack_bus = 9;
  const double ring_cap = 120.0;
  const double chord_cap = 60.0;
  const std::array<std::array<double, 3>, 9> ring = {{{1, 2, 0.10},
                                                      {2, 3, 0.12},
                                                      {3, 4, 0.09},
                                                      {4, 5, 0.11},
                                                      {5, 6, 0.13},
                                                      {6, 7, 0.10},
                                                      {7, 8, 0.14},
                                                      {8, 9, 0.08},
                                                      {9, 1, 0.12}}};
  int next_id = 1;
  for (const auto& [a, b, x] : ring) {
    Line l;
    l.id = next_id++;
    l.from_bus = static_cast<int>(a);
    l.to_bus = static_cast<int>(b);
    l.reactance = x;
    l.susceptance = 1.0 / x;
    l.f_pos = ring_cap;
    l.f_neg = -ring_cap;
    sys.lines.push_back(l);
  }
  for (const auto& [a, b, x] : std::array<std::array<double, 3>, 2>{{{2, 6, 0.20}, {3, 8, 0.18}}}) {
    Line l;
    l.id = next_id++;
    l.from_bus = static_cast<int>(a);
    l.to_bus = static_cast<int>(b);
    l.reactance = x;
    l.susceptance = 1.0 / x;
    l.f_pos = chord_cap;
    l.f_neg = -chord_cap;
    sys.lines.push_back(l);
  }

  GeneratorParams g1;
  g1.id = 1;
  g1.bus = 1;
  g1.p_min = 40.0;
  g1.p_max = 120.0;
  g1.su = 60.0;
  g1.sd = 60.0;
  g1.ut = 3;
  g1.dt = 3;
  g1.ru = 60.0;
  g1.rd = 60.0;
  g1.cu = {50.0, 90.0};
  g1.nd = {3, 7};
  g1.pb = {40.0, 80.0, 120.0};
  g1.cb = {60.0, 120.0, 200.0};
  g1.nl = 2;
  g1.v0 = 1;
  g1.p0 = 60.0;
  g1.init_state_periods = 3;

  GeneratorParams g2;
  g2.id = 2;
  g2.bus = 4;
  g2.p_min = 20.0;
  g2.p_max = 80.0;
  g2.su = 35.0;
  g2.sd = 35.0;
  g2.ut = 2;
  g2.dt = 2;
  g2.ru = 30.0;
  g2.rd = 30.0;
  g2.cu = {40.0, 70.0};
  g2.nd = {2, 6};
  g2.pb = {20.0, 50.0, 80.0};
  g2.cb = {50.0, 125.0, 230.0};
  g2.nl = 2;
  g2.v0 = 0;
  g2.p0 = 0.0;
  g2.init_state_periods = 2;

  GeneratorParams g3;
  g3.id = 3;
  g3.bus = 7;
  g3.p_min = 10.0;
  g3.p_max = 60.0;
  g3.su = 60.0;
  g3.sd = 60.0;
  g3.ut = 1;
  g3.dt = 1;
  g3.ru = 50.0;
  g3.rd = 50.0;
  g3.cu = {25.0};
  g3.nd = {1};
  g3.pb = {10.0, 60.0};
  g3.cb = {45.0, 300.0};
  g3.nl = 1;
  g3.v0 = 0;
  g3.p0 = 0.0;
  g3.init_state_periods = 1;

  sys.generators = {g1, g2, g3};
  sys.validate();
  return sys;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int horizon = 12;
  double peak_load = 200.0;
  double reserve_fraction = 0.03;
  double noise_sigma = 0.10;
  // Low shoulder keeps the mid unit marginal early on; the sustained evening
  // peak keeps the peaker up long enough to show in the state block.
  std::vector<double> base_shape = {0.55, 0.50, 0.53, 0.60, 0.74, 0.88,
                                    0.97, 0.92, 0.86, 0.95, 1.00, 0.97};
  int train_count = 60;
  int valid_count = 20;
  int test_count = 20;
  // Wall-clock limits default to off: the node budget is the deterministic
  // clock, which is what makes re-runs byte-identical.
  long long solve_nodes = 2000;
  double solve_time_s = kInf;
  // Equal-budget showdown for the primal methods. Depth-first at this budget
  // always reaches an incumbent but not always the optimum, so the comparison
  // has room to separate; a dive splits the same total across its sub-MIPs.
  long long eval_nodes = 16;
  long long branch_solve_nodes = 24;  // node budget while recording branch labels
  int branch_sample_cap = 8;          // recorded decisions per instance
  long long branch_eval_nodes = 120;  // fixed node budget for the policy race
  int heldout_node_cap = 25;          // labeled nodes per test instance
  double dive_epsilon = 0.95;
  std::vector<double> dive_ratios = {0.75, 0.80, 0.85, 0.90, 0.95, 1.00};
  int dive_workers = 2;
  TrainConfig train_pi_dive;
  TrainConfig train_mb_dive;
  TrainConfig train_mb_branch;

  void validate() const {
    if (horizon < 1) throw ConfigError("config: horizon must be positive");
    if (static_cast<int>(base_shape.size()) != horizon)
      throw ConfigError("config: base_shape length must equal horizon");
    if (peak_load <= 0.0) throw ConfigError("config: peak_load must be positive");
    if (reserve_fraction < 0.0) throw ConfigError("config: reserve_fraction must be non-negative");
    if (noise_sigma < 0.0 || noise_sigma >= 1.0) throw ConfigError("config: noise_sigma outside [0,1)");
    if (train_count < 1 || valid_count < 1 || test_count < 1)
      throw ConfigError("config: every split needs at least one scenario");
    if (solve_nodes < 1) throw ConfigError("config: solve_nodes must be positive");
    if (solve_time_s <= 0.0) throw ConfigError("config: solve_time_s must be positive");
    if (eval_nodes < 1) throw ConfigError("config: eval_nodes must be positive");
    if (branch_solve_nodes < 1) throw ConfigError("config: branch_solve_nodes must be positive");
    if (branch_sample_cap < 1) throw ConfigError("config: branch_sample_cap must be positive");
    if (branch_eval_nodes < 1) throw ConfigError("config: branch_eval_nodes must be positive");
    if (heldout_node_cap < 1) throw ConfigError("config: heldout_node_cap must be positive");
    if (!(dive_epsilon >= 0.0 && dive_epsilon <= 1.0)) throw ConfigError("config: dive_epsilon outside [0,1]");
    if (dive_ratios.empty()) throw ConfigError("config: dive_ratios empty");
    if (dive_workers < 1) throw ConfigError("config: dive_workers must be positive");
    train_pi_dive.validate();
    train_mb_dive.validate();
    train_mb_branch.validate();
  }
};

// Default study setup. The branching imitation run works through far more
// single-sample steps per epoch, with matching longer patience windows.
inline ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  cfg.train_pi_dive.seed = 11;
  cfg.train_mb_dive.seed = 12;
  cfg.train_mb_branch.seed = 13;
  cfg.train_mb_branch.epoch_size = 100;
  cfg.train_mb_branch.patience = 100;
  cfg.train_mb_branch.early_stop = 200;
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"epoch_size", c.epoch_size},
          {"patience", c.patience},           {"early_stop", c.early_stop},
          {"beta", c.beta},                   {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
  if (j.contains("epoch_size")) base.epoch_size = j["epoch_size"].get<int>();
  if (j.contains("patience")) base.patience = j["patience"].get<int>();
  if (j.contains("early_stop")) base.early_stop = j["early_stop"].get<int>();
  if (j.contains("beta")) base.beta = j["beta"].get<double>();
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  return base;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["horizon"] = c.horizon;
  j["peak_load"] = c.peak_load;
  j["reserve_fraction"] = c.reserve_fraction;
  j["noise_sigma"] = c.noise_sigma;
  j["base_shape"] = c.base_shape;
  j["train_count"] = c.train_count;
  j["valid_count"] = c.valid_count;
  j["test_count"] = c.test_count;
  j["solve_nodes"] = c.solve_nodes;
  j["solve_time_s"] = bound_to_json(c.solve_time_s);
  j["eval_nodes"] = c.eval_nodes;
  j["branch_solve_nodes"] = c.branch_solve_nodes;
  j["branch_sample_cap"] = c.branch_sample_cap;
  j["branch_eval_nodes"] = c.branch_eval_nodes;
  j["heldout_node_cap"] = c.heldout_node_cap;
  j["dive_epsilon"] = c.dive_epsilon;
  j["dive_ratios"] = c.dive_ratios;
  j["dive_workers"] = c.dive_workers;
  j["train_pi_dive"] = train_config_to_json(c.train_pi_dive);
  j["train_mb_dive"] = train_config_to_json(c.train_mb_dive);
  j["train_mb_branch"] = train_config_to_json(c.train_mb_branch);
  return j;
}

// Partial configs overlay the desk defaults, so a file only needs the keys it
// wants to change.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = desk_config();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("horizon")) c.horizon = j["horizon"].get<int>();
  if (j.contains("peak_load")) c.peak_load = j["peak_load"].get<double>();
  if (j.contains("reserve_fraction")) c.reserve_fraction = j["reserve_fraction"].get<double>();
  if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("base_shape")) c.base_shape = j["base_shape"].get<std::vector<double>>();
  if (j.contains("train_count")) c.train_count = j["train_count"].get<int>();
  if (j.contains("valid_count")) c.valid_count = j["valid_count"].get<int>();
  if (j.contains("test_count")) c.test_count = j["test_count"].get<int>();
  if (j.contains("solve_nodes")) c.solve_nodes = j["solve_nodes"].get<long long>();
  if (j.contains("solve_time_s")) c.solve_time_s = bound_from_json(j["solve_time_s"]);
  if (j.contains("eval_nodes")) c.eval_nodes = j["eval_nodes"].get<long long>();
  if (j.contains("branch_solve_nodes")) c.branch_solve_nodes = j["branch_solve_nodes"].get<long long>();
  if (j.contains("branch_sample_cap")) c.branch_sample_cap = j["branch_sample_cap"].get<int>();
  if (j.contains("branch_eval_nodes")) c.branch_eval_nodes = j["branch_eval_nodes"].get<long long>();
  if (j.contains("heldout_node_cap")) c.heldout_node_cap = j["heldout_node_cap"].get<int>();
  if (j.contains("dive_epsilon")) c.dive_epsilon = j["dive_epsilon"].get<double>();
  if (j.contains("dive_ratios")) c.dive_ratios = j["dive_ratios"].get<std::vector<double>>();
  if (j.contains("dive_workers")) c.dive_workers = j["dive_workers"].get<int>();
  if (j.contains("train_pi_dive")) c.train_pi_dive = train_config_from_json(j["train_pi_dive"], c.train_pi_dive);
  if (j.contains("train_mb_dive")) c.train_mb_dive = train_config_from_json(j["train_mb_dive"], c.train_mb_dive);
  if (j.contains("train_mb_branch"))
    c.train_mb_branch = train_config_from_json(j["train_mb_branch"], c.train_mb_branch);
  return c;
}

inline std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline BnbConfig solve_budget(const ExperimentConfig& cfg) {
  BnbConfig b;
  b.node_limit = cfg.solve_nodes;
  b.time_limit = cfg.solve_time_s;
  return b;
}

// Budget for the primal comparison runs. Depth-first, so every method walks
// away with a feasible schedule even when the budget is far below proof size.
inline BnbConfig eval_budget(const ExperimentConfig& cfg) {
  BnbConfig b;
  b.node_limit = cfg.eval_nodes;
  b.time_limit = cfg.solve_time_s;
  b.node_selection = NodeSelection::DepthFirst;
  return b;
}

// ---------------------------------------------------------------------------
// Scenario corpus
// ---------------------------------------------------------------------------

struct ScenarioRecord {
  std::string id;
  std::string split;  // train / valid / test
  LoadScenario scen;
};

inline std::vector<ScenarioRecord> make_corpus(const SystemSpec& sys, const ExperimentConfig& cfg) {
  cfg.validate();
  const int total = cfg.train_count + cfg.valid_count + cfg.test_count;
  const std::vector<LoadScenario> scens =
      generate_load_scenarios(sys.num_buses(), cfg.base_shape, total, cfg.peak_load,
                              cfg.reserve_fraction, cfg.noise_sigma, cfg.seed);
  std::vector<ScenarioRecord> out;
  out.reserve(total);
  for (int i = 0; i < total; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "scen_%03d", i);
    const char* split = i < cfg.train_count                     ? "train"
                        : i < cfg.train_count + cfg.valid_count ? "valid"
                                                                : "test";
    out.push_back({buf, split, scens[i]});
  }
  return out;
}

inline void save_scenarios_jsonl(const std::string& path, const std::vector<ScenarioRecord>& recs) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& r : recs) {
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = r.split;
    j["d"] = mat_to_json(r.scen.d);
    j["r"] = r.scen.r;
    out << j.dump() << "\n";
  }
}

inline std::vector<ScenarioRecord> load_scenarios_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<ScenarioRecord> recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ScenarioRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.scen.d = mat_from_json(j.at("d"));
    r.scen.r = j.at("r").get<std::vector<double>>();
    r.scen.validate();
    recs.push_back(std::move(r));
  }
  return recs;
}

inline std::vector<ScenarioRecord> filter_split(const std::vector<ScenarioRecord>& recs,
                                                const std::string& split) {
  std::vector<ScenarioRecord> out;
  for (const auto& r : recs)
    if (r.split == split) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// CSV helpers. Doubles go through fmt_csv so identical runs produce identical
// bytes; infinities print as "inf".
// ---------------------------------------------------------------------------

inline std::string csv_num(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return fmt_csv(v);
}

inline void write_csv(const std::string& path, const std::string& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << header << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out << ",";
      out << r[i];
    }
    out << "\n";
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Diving dataset: one record per solved instance holding the compact graphs,
// the root bipartite graph, and the best-found binary state with its cost.
// ---------------------------------------------------------------------------

struct DivingSample {
  std::string id;
  std::string split;
  double objective = 0.0;
  std::vector<double> x_state;  // flattened generator-major on/off block
  std::vector<int> gen_rows;    // bus row per generator, in generator order
  SpatiotemporalGraph st;
  SpatialGraph sp;
  BipartiteGraph bg;
};

inline std::vector<DivingSample> collect_diving_samples(const SystemSpec& sys,
                                                        const std::vector<ScenarioRecord>& scens,
                                                        const BnbConfig& budget,
                                                        std::ostream* log = nullptr) {
  std::vector<DivingSample> out;
  for (const auto& rec : scens) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    BnbConfig cfg = budget;
    ReliabilityPseudocost rpc;
    cfg.branching = &rpc;
    const BnbResult res = solve_bnb(built.problem, cfg);
    if (!res.has_incumbent()) {
      if (log) (*log) << "collect-dive: " << rec.id << " produced no incumbent, skipped\n";
      continue;
    }
    const LpSolution root = solve_lp(built.problem);
    if (root.status != LpStatus::Optimal) {
      if (log) (*log) << "collect-dive: " << rec.id << " root relaxation not optimal, skipped\n";
      continue;
    }
    DivingSample s;
    s.id = rec.id;
    s.split = rec.split;
    s.objective = res.upper_bound;
    s.x_state.assign(res.incumbent.begin(), res.incumbent.begin() + built.vmap.block_size());
    for (double& v : s.x_state) v = v > 0.5 ? 1.0 : 0.0;
    // The stored cost must re-derive from the schedule itself.
    const UcSchedule sched = decode_solution(res.incumbent, built.vmap);
    if (!nearly_equal(sched.total_cost, s.objective, 1e-6))
      throw NumericalError("collect-dive: incumbent objective does not re-price");
    s.gen_rows = generator_bus_rows(inst);
    s.st = build_spatiotemporal_graph(inst);
    s.sp = build_spatial_graph(inst);
    s.bg = build_bipartite_graph(built.problem, root, {});
    out.push_back(std::move(s));
  }
  if (out.empty()) throw NoSolutionError("collect-dive: no instance produced a usable sample");
  return out;
}

inline void save_diving_dataset(const std::string& path, const std::vector<DivingSample>& samples) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["split"] = s.split;
    j["objective"] = s.objective;
    j["x_state"] = s.x_state;
    j["gen_rows"] = s.gen_rows;
    j["st"] = spatiotemporal_to_json(s.st);
    j["sp"] = spatial_to_json(s.sp);
    j["bg"] = bipartite_to_json(s.bg);
    out << j.dump() << "\n";
  }
}

inline std::vector<DivingSample> load_diving_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<DivingSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    DivingSample s;
    s.id = j.at("id").get<std::string>();
    s.split = j.at("split").get<std::string>();
    s.objective = j.at("objective").get<double>();
    s.x_state = j.at("x_state").get<std::vector<double>>();
    s.gen_rows = j.at("gen_rows").get<std::vector<int>>();
    s.st = spatiotemporal_from_json(j.at("st"));
    s.sp = spatial_from_json(j.at("sp"));
    s.bg = bipartite_from_json(j.at("bg"));
    for (double v : s.x_state)
      if (v != 0.0 && v != 1.0) throw DecodeError("dive dataset: non-binary state entry");
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ConfigError("dive dataset is empty: " + path);
  return samples;
}

// ---------------------------------------------------------------------------
// Branching dataset: strong-branching decisions recorded at the tree nodes of
// budgeted solves, each with the node-local bipartite graph.
// ---------------------------------------------------------------------------

struct BranchingSample {
  std::string id;
  std::string split;
  long long node_seq = 0;
  std::vector<int> candidates;
  int chosen = -1;  // must be a member of candidates
  BipartiteGraph bg;
};

// Bipartite view of the node the engine is about to branch: root rows with the
// node's tightened bounds overlaid, plus live basis ages and incumbents.
inline BipartiteGraph node_bipartite_graph(const NodeContext& ctx) {
  MilpProblem node = ctx.problem();  // copies bounds; the matrix is shared
  for (int j = 0; j < node.num_vars(); ++j) {
    node.l[j] = ctx.node_lower(j);
    node.u[j] = ctx.node_upper(j);
  }
  std::vector<double> row_age(node.num_rows());
  std::vector<double> col_age(node.num_vars());
  for (int i = 0; i < node.num_rows(); ++i) row_age[i] = ctx.row_age(i);
  for (int j = 0; j < node.num_vars(); ++j) col_age[j] = ctx.col_age(j);
  const std::vector<double>* inc = ctx.incumbent();
  const std::vector<double>* avg = ctx.incumbent_running_avg();
  return build_bipartite_graph(node, ctx.lp(), inc ? inc->data() : nullptr,
                               avg ? avg->data() : nullptr, row_age, col_age);
}

// Branching policy that answers with the strong-branching pick and records the
// first `cap` decisions it makes.
class RecordingStrongBranching final : public BranchingPolicy {
 public:
  RecordingStrongBranching(int cap, std::vector<BranchingSample>* sink, std::string id,
                           std::string split)
      : cap_(cap), sink_(sink), id_(std::move(id)), split_(std::move(split)) {}

  int select(const NodeContext& ctx) override {
    const int chosen = strong_branching_select(ctx);
    if (recorded_ < cap_ && chosen >= 0) {
      BranchingSample s;
      s.id = id_;
      s.split = split_;
      s.node_seq = ctx.nodes_processed();
      s.candidates = ctx.candidates();
      s.chosen = chosen;
      s.bg = node_bipartite_graph(ctx);
      sink_->push_back(std::move(s));
      ++recorded_;
    }
    return chosen;
  }
  std::string name() const override { return "strong-recording"; }

 private:
  int cap_ = 0;
  int recorded_ = 0;
  std::vector<BranchingSample>* sink_;
  std::string id_;
  std::string split_;
};

inline std::vector<BranchingSample> collect_branching_samples(const SystemSpec& sys,
                                                              const std::vector<ScenarioRecord>& scens,
                                                              const BnbConfig& budget, int cap,
                                                              std::ostream* log = nullptr) {
  if (cap < 1) throw ConfigError("collect-branch: cap must be positive");
  std::vector<BranchingSample> out;
  for (const auto& rec : scens) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    const std::size_t before = out.size();
    RecordingStrongBranching rec_policy(cap, &out, rec.id, rec.split);
    BnbConfig cfg = budget;
    cfg.branching = &rec_policy;
    solve_bnb(built.problem, cfg);
    if (log && out.size() == before) (*log) << "collect-branch: " << rec.id << " yielded no nodes\n";
  }
  if (out.empty()) throw NoSolutionError("collect-branch: no instance produced a branching node");
  return out;
}

inline void save_branching_dataset(const std::string& path, const std::vector<BranchingSample>& samples) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["split"] = s.split;
    j["node_seq"] = s.node_seq;
    j["candidates"] = s.candidates;
    j["chosen"] = s.chosen;
    j["bg"] = bipartite_to_json(s.bg);
    out << j.dump() << "\n";
  }
}

inline std::vector<BranchingSample> load_branching_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<BranchingSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    BranchingSample s;
    s.id = j.at("id").get<std::string>();
    s.split = j.at("split").get<std::string>();
    s.node_seq = j.at("node_seq").get<long long>();
    s.candidates = j.at("candidates").get<std::vector<int>>();
    s.chosen = j.at("chosen").get<int>();
    s.bg = bipartite_from_json(j.at("bg"));
    bool member = false;
    for (int c : s.candidates) member = member || c == s.chosen;
    if (!member) throw DecodeError("branch dataset: chosen column not among candidates");
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw ConfigError("branch dataset is empty: " + path);
  return samples;
}

// ---------------------------------------------------------------------------
// Model kinds and loaded-model bundles
// ---------------------------------------------------------------------------

enum class ModelKind { PiDive, MbDive, MbBranch };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::PiDive: return "pi-dive";
    case ModelKind::MbDive: return "mb-dive";
    default: return "mb-branch";
  }
}

inline ModelKind model_kind_from_name(const std::string& s) {
  if (s == "pi-dive") return ModelKind::PiDive;
  if (s == "mb-dive") return ModelKind::MbDive;
  if (s == "mb-branch") return ModelKind::MbBranch;
  throw ConfigError("unknown model kind: " + s);
}

struct DiveModel {
  ModelKind kind = ModelKind::PiDive;
  PiGcnConfig pi;
  MbGcnConfig mb;
  ParamStore params;
  std::vector<double> valid_acc;  // per state dimension, from the best epoch
};

struct BranchModel {
  MbGcnConfig mb;
  ParamStore params;
  double agreement = 0.0;  // validation top-1 agreement at the best epoch
};

inline DiveOutcome dive_with_model(DiveModel& m, const UcInstance& inst, const DivingConfig& dcfg) {
  if (m.kind == ModelKind::PiDive) return neural_dive(inst, m.params, m.pi, m.valid_acc, dcfg);
  if (m.kind == ModelKind::MbDive) return neural_dive(inst, m.params, m.mb, m.valid_acc, dcfg);
  throw ConfigError("dive_with_model: checkpoint is not a diving model");
}

// Highest-logit candidate; ties keep the lower column because candidates come
// in ascending order.
inline int branch_model_argmax(ParamStore& params, const MbGcnConfig& cfg, const BipartiteGraph& bg,
                               const std::vector<int>& candidates) {
  Tape t;
  const Var logits = mb_gcn_forward(t, params, cfg, bg, candidates);
  const std::vector<double>& v = t.values(logits);
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return candidates[best];
}

class LearnedBranching final : public BranchingPolicy {
 public:
  LearnedBranching(ParamStore params, MbGcnConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

  int select(const NodeContext& ctx) override {
    const BipartiteGraph bg = node_bipartite_graph(ctx);
    return branch_model_argmax(params_, cfg_, bg, ctx.candidates());
  }
  std::string name() const override { return "learned"; }

 private:
  ParamStore params_;
  MbGcnConfig cfg_;
};

// ---------------------------------------------------------------------------
// Training. An epoch is epoch_size single-sample Adam steps over a seeded
// shuffle of the train split; the validation loss picks the checkpoint, the
// learning rate halves after each `patience` block of non-improving epochs,
// and `early_stop` such epochs end the run (0 runs exactly one epoch).
// ---------------------------------------------------------------------------

struct TrainCurveRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_metric = 0.0;
};

struct TrainOutput {
  ParamStore params;  // weights from the best validation epoch
  std::vector<TrainCurveRow> curve;
  double best_valid = kInf;
  int epochs_run = 0;
  std::vector<double> valid_acc;  // dive: per dimension; branch: {agreement}
};

namespace detail {

struct EpochEval {
  double loss = 0.0;
  double metric = 0.0;
};

inline TrainOutput run_training(ParamStore ps,
                                const std::function<Var(Tape&, ParamStore&, int)>& sample_loss,
                                const std::function<EpochEval(ParamStore&)>& validate,
                                const std::vector<int>& train_idx, const TrainConfig& tc) {
  tc.validate();
  if (train_idx.empty()) throw ConfigError("training: empty train split");
  TrainOutput out;
  AdamState adam;
  double lr = tc.learning_rate;
  SplitMix64 rng(tc.seed ^ 0xD1B54A32D192ED03ULL);
  std::vector<int> order = train_idx;
  std::size_t cursor = order.size();
  double best = kInf;
  int since_best = 0;
  std::map<std::string, std::vector<double>> best_values;
  const auto snapshot = [&] {
    best_values.clear();
    for (const auto& [name, t] : ps) best_values[name] = t.value;
  };
  snapshot();
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    double train_sum = 0.0;
    for (int s = 0; s < tc.epoch_size; ++s) {
      if (cursor >= order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const int i = order[cursor++];
      Tape t;
      const Var loss = sample_loss(t, ps, i);
      const double lv = t.values(loss)[0];
      if (!std::isfinite(lv))
        throw NumericalError("training: loss diverged at epoch " + std::to_string(epoch));
      train_sum += lv;
      ps.zero_grad();
      t.backward(loss);
      adam_step(ps, adam, lr);
    }
    const EpochEval ev = validate(ps);
    if (!std::isfinite(ev.loss))
      throw NumericalError("training: validation loss diverged at epoch " + std::to_string(epoch));
    out.curve.push_back({epoch, lr, train_sum / tc.epoch_size, ev.loss, ev.metric});
    out.epochs_run = epoch;
    if (ev.loss < best) {
      best = ev.loss;
      since_best = 0;
      snapshot();
    } else {
      ++since_best;
      if (since_best % tc.patience == 0) lr *= 0.5;
    }
    if (tc.early_stop == 0 || since_best >= tc.early_stop) break;
  }
  for (auto& [name, t] : ps) t.value = best_values.at(name);
  out.params = std::move(ps);
  out.best_valid = best;
  return out;
}

inline std::vector<int> split_indices(const std::vector<std::string>& tags, const std::string& want) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == want) idx.push_back(static_cast<int>(i));
  return idx;
}

}  // namespace detail

inline PiGcnConfig pi_config_for(const DivingSample& s) {
  PiGcnConfig c;
  c.num_buses = s.st.node_features.rows();
  c.horizon = s.st.node_features.cols();
  c.spatial_width = s.sp.feature_width();
  return c;
}

inline TrainOutput train_dive_model(ModelKind kind, const std::vector<DivingSample>& samples,
                                    const TrainConfig& tc) {
  if (kind != ModelKind::PiDive && kind != ModelKind::MbDive)
    throw ConfigError("train_dive_model: not a diving model kind");
  std::vector<std::string> tags;
  for (const auto& s : samples) tags.push_back(s.split);
  const std::vector<int> train_idx = detail::split_indices(tags, "train");
  const std::vector<int> valid_idx = detail::split_indices(tags, "valid");
  if (train_idx.empty() || valid_idx.empty())
    throw ConfigError("train_dive_model: need non-empty train and valid splits");
  const int dims = static_cast<int>(samples[0].x_state.size());
  for (const auto& s : samples)
    if (static_cast<int>(s.x_state.size()) != dims)
      throw ShapeError("train_dive_model: samples disagree on state size");

  // Better-cost training instances carry exponentially larger weight; the
  // normalizer spans the train split only.
  std::vector<double> train_obj;
  for (int i : train_idx) train_obj.push_back(samples[i].objective);
  const DivingNormalizer norm = make_diving_normalizer(train_obj);
  std::vector<double> weight(samples.size(), 1.0);
  {
    std::vector<double> all_obj;
    for (const auto& s : samples) all_obj.push_back(s.objective);
    const std::vector<double> w = diving_weights(all_obj, tc.beta, norm);
    for (std::size_t i = 0; i < w.size(); ++i) weight[i] = w[i];
  }

  const PiGcnConfig pi_cfg = pi_config_for(samples[0]);
  const MbGcnConfig mb_cfg;
  std::vector<ScaledLaplacian> laps;
  if (kind == ModelKind::PiDive) {
    laps.reserve(samples.size());
    for (const auto& s : samples) laps.push_back(scaled_laplacian(s.st.adjacency));
  }
  std::vector<int> all_cols(dims);
  std::iota(all_cols.begin(), all_cols.end(), 0);

  const auto logits_for = [&](Tape& t, ParamStore& ps, int i) -> Var {
    const DivingSample& s = samples[i];
    if (kind == ModelKind::PiDive)
      return pi_gcn_forward(t, ps, pi_cfg, s.st, s.sp, laps[i], s.gen_rows);
    return mb_gcn_forward(t, ps, mb_cfg, s.bg, all_cols);
  };
  const auto sample_loss = [&](Tape& t, ParamStore& ps, int i) -> Var {
    return diving_loss(t, {logits_for(t, ps, i)}, {samples[i].x_state}, {weight[i]});
  };
  const auto validate = [&](ParamStore& ps) -> detail::EpochEval {
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    for (int i : valid_idx) {
      Tape t;
      const Var logits = logits_for(t, ps, i);
      loss_sum += t.values(t.bernoulli_nll(logits, samples[i].x_state))[0];
      const std::vector<double>& lv = t.values(logits);
      int hits = 0;
      for (int d = 0; d < dims; ++d) {
        const double p = diving_prob(lv[d], 1);
        hits += (p >= 0.5 ? 1.0 : 0.0) == samples[i].x_state[d] ? 1 : 0;
      }
      acc_sum += static_cast<double>(hits) / dims;
    }
    const double n = static_cast<double>(valid_idx.size());
    return {loss_sum / n, acc_sum / n};
  };

  ParamStore init = kind == ModelKind::PiDive ? make_pi_gcn_params(pi_cfg, tc.seed)
                                              : make_mb_gcn_params(mb_cfg, tc.seed);
  TrainOutput out = detail::run_training(std::move(init), sample_loss, validate, train_idx, tc);

  // Per-dimension accuracy of the selected weights on the validation split.
  Mat probs(static_cast<int>(valid_idx.size()), dims);
  Mat targets(static_cast<int>(valid_idx.size()), dims);
  for (std::size_t r = 0; r < valid_idx.size(); ++r) {
    Tape t;
    const std::vector<double>& lv = t.values(logits_for(t, out.params, valid_idx[r]));
    for (int d = 0; d < dims; ++d) {
      probs(static_cast<int>(r), d) = diving_prob(lv[d], 1);
      targets(static_cast<int>(r), d) = samples[valid_idx[r]].x_state[d];
    }
  }
  out.valid_acc = accuracy_per_dim(probs, targets);
  return out;
}

inline TrainOutput train_branch_model(const std::vector<BranchingSample>& samples,
                                      const TrainConfig& tc) {
  std::vector<std::string> tags;
  for (const auto& s : samples) tags.push_back(s.split);
  const std::vector<int> train_idx = detail::split_indices(tags, "train");
  const std::vector<int> valid_idx = detail::split_indices(tags, "valid");
  if (train_idx.empty() || valid_idx.empty())
    throw ConfigError("train_branch_model: need non-empty train and valid splits");
  const MbGcnConfig mb_cfg;
  std::vector<int> chosen_pos(samples.size(), -1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t k = 0; k < samples[i].candidates.size(); ++k)
      if (samples[i].candidates[k] == samples[i].chosen) chosen_pos[i] = static_cast<int>(k);
    if (chosen_pos[i] < 0) throw DecodeError("train_branch_model: chosen outside candidates");
  }

  const auto sample_loss = [&](Tape& t, ParamStore& ps, int i) -> Var {
    const Var logits = mb_gcn_forward(t, ps, mb_cfg, samples[i].bg, samples[i].candidates);
    return branching_loss(t, logits, chosen_pos[i]);
  };
  const auto validate = [&](ParamStore& ps) -> detail::EpochEval {
    double loss_sum = 0.0;
    int hits = 0;
    for (int i : valid_idx) {
      Tape t;
      const Var logits = mb_gcn_forward(t, ps, mb_cfg, samples[i].bg, samples[i].candidates);
      loss_sum += t.values(branching_loss(t, logits, chosen_pos[i]))[0];
      const std::vector<double>& lv = t.values(logits);
      std::size_t best = 0;
      for (std::size_t k = 1; k < lv.size(); ++k)
        if (lv[k] > lv[best]) best = k;
      hits += static_cast<int>(best) == chosen_pos[i] ? 1 : 0;
    }
    const double n = static_cast<double>(valid_idx.size());
    return {loss_sum / n, hits / n};
  };

  TrainOutput out = detail::run_training(make_mb_gcn_params(mb_cfg, tc.seed), sample_loss, validate,
                                         train_idx, tc);
  // Agreement of the selected weights on the validation split.
  int hits = 0;
  for (int i : valid_idx) {
    const int pick =
        branch_model_argmax(out.params, mb_cfg, samples[i].bg, samples[i].candidates);
    hits += pick == samples[i].chosen ? 1 : 0;
  }
  out.valid_acc = {static_cast<double>(hits) / static_cast<double>(valid_idx.size())};
  return out;
}

inline void write_train_curve_csv(const std::string& path, const std::vector<TrainCurveRow>& curve) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : curve)
    rows.push_back({std::to_string(r.epoch), csv_num(r.lr), csv_num(r.train_loss),
                    csv_num(r.valid_loss), csv_num(r.valid_metric)});
  write_csv(path, "epoch,learning_rate,train_loss,valid_loss,valid_metric", rows);
}

inline void save_dive_checkpoint(const std::string& path, ModelKind kind, const PiGcnConfig& pi_cfg,
                                 const TrainOutput& tr, std::uint64_t seed) {
  nlohmann::json cfg;
  cfg["kind"] = model_kind_name(kind);
  cfg["pi"] = pi_gcn_config_to_json(pi_cfg);
  cfg["mb"] = mb_gcn_config_to_json(MbGcnConfig{});
  cfg["valid_acc"] = tr.valid_acc;
  cfg["best_valid_loss"] = tr.best_valid;
  save_checkpoint(path, model_kind_name(kind), cfg, seed, tr.params);
}

inline void save_branch_checkpoint(const std::string& path, const TrainOutput& tr, std::uint64_t seed) {
  nlohmann::json cfg;
  cfg["kind"] = model_kind_name(ModelKind::MbBranch);
  cfg["mb"] = mb_gcn_config_to_json(MbGcnConfig{});
  cfg["valid_agreement"] = tr.valid_acc.empty() ? 0.0 : tr.valid_acc[0];
  cfg["best_valid_loss"] = tr.best_valid;
  save_checkpoint(path, model_kind_name(ModelKind::MbBranch), cfg, seed, tr.params);
}

inline DiveModel load_dive_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  DiveModel m;
  m.kind = model_kind_from_name(ck.config.at("kind").get<std::string>());
  if (m.kind == ModelKind::MbBranch) throw ConfigError("load_dive_model: checkpoint is a branching model");
  m.pi = pi_gcn_config_from_json(ck.config.at("pi"));
  m.mb = mb_gcn_config_from_json(ck.config.at("mb"));
  m.valid_acc = ck.config.at("valid_acc").get<std::vector<double>>();
  m.params = std::move(ck.params);
  return m;
}

inline BranchModel load_branch_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (model_kind_from_name(ck.config.at("kind").get<std::string>()) != ModelKind::MbBranch)
    throw ConfigError("load_branch_model: checkpoint is not a branching model");
  BranchModel m;
  m.mb = mb_gcn_config_from_json(ck.config.at("mb"));
  m.agreement = ck.config.at("valid_agreement").get<double>();
  m.params = std::move(ck.params);
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline constexpr std::array<double, 5> kAccThresholds = {0.80, 0.85, 0.90, 0.95, 1.00};

// Dims with accuracy at or above each threshold. The tiny slack absorbs the
// rounding in ratios like 19/20.
inline std::array<int, 5> interval_counts(const std::vector<double>& acc) {
  std::array<int, 5> counts = {0, 0, 0, 0, 0};
  for (std::size_t k = 0; k < kAccThresholds.size(); ++k)
    for (double a : acc)
      if (a >= kAccThresholds[k] - 1e-9) ++counts[k];
  return counts;
}

// Per-dimension accuracy on the validation split of always answering the
// train-split majority label.
inline std::vector<double> majority_baseline_acc(const std::vector<DivingSample>& samples) {
  std::vector<const DivingSample*> train, valid;
  for (const auto& s : samples) {
    if (s.split == "train") train.push_back(&s);
    if (s.split == "valid") valid.push_back(&s);
  }
  if (train.empty() || valid.empty())
    throw ConfigError("majority baseline: need train and valid samples");
  const int dims = static_cast<int>(train[0]->x_state.size());
  std::vector<double> acc(dims, 0.0);
  for (int d = 0; d < dims; ++d) {
    double ones = 0.0;
    for (const auto* s : train) ones += s->x_state[d];
    const double guess = ones * 2.0 >= static_cast<double>(train.size()) ? 1.0 : 0.0;
    int hits = 0;
    for (const auto* s : valid) hits += s->x_state[d] == guess ? 1 : 0;
    acc[d] = static_cast<double>(hits) / static_cast<double>(valid.size());
  }
  return acc;
}

struct MethodTimelineRow {
  std::string id;
  std::string method;
  long long work = 0;
  double objective = 0.0;
};

struct DiveEvalRow {
  std::string id;
  double plain_cost = kInf, mb_cost = kInf, pi_cost = kInf;
  double plain_gap = kInf, mb_gap = kInf, pi_gap = kInf;
  long long plain_nodes = 0, mb_nodes = 0, pi_nodes = 0;
  long long plain_work = 0, mb_work = 0, pi_work = 0;
  int mb_fell_back = 0, pi_fell_back = 0;
  int plain_violations = 0, mb_violations = 0, pi_violations = 0;
};

struct IntervalRow {
  std::string model;
  std::array<int, 5> counts = {0, 0, 0, 0, 0};
};

struct DiveEvalResult {
  std::vector<DiveEvalRow> rows;
  std::vector<IntervalRow> intervals;
  std::vector<MethodTimelineRow> timelines;
  double mean_plain = 0.0, mean_mb = 0.0, mean_pi = 0.0;
};

namespace detail {

// A reported cost that does not re-derive from its own schedule is a bug, not
// a data point.
inline int checked_violations(const UcInstance& inst, const UcSchedule& sched, double cost,
                              const char* what) {
  if (!nearly_equal(sched.total_cost, cost, 1e-6))
    throw NumericalError(std::string(what) + ": cost does not match the re-priced schedule");
  return static_cast<int>(validate_schedule(inst, sched).violations.size());
}

inline void append_timeline(std::vector<MethodTimelineRow>& out, const std::string& id,
                            const std::string& method, const std::vector<TimelineEntry>& tl) {
  for (const auto& e : tl) out.push_back({id, method, e.work, e.objective});
}

}  // namespace detail

inline DiveEvalResult evaluate_diving(const SystemSpec& sys, const std::vector<ScenarioRecord>& test,
                                      DiveModel& pi, DiveModel& mb,
                                      const std::vector<DivingSample>& dataset,
                                      const ExperimentConfig& cfg) {
  if (test.empty()) throw ConfigError("evaluate_diving: no test scenarios");
  DivingConfig dcfg;
  dcfg.epsilon = cfg.dive_epsilon;
  dcfg.ratios = cfg.dive_ratios;
  dcfg.workers = cfg.dive_workers;
  dcfg.sub_solver = eval_budget(cfg);
  dcfg.branching_factory = [] { return std::make_unique<ReliabilityPseudocost>(); };

  DiveEvalResult res;
  for (const auto& rec : test) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    DiveEvalRow row;
    row.id = rec.id;

    BnbConfig plain_cfg = eval_budget(cfg);
    ReliabilityPseudocost rpc;
    plain_cfg.branching = &rpc;
    const BnbResult plain = solve_bnb(built.problem, plain_cfg);
    row.plain_nodes = plain.nodes_processed;
    row.plain_work = plain.lp_iterations;
    if (plain.has_incumbent()) {
      row.plain_cost = plain.upper_bound;
      const UcSchedule sched = decode_solution(plain.incumbent, built.vmap);
      row.plain_violations = detail::checked_violations(inst, sched, row.plain_cost, "plain");
    }
    const double lb = plain.lower_bound;
    detail::append_timeline(res.timelines, rec.id, "plain", plain.incumbent_timeline);

    // A dive whose fallback also comes back empty reports an infinite cost;
    // that sinks the mean-cost comparison, which is the point.
    try {
      DiveOutcome mb_out = neural_dive(inst, mb.params, mb.mb, mb.valid_acc, dcfg);
      row.mb_cost = mb_out.c_min;
      row.mb_nodes = mb_out.total_nodes;
      row.mb_work = mb_out.total_lp_iterations;
      row.mb_fell_back = mb_out.fell_back ? 1 : 0;
      row.mb_violations = detail::checked_violations(inst, mb_out.schedule, mb_out.c_min, "mb-dive");
      detail::append_timeline(res.timelines, rec.id, "mb-dive", mb_out.timeline);
    } catch (const NoSolutionError&) {
      row.mb_fell_back = 1;
    }

    try {
      DiveOutcome pi_out = neural_dive(inst, pi.params, pi.pi, pi.valid_acc, dcfg);
      row.pi_cost = pi_out.c_min;
      row.pi_nodes = pi_out.total_nodes;
      row.pi_work = pi_out.total_lp_iterations;
      row.pi_fell_back = pi_out.fell_back ? 1 : 0;
      row.pi_violations = detail::checked_violations(inst, pi_out.schedule, pi_out.c_min, "pi-dive");
      detail::append_timeline(res.timelines, rec.id, "pi-dive", pi_out.timeline);
    } catch (const NoSolutionError&) {
      row.pi_fell_back = 1;
    }

    row.plain_gap = row.plain_cost == kInf ? kInf : mip_gap(row.plain_cost, lb);
    row.mb_gap = row.mb_cost == kInf ? kInf : mip_gap(row.mb_cost, lb);
    row.pi_gap = row.pi_cost == kInf ? kInf : mip_gap(row.pi_cost, lb);
    res.rows.push_back(row);
  }
  const double n = static_cast<double>(res.rows.size());
  for (const auto& r : res.rows) {
    res.mean_plain += r.plain_cost / n;
    res.mean_mb += r.mb_cost / n;
    res.mean_pi += r.pi_cost / n;
  }
  res.intervals.push_back({"pi-dive", interval_counts(pi.valid_acc)});
  res.intervals.push_back({"mb-dive", interval_counts(mb.valid_acc)});
  res.intervals.push_back({"majority", interval_counts(majority_baseline_acc(dataset))});
  return res;
}

inline void write_dive_eval_csv(const std::string& dir, const DiveEvalResult& res) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows)
    rows.push_back({r.id, csv_num(r.plain_cost), csv_num(r.mb_cost), csv_num(r.pi_cost),
                    csv_num(r.plain_gap), csv_num(r.mb_gap), csv_num(r.pi_gap),
                    std::to_string(r.plain_nodes), std::to_string(r.mb_nodes),
                    std::to_string(r.pi_nodes), std::to_string(r.plain_work),
                    std::to_string(r.mb_work), std::to_string(r.pi_work),
                    std::to_string(r.mb_fell_back), std::to_string(r.pi_fell_back),
                    std::to_string(r.plain_violations), std::to_string(r.mb_violations),
                    std::to_string(r.pi_violations)});
  write_csv(path_join(dir, "eval_dive.csv"),
            "instance,plain_cost,mb_cost,pi_cost,plain_gap,mb_gap,pi_gap,"
            "plain_nodes,mb_nodes,pi_nodes,plain_work,mb_work,pi_work,"
            "mb_fell_back,pi_fell_back,plain_violations,mb_violations,pi_violations",
            rows);

  std::vector<std::vector<std::string>> irows;
  for (const auto& r : res.intervals) {
    std::vector<std::string> cells = {r.model};
    for (int c : r.counts) cells.push_back(std::to_string(c));
    irows.push_back(cells);
  }
  write_csv(path_join(dir, "eval_dive_intervals.csv"),
            "model,acc_ge_0.80,acc_ge_0.85,acc_ge_0.90,acc_ge_0.95,acc_ge_1.00", irows);

  std::vector<std::vector<std::string>> trows;
  for (const auto& r : res.timelines)
    trows.push_back({r.id, r.method, std::to_string(r.work), csv_num(r.objective)});
  write_csv(path_join(dir, "eval_dive_timelines.csv"), "instance,method,work,objective", trows);
}

struct BranchEvalRow {
  std::string id;
  double rpc_gap = kInf, learned_gap = kInf;
  long long rpc_nodes = 0, learned_nodes = 0;
  long long rpc_work = 0, learned_work = 0;
  int heldout_nodes = 0;
  int heldout_hits = 0;
};

struct GapCurveRow {
  std::string id;
  std::string policy;
  long long work = 0;
  double gap = 0.0;
};

struct BranchEvalResult {
  std::vector<BranchEvalRow> rows;
  std::vector<GapCurveRow> curves;
  double mean_rpc_gap = 0.0, mean_learned_gap = 0.0;
  double agreement = 0.0;  // pooled over all held-out nodes
};

namespace detail {

// Optimality-gap trace: merge both timelines on the work axis and emit a row
// whenever bounds from both sides exist.
inline void append_gap_curve(std::vector<GapCurveRow>& out, const std::string& id,
                             const std::string& policy, const BnbResult& res) {
  struct Event {
    long long work;
    double value;
    bool is_upper;
  };
  std::vector<Event> events;
  for (const auto& e : res.incumbent_timeline) events.push_back({e.work, e.objective, true});
  for (const auto& e : res.bound_timeline) events.push_back({e.work, e.objective, false});
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.work < b.work; });
  double ub = kInf, lb = -kInf;
  for (const auto& e : events) {
    if (e.is_upper) ub = e.value;
    else lb = e.value;
    if (ub < kInf && lb > -kInf) out.push_back({id, policy, e.work, mip_gap(ub, lb)});
  }
  if (res.has_incumbent() && res.lower_bound > -kInf)
    out.push_back({id, policy, res.lp_iterations, mip_gap(res.upper_bound, res.lower_bound)});
}

}  // namespace detail

inline BranchEvalResult evaluate_branching(const SystemSpec& sys,
                                           const std::vector<ScenarioRecord>& test,
                                           BranchModel& model, const ExperimentConfig& cfg) {
  if (test.empty()) throw ConfigError("evaluate_branching: no test scenarios");
  BranchEvalResult res;
  long long hits = 0, total = 0;
  for (const auto& rec : test) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    BranchEvalRow row;
    row.id = rec.id;

    // No incumbent within budget counts as a fully open gap, keeping the mean
    // finite and the penalty proportional.
    const auto gap_of = [](const BnbResult& r) {
      return r.has_incumbent() ? mip_gap(r.upper_bound, r.lower_bound) : 100.0;
    };

    BnbConfig cfg_rpc;
    cfg_rpc.node_limit = cfg.branch_eval_nodes;
    ReliabilityPseudocost rpc;
    cfg_rpc.branching = &rpc;
    const BnbResult r1 = solve_bnb(built.problem, cfg_rpc);
    row.rpc_gap = gap_of(r1);
    row.rpc_nodes = r1.nodes_processed;
    row.rpc_work = r1.lp_iterations;
    detail::append_gap_curve(res.curves, rec.id, "reliability", r1);

    BnbConfig cfg_lrn;
    cfg_lrn.node_limit = cfg.branch_eval_nodes;
    LearnedBranching learned(model.params, model.mb);
    cfg_lrn.branching = &learned;
    const BnbResult r2 = solve_bnb(built.problem, cfg_lrn);
    row.learned_gap = gap_of(r2);
    row.learned_nodes = r2.nodes_processed;
    row.learned_work = r2.lp_iterations;
    detail::append_gap_curve(res.curves, rec.id, "learned", r2);

    // Held-out agreement: label fresh nodes on this unseen instance with
    // strong branching, then ask the model for its pick at each one.
    std::vector<BranchingSample> nodes;
    RecordingStrongBranching recorder(cfg.heldout_node_cap, &nodes, rec.id, rec.split);
    BnbConfig cfg_sb;
    cfg_sb.node_limit = cfg.heldout_node_cap + 8;
    cfg_sb.branching = &recorder;
    solve_bnb(built.problem, cfg_sb);
    row.heldout_nodes = static_cast<int>(nodes.size());
    for (const auto& s : nodes) {
      const int pick = branch_model_argmax(model.params, model.mb, s.bg, s.candidates);
      row.heldout_hits += pick == s.chosen ? 1 : 0;
    }
    hits += row.heldout_hits;
    total += row.heldout_nodes;
    res.rows.push_back(row);
  }
  const double n = static_cast<double>(res.rows.size());
  for (const auto& r : res.rows) {
    res.mean_rpc_gap += r.rpc_gap / n;
    res.mean_learned_gap += r.learned_gap / n;
  }
  res.agreement = total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  return res;
}

inline void write_branch_eval_csv(const std::string& dir, const BranchEvalResult& res) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows) {
    const double agree =
        r.heldout_nodes > 0 ? 100.0 * r.heldout_hits / static_cast<double>(r.heldout_nodes) : 0.0;
    rows.push_back({r.id, csv_num(r.rpc_gap), csv_num(r.learned_gap), std::to_string(r.rpc_nodes),
                    std::to_string(r.learned_nodes), std::to_string(r.rpc_work),
                    std::to_string(r.learned_work), std::to_string(r.heldout_nodes),
                    std::to_string(r.heldout_hits), csv_num(agree)});
  }
  write_csv(path_join(dir, "eval_branch.csv"),
            "instance,rpc_gap,learned_gap,rpc_nodes,learned_nodes,rpc_work,learned_work,"
            "heldout_nodes,heldout_hits,agreement_pct",
            rows);
  std::vector<std::vector<std::string>> crows;
  for (const auto& r : res.curves)
    crows.push_back({r.id, r.policy, std::to_string(r.work), csv_num(r.gap)});
  write_csv(path_join(dir, "eval_branch_curves.csv"), "instance,policy,work,gap_pct", crows);
}

struct JointEvalRow {
  std::string id;
  double plain = kInf, dive = kInf, branch = kInf, joint = kInf;
  int violations = 0;  // summed across the four reported schedules
};

struct JointEvalResult {
  std::vector<JointEvalRow> rows;
  std::vector<MethodTimelineRow> timelines;
  double mean_plain = 0.0, mean_dive = 0.0, mean_branch = 0.0, mean_joint = 0.0;
};

inline JointEvalResult evaluate_joint(const SystemSpec& sys, const std::vector<ScenarioRecord>& test,
                                      DiveModel& pi, BranchModel& branch,
                                      const ExperimentConfig& cfg) {
  if (test.empty()) throw ConfigError("evaluate_joint: no test scenarios");
  JointEvalResult res;
  for (const auto& rec : test) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    JointEvalRow row;
    row.id = rec.id;

    const auto run_plain = [&](BranchingPolicy* policy, const std::string& method) {
      BnbConfig c = eval_budget(cfg);
      c.branching = policy;
      const BnbResult r = solve_bnb(built.problem, c);
      if (r.has_incumbent()) {
        const UcSchedule sched = decode_solution(r.incumbent, built.vmap);
        row.violations += detail::checked_violations(inst, sched, r.upper_bound, method.c_str());
      }
      detail::append_timeline(res.timelines, rec.id, method, r.incumbent_timeline);
      return r.has_incumbent() ? r.upper_bound : kInf;
    };
    {
      ReliabilityPseudocost rpc;
      row.plain = run_plain(&rpc, "plain");
    }
    {
      LearnedBranching learned(branch.params, branch.mb);
      row.branch = run_plain(&learned, "branch-only");
    }
    const auto run_dive = [&](const std::function<std::unique_ptr<BranchingPolicy>()>& factory,
                              const std::string& method) {
      DivingConfig d;
      d.epsilon = cfg.dive_epsilon;
      d.ratios = cfg.dive_ratios;
      d.workers = cfg.dive_workers;
      d.sub_solver = eval_budget(cfg);
      d.branching_factory = factory;
      try {
        DiveOutcome out = neural_dive(inst, pi.params, pi.pi, pi.valid_acc, d);
        row.violations += detail::checked_violations(inst, out.schedule, out.c_min, method.c_str());
        detail::append_timeline(res.timelines, rec.id, method, out.timeline);
        return out.c_min;
      } catch (const NoSolutionError&) {
        return kInf;
      }
    };
    row.dive = run_dive([] { return std::make_unique<ReliabilityPseudocost>(); }, "dive-only");
    row.joint = run_dive(
        [&] { return std::make_unique<LearnedBranching>(branch.params, branch.mb); }, "dive+branch");
    res.rows.push_back(row);
  }
  const double n = static_cast<double>(res.rows.size());
  for (const auto& r : res.rows) {
    res.mean_plain += r.plain / n;
    res.mean_dive += r.dive / n;
    res.mean_branch += r.branch / n;
    res.mean_joint += r.joint / n;
  }
  return res;
}

inline void write_joint_eval_csv(const std::string& dir, const JointEvalResult& res) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : res.rows)
    rows.push_back({r.id, csv_num(r.plain), csv_num(r.dive), csv_num(r.branch), csv_num(r.joint),
                    std::to_string(r.violations)});
  write_csv(path_join(dir, "eval_joint.csv"),
            "instance,plain_cost,dive_cost,branch_cost,joint_cost,violations", rows);
  std::vector<std::vector<std::string>> trows;
  for (const auto& r : res.timelines)
    trows.push_back({r.id, r.method, std::to_string(r.work), csv_num(r.objective)});
  write_csv(path_join(dir, "eval_joint_timelines.csv"), "instance,method,work,objective", trows);
}

// ---------------------------------------------------------------------------
// Graph size report: the compact encoding keeps one node per bus, while the
// bipartite encoding needs one per row plus one per column.
// ---------------------------------------------------------------------------

struct GraphSizeRow {
  std::string id;
  int compact_nodes = 0;
  int compact_edges = 0;
  long long bipartite_nodes = 0;
  long long bipartite_edges = 0;
  double node_ratio = 0.0;
};

inline std::vector<GraphSizeRow> report_graph_sizes(const SystemSpec& sys,
                                                    const std::vector<ScenarioRecord>& scens) {
  std::vector<GraphSizeRow> out;
  for (const auto& rec : scens) {
    const UcInstance inst = make_instance(sys, rec.scen);
    const UcBuild built = build_uc_milp(inst);
    const SpatiotemporalGraph st = build_spatiotemporal_graph(inst);
    const SpatialGraph sp = build_spatial_graph(inst);
    GraphSizeRow row;
    row.id = rec.id;
    row.compact_nodes = st.node_features.rows();
    row.compact_edges = static_cast<int>(sp.edges.size());
    row.bipartite_nodes =
        static_cast<long long>(built.problem.num_rows()) + built.problem.num_vars();
    row.bipartite_edges = built.problem.A->nnz();
    row.node_ratio = static_cast<double>(row.bipartite_nodes) / row.compact_nodes;
    out.push_back(row);
  }
  return out;
}

inline void write_graph_sizes_csv(const std::string& dir, const std::vector<GraphSizeRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({r.id, std::to_string(r.compact_nodes), std::to_string(r.compact_edges),
                     std::to_string(r.bipartite_nodes), std::to_string(r.bipartite_edges),
                     csv_num(r.node_ratio)});
  write_csv(path_join(dir, "graph_sizes.csv"),
            "instance,compact_nodes,compact_edges,bipartite_nodes,bipartite_edges,node_ratio",
            cells);
}

// ---------------------------------------------------------------------------
// Figure-shaped CSV exports assembled from the evaluation outputs.
// ---------------------------------------------------------------------------

inline void write_plot_data(const std::string& dir) {
  {
    std::vector<std::vector<std::string>> rows;
    for (const char* model : {"pi_dive", "mb_dive", "mb_branch"}) {
      const std::string path = path_join(dir, std::string(model) + "_curve.csv");
      if (!std::filesystem::exists(path)) continue;
      const CsvTable t = read_csv(path);
      for (const auto& r : t.rows) {
        std::vector<std::string> cells = {model};
        cells.insert(cells.end(), r.begin(), r.end());
        rows.push_back(cells);
      }
    }
    write_csv(path_join(dir, "fig_training_curves.csv"),
              "model,epoch,learning_rate,train_loss,valid_loss,valid_metric", rows);
  }
  {
    const CsvTable t = read_csv(path_join(dir, "eval_dive.csv"));
    double plain = 0.0, mb = 0.0, pi = 0.0;
    for (const auto& r : t.rows) {
      plain += std::stod(r[1]);
      mb += std::stod(r[2]);
      pi += std::stod(r[3]);
    }
    const double n = t.rows.empty() ? 1.0 : static_cast<double>(t.rows.size());
    write_csv(path_join(dir, "fig_dive_costs.csv"), "method,mean_cost",
              {{"plain", csv_num(plain / n)},
               {"mb-dive", csv_num(mb / n)},
               {"pi-dive", csv_num(pi / n)}});
  }
  {
    const CsvTable t = read_csv(path_join(dir, "eval_branch_curves.csv"));
    std::vector<std::vector<std::string>> rows = t.rows;
    write_csv(path_join(dir, "fig_gap_vs_work.csv"), "instance,policy,work,gap_pct", rows);
  }
  {
    const CsvTable t = read_csv(path_join(dir, "eval_dive_intervals.csv"));
    write_csv(path_join(dir, "fig_acc_intervals.csv"),
              "model,acc_ge_0.80,acc_ge_0.85,acc_ge_0.90,acc_ge_0.95,acc_ge_1.00", t.rows);
  }
}

// ---------------------------------------------------------------------------
// End-to-end run: corpus, datasets, training, checkpoints, evaluations and the
// fig exports, all under cfg.out_dir. Everything downstream of the scenario
// seed is node-budgeted, so two runs with one seed match byte for byte.
// ---------------------------------------------------------------------------

struct PipelineArtifacts {
  ExperimentConfig cfg;
  SystemSpec system;
  std::vector<ScenarioRecord> scenarios;
  std::vector<DivingSample> dive_dataset;
  std::vector<BranchingSample> branch_dataset;
  DiveModel pi;
  DiveModel mb;
  BranchModel branch;
  DiveEvalResult dive_eval;
  BranchEvalResult branch_eval;
  JointEvalResult joint_eval;
  std::vector<GraphSizeRow> sizes;
  double train_seconds = 0.0;
};

inline PipelineArtifacts run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  PipelineArtifacts art;
  art.cfg = cfg;
  art.system = make_desk_system();
  save_json_file(path_join(cfg.out_dir, "system.json"), system_to_json(art.system));
  save_json_file(path_join(cfg.out_dir, "config.json"), experiment_config_to_json(cfg));

  art.scenarios = make_corpus(art.system, cfg);
  save_scenarios_jsonl(path_join(cfg.out_dir, "scenarios.jsonl"), art.scenarios);
  std::vector<ScenarioRecord> fit;  // the test split never enters a dataset
  for (const auto& r : art.scenarios)
    if (r.split != "test") fit.push_back(r);
  const std::vector<ScenarioRecord> test = filter_split(art.scenarios, "test");

  art.dive_dataset = collect_diving_samples(art.system, fit, solve_budget(cfg), log);
  save_diving_dataset(path_join(cfg.out_dir, "dive_dataset.jsonl"), art.dive_dataset);
  BnbConfig branch_budget;
  branch_budget.node_limit = cfg.branch_solve_nodes;
  art.branch_dataset =
      collect_branching_samples(art.system, fit, branch_budget, cfg.branch_sample_cap, log);
  save_branching_dataset(path_join(cfg.out_dir, "branch_dataset.jsonl"), art.branch_dataset);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutput pi_tr = train_dive_model(ModelKind::PiDive, art.dive_dataset, cfg.train_pi_dive);
  write_train_curve_csv(path_join(cfg.out_dir, "pi_dive_curve.csv"), pi_tr.curve);
  save_dive_checkpoint(path_join(cfg.out_dir, "pi_dive.ckpt"), ModelKind::PiDive,
                       pi_config_for(art.dive_dataset[0]), pi_tr, cfg.train_pi_dive.seed);
  const TrainOutput mb_tr = train_dive_model(ModelKind::MbDive, art.dive_dataset, cfg.train_mb_dive);
  write_train_curve_csv(path_join(cfg.out_dir, "mb_dive_curve.csv"), mb_tr.curve);
  save_dive_checkpoint(path_join(cfg.out_dir, "mb_dive.ckpt"), ModelKind::MbDive,
                       pi_config_for(art.dive_dataset[0]), mb_tr, cfg.train_mb_dive.seed);
  const TrainOutput br_tr = train_branch_model(art.branch_dataset, cfg.train_mb_branch);
  write_train_curve_csv(path_join(cfg.out_dir, "mb_branch_curve.csv"), br_tr.curve);
  save_branch_checkpoint(path_join(cfg.out_dir, "mb_branch.ckpt"), br_tr, cfg.train_mb_branch.seed);
  art.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // Evaluation consumes the checkpoints as written, not the in-memory state,
  // so the serialization path is on the critical path of every result.
  art.pi = load_dive_model(path_join(cfg.out_dir, "pi_dive.ckpt"));
  art.mb = load_dive_model(path_join(cfg.out_dir, "mb_dive.ckpt"));
  art.branch = load_branch_model(path_join(cfg.out_dir, "mb_branch.ckpt"));

  art.dive_eval = evaluate_diving(art.system, test, art.pi, art.mb, art.dive_dataset, cfg);
  write_dive_eval_csv(cfg.out_dir, art.dive_eval);
  art.branch_eval = evaluate_branching(art.system, test, art.branch, cfg);
  write_branch_eval_csv(cfg.out_dir, art.branch_eval);
  art.joint_eval = evaluate_joint(art.system, test, art.pi, art.branch, cfg);
  write_joint_eval_csv(cfg.out_dir, art.joint_eval);
  art.sizes = report_graph_sizes(art.system, art.scenarios);
  write_graph_sizes_csv(cfg.out_dir, art.sizes);
  write_plot_data(cfg.out_dir);
  return art;
}

}  // namespace ucmip
