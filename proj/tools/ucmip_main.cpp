// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the experiment pipeline. Every subcommand reads
// and writes the same artifact layout under --out-dir, so a full study can be
// driven stage by stage or in one shot with run-all.

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "ucmip/pipeline.hpp"

namespace {

using namespace ucmip;

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  double time_limit = -1.0;  // seconds; 0 lifts the wall-clock limit
  long long node_limit = -1;
  int workers = -1;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

// Flags override the config file, which overrides the desk defaults.
ExperimentConfig resolve_config(const CliOptions& opt) {
  ExperimentConfig cfg = desk_config();
  if (!opt.config_path.empty()) cfg = experiment_config_from_json(load_json_file(opt.config_path));
  if (opt.seed_set) cfg.seed = opt.seed;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.time_limit >= 0.0) cfg.solve_time_s = opt.time_limit == 0.0 ? kInf : opt.time_limit;
  if (opt.node_limit >= 0) cfg.solve_nodes = opt.node_limit;
  if (opt.workers >= 1) cfg.dive_workers = opt.workers;
  cfg.validate();
  return cfg;
}

SystemSpec load_system(const ExperimentConfig& cfg) {
  const std::string path = path_join(cfg.out_dir, "system.json");
  if (!std::filesystem::exists(path)) {
    throw ConfigError("missing " + path + "; run gen-system first");
  }
  return system_from_json(load_json_file(path));
}

std::vector<ScenarioRecord> load_corpus(const ExperimentConfig& cfg) {
  const std::string path = path_join(cfg.out_dir, "scenarios.jsonl");
  if (!std::filesystem::exists(path)) {
    throw ConfigError("missing " + path + "; run gen-scenarios first");
  }
  return load_scenarios_jsonl(path);
}

std::vector<ScenarioRecord> fit_split(const std::vector<ScenarioRecord>& recs) {
  std::vector<ScenarioRecord> out;
  for (const auto& r : recs)
    if (r.split != "test") out.push_back(r);
  return out;
}

int run(const std::string& cmd, const CliOptions& opt, const std::string& model_name,
        const std::string& solve_id) {
  ExperimentConfig cfg = resolve_config(opt);
  std::filesystem::create_directories(cfg.out_dir);

  if (cmd == "gen-system") {
    const SystemSpec sys = make_desk_system();
    save_json_file(path_join(cfg.out_dir, "system.json"), system_to_json(sys));
    std::cout << "wrote " << path_join(cfg.out_dir, "system.json") << "\n";
    return 0;
  }
  if (cmd == "gen-scenarios") {
    const SystemSpec sys = load_system(cfg);
    const auto corpus = make_corpus(sys, cfg);
    save_scenarios_jsonl(path_join(cfg.out_dir, "scenarios.jsonl"), corpus);
    std::cout << "wrote " << corpus.size() << " scenarios to "
              << path_join(cfg.out_dir, "scenarios.jsonl") << "\n";
    return 0;
  }
  if (cmd == "solve") {
    const SystemSpec sys = load_system(cfg);
    const auto corpus = load_corpus(cfg);
    bool matched = false;
    for (const auto& rec : corpus) {
      if (!solve_id.empty() && rec.id != solve_id) continue;
      matched = true;
      const UcInstance inst = make_instance(sys, rec.scen);
      const UcBuild built = build_uc_milp(inst);
      ReliabilityPseudocost rpc;
      BnbConfig bc = solve_budget(cfg);
      bc.branching = &rpc;
      const BnbResult res = solve_bnb(built.problem, bc);
      std::cout << rec.id << " status=" << static_cast<int>(res.status)
                << " objective=" << fmt_csv(res.upper_bound) << " gap_pct="
                << fmt_csv(res.has_incumbent() ? mip_gap(res.upper_bound, res.lower_bound) : 100.0)
                << " nodes=" << res.nodes_processed << " lp_iterations=" << res.lp_iterations
                << "\n";
      if (res.has_incumbent()) {
        const UcSchedule sched = decode_solution(res.incumbent, built.vmap);
        const auto report = validate_schedule(inst, sched);
        if (!report.violations.empty()) {
          for (const auto& v : report.violations) std::cout << "  violation: " << v << "\n";
        }
      }
    }
    if (!solve_id.empty() && !matched) throw ConfigError("solve: unknown scenario id " + solve_id);
    return 0;
  }
  if (cmd == "collect-dive") {
    const SystemSpec sys = load_system(cfg);
    const auto ds = collect_diving_samples(sys, fit_split(load_corpus(cfg)), solve_budget(cfg),
                                           &std::cout);
    save_diving_dataset(path_join(cfg.out_dir, "dive_dataset.jsonl"), ds);
    std::cout << "wrote " << ds.size() << " samples to "
              << path_join(cfg.out_dir, "dive_dataset.jsonl") << "\n";
    return 0;
  }
  if (cmd == "collect-branch") {
    const SystemSpec sys = load_system(cfg);
    BnbConfig budget;
    budget.node_limit = cfg.branch_solve_nodes;
    budget.time_limit = cfg.solve_time_s;
    const auto ds = collect_branching_samples(sys, fit_split(load_corpus(cfg)), budget,
                                              cfg.branch_sample_cap, &std::cout);
    save_branching_dataset(path_join(cfg.out_dir, "branch_dataset.jsonl"), ds);
    std::cout << "wrote " << ds.size() << " samples to "
              << path_join(cfg.out_dir, "branch_dataset.jsonl") << "\n";
    return 0;
  }
  if (cmd == "train") {
    const ModelKind kind = model_kind_from_name(model_name);
    if (kind == ModelKind::MbBranch) {
      const auto ds = load_branching_dataset(path_join(cfg.out_dir, "branch_dataset.jsonl"));
      const TrainOutput tr = train_branch_model(ds, cfg.train_mb_branch);
      write_train_curve_csv(path_join(cfg.out_dir, "mb_branch_curve.csv"), tr.curve);
      save_branch_checkpoint(path_join(cfg.out_dir, "mb_branch.ckpt"), tr, cfg.train_mb_branch.seed);
      std::cout << "mb-branch: epochs=" << tr.epochs_run << " best_valid=" << fmt_csv(tr.best_valid)
                << " agreement=" << fmt_csv(tr.valid_acc.at(0)) << "\n";
      return 0;
    }
    const auto ds = load_diving_dataset(path_join(cfg.out_dir, "dive_dataset.jsonl"));
    const TrainConfig& tc = kind == ModelKind::PiDive ? cfg.train_pi_dive : cfg.train_mb_dive;
    const TrainOutput tr = train_dive_model(kind, ds, tc);
    const std::string stem = kind == ModelKind::PiDive ? "pi_dive" : "mb_dive";
    write_train_curve_csv(path_join(cfg.out_dir, stem + "_curve.csv"), tr.curve);
    save_dive_checkpoint(path_join(cfg.out_dir, stem + ".ckpt"), kind, pi_config_for(ds.at(0)), tr,
                         tc.seed);
    std::cout << model_kind_name(kind) << ": epochs=" << tr.epochs_run
              << " best_valid=" << fmt_csv(tr.best_valid)
              << " dims_acc_ge_0.95=" << interval_counts(tr.valid_acc)[3] << "\n";
    return 0;
  }
  if (cmd == "eval-dive") {
    const SystemSpec sys = load_system(cfg);
    const auto test = filter_split(load_corpus(cfg), "test");
    DiveModel pi = load_dive_model(path_join(cfg.out_dir, "pi_dive.ckpt"));
    DiveModel mb = load_dive_model(path_join(cfg.out_dir, "mb_dive.ckpt"));
    const auto ds = load_diving_dataset(path_join(cfg.out_dir, "dive_dataset.jsonl"));
    const DiveEvalResult res = evaluate_diving(sys, test, pi, mb, ds, cfg);
    write_dive_eval_csv(cfg.out_dir, res);
    std::cout << "mean cost: plain=" << fmt_csv(res.mean_plain) << " mb=" << fmt_csv(res.mean_mb)
              << " pi=" << fmt_csv(res.mean_pi) << "\n";
    return 0;
  }
  if (cmd == "eval-branch") {
    const SystemSpec sys = load_system(cfg);
    const auto test = filter_split(load_corpus(cfg), "test");
    BranchModel model = load_branch_model(path_join(cfg.out_dir, "mb_branch.ckpt"));
    const BranchEvalResult res = evaluate_branching(sys, test, model, cfg);
    write_branch_eval_csv(cfg.out_dir, res);
    std::cout << "mean gap: reliability=" << fmt_csv(res.mean_rpc_gap)
              << " learned=" << fmt_csv(res.mean_learned_gap)
              << " agreement=" << fmt_csv(100.0 * res.agreement) << "%\n";
    return 0;
  }
  if (cmd == "eval-joint") {
    const SystemSpec sys = load_system(cfg);
    const auto test = filter_split(load_corpus(cfg), "test");
    DiveModel pi = load_dive_model(path_join(cfg.out_dir, "pi_dive.ckpt"));
    BranchModel branch = load_branch_model(path_join(cfg.out_dir, "mb_branch.ckpt"));
    const JointEvalResult res = evaluate_joint(sys, test, pi, branch, cfg);
    write_joint_eval_csv(cfg.out_dir, res);
    std::cout << "mean cost: plain=" << fmt_csv(res.mean_plain)
              << " dive=" << fmt_csv(res.mean_dive) << " branch=" << fmt_csv(res.mean_branch)
              << " joint=" << fmt_csv(res.mean_joint) << "\n";
    return 0;
  }
  if (cmd == "graph-sizes") {
    const SystemSpec sys = load_system(cfg);
    const auto rows = report_graph_sizes(sys, load_corpus(cfg));
    write_graph_sizes_csv(cfg.out_dir, rows);
    std::cout << "wrote " << path_join(cfg.out_dir, "graph_sizes.csv") << "\n";
    return 0;
  }
  if (cmd == "plot-data") {
    write_plot_data(cfg.out_dir);
    std::cout << "wrote figure CSVs under " << cfg.out_dir << "\n";
    return 0;
  }
  if (cmd == "run-all") {
    const PipelineArtifacts art = run_pipeline(cfg, &std::cout);
    std::cout << "training took " << fmt_csv(art.train_seconds) << "s\n"
              << "mean cost: plain=" << fmt_csv(art.dive_eval.mean_plain)
              << " mb=" << fmt_csv(art.dive_eval.mean_mb)
              << " pi=" << fmt_csv(art.dive_eval.mean_pi) << "\n"
              << "mean gap: reliability=" << fmt_csv(art.branch_eval.mean_rpc_gap)
              << " learned=" << fmt_csv(art.branch_eval.mean_learned_gap)
              << " agreement=" << fmt_csv(100.0 * art.branch_eval.agreement) << "%\n";
    return 0;
  }
  throw ConfigError("unknown subcommand " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unit-commitment MIP toolkit: built-in branch and bound plus neural diving "
               "and branching"};
  app.require_subcommand(1);

  CliOptions opt;
  std::string model_name = "pi-dive";
  std::string solve_id;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config overlaying the desk defaults");
    sub->add_option("--seed", opt.seed, "experiment seed")->each([&](const std::string&) {
      opt.seed_set = true;
    });
    sub->add_option("--out-dir", opt.out_dir, "artifact directory");
    sub->add_option("--time-limit", opt.time_limit, "per-solve wall limit in seconds; 0 = none");
    sub->add_option("--node-limit", opt.node_limit, "per-solve node budget");
    sub->add_option("--workers", opt.workers, "sub-MIP worker threads");
    return sub;
  };

  add_common(app.add_subcommand("gen-system", "write the built-in 9-bus system spec"));
  add_common(app.add_subcommand("gen-scenarios", "draw the load scenario corpus"));
  auto* solve_cmd = add_common(app.add_subcommand("solve", "solve scenarios by branch and bound"));
  solve_cmd->add_option("--id", solve_id, "solve only this scenario id");
  add_common(app.add_subcommand("collect-dive", "solve the fit split and store best solutions"));
  add_common(app.add_subcommand("collect-branch", "record strong-branching decisions"));
  auto* train_cmd = add_common(app.add_subcommand("train", "fit a model on a collected dataset"));
  train_cmd->add_option("--model", model_name, "pi-dive, mb-dive, or mb-branch");
  add_common(app.add_subcommand("eval-dive", "equal-budget cost comparison of the dive models"));
  add_common(app.add_subcommand("eval-branch", "node-budget gap race of branching policies"));
  add_common(app.add_subcommand("eval-joint", "four-way plain/dive/branch/joint comparison"));
  add_common(app.add_subcommand("graph-sizes", "compact vs bipartite graph size report"));
  add_common(app.add_subcommand("plot-data", "bundle per-figure CSVs from prior results"));
  add_common(app.add_subcommand("run-all", "full pipeline: generate, collect, train, evaluate"));

  CLI11_PARSE(app, argc, argv);

  try {
    return run(app.get_subcommands().at(0)->get_name(), opt, model_name, solve_id);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DecodeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NoSolutionError& e) {
    std::cerr << "no solution: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
