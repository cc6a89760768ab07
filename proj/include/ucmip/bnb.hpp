// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "ucmip/milp.hpp"
#include "ucmip/simplex.hpp"

namespace ucmip {

enum class BnbStatus { Optimal, FeasibleLimit, InfeasibleProven, NoIncumbentLimit };

enum class NodeSelection { BestBound, DepthFirst };

class BranchingPolicy;

struct BnbConfig {
  double time_limit = kInf;
  long long node_limit = std::numeric_limits<long long>::max();
  double gap_tol = 1e-6;
  NodeSelection node_selection = NodeSelection::BestBound;
  BranchingPolicy* branching = nullptr;  // nullptr: most-fractional
  double epsilon_sb = 1e-6;
  double infeasible_child_value = 1e12;
  std::uint64_t seed = 0;
};

struct TimelineEntry {
  double elapsed_s;
  long long work;  // cumulative simplex iterations, a deterministic clock
  double objective;
};

struct BnbResult {
  BnbStatus status = BnbStatus::NoIncumbentLimit;
  std::vector<double> incumbent;  // empty when none found
  double upper_bound = kInf;
  double lower_bound = -kInf;
  double gap = kInf;  // ratio, not percent
  long long nodes_processed = 0;
  long long lp_iterations = 0;
  long long probe_solves = 0;  // child LPs solved for branching scores
  double elapsed_s = 0.0;
  std::vector<TimelineEntry> incumbent_timeline;
  std::vector<TimelineEntry> bound_timeline;  // proven lower bound improvements

  bool has_incumbent() const { return !incumbent.empty(); }
};

// Relative optimality gap in percent.
inline double mip_gap(double upper, double lower) {
  if (upper == lower) return 0.0;
  return 100.0 * (upper - lower) / std::max(std::fabs(upper), 1e-10);
}

struct LpProbe {
  LpStatus status = LpStatus::Infeasible;
  double objective = kInf;
};

class BnbEngine;

// Read-only view of the node under branching. Handed to branching policies
// and dataset callbacks; probe_child solves a child LP on demand.
class NodeContext {
 public:
  const MilpProblem& problem() const;
  const LpSolution& lp() const;
  const std::vector<int>& candidates() const;
  double incumbent_value() const;
  const std::vector<double>* incumbent() const;            // nullptr when none
  const std::vector<double>* incumbent_running_avg() const;  // nullptr when none
  int depth() const;
  long long nodes_processed() const;
  long long lp_solve_count() const;
  double node_lower(int col) const;
  double node_upper(int col) const;
  // Solve count since the column/row last changed basis status, over total.
  double col_age(int col) const;
  double row_age(int row) const;
  double frac(int col) const;  // distance below the LP value's ceiling
  double epsilon_sb() const;
  double infeasible_child_value() const;
  LpProbe probe_child(int col, int dir) const;  // dir < 0: floor child, else ceil

 private:
  friend class BnbEngine;
  explicit NodeContext(BnbEngine* e) : eng_(e) {}
  BnbEngine* eng_;
};

class BranchingPolicy {
 public:
  virtual ~BranchingPolicy() = default;
  virtual int select(const NodeContext& ctx) = 0;
  virtual void reset() {}
  virtual std::string name() const = 0;
};

// Strong-branching score: product of child LP bound improvements with an
// epsilon floor; an infeasible child contributes infeasible_child_value.
inline double sb_score(const NodeContext& ctx, int col) {
  const double z = ctx.lp().objective;
  const double eps = ctx.epsilon_sb();
  const double big = ctx.infeasible_child_value();
  const LpProbe down = ctx.probe_child(col, -1);
  const LpProbe up = ctx.probe_child(col, +1);
  const double fd = down.status == LpStatus::Optimal ? std::max(down.objective - z, eps) : big;
  const double fu = up.status == LpStatus::Optimal ? std::max(up.objective - z, eps) : big;
  return fd * fu;
}

class StrongBranching final : public BranchingPolicy {
 public:
  int select(const NodeContext& ctx) override {
    int best = -1;
    double best_score = -kInf;
    for (int col : ctx.candidates()) {
      const double s = sb_score(ctx, col);
      if (s > best_score) {
        best_score = s;
        best = col;
      }
    }
    return best;
  }
  std::string name() const override { return "strong"; }
};

// Free-function form of the strong-branching pick. Candidates are scanned in
// ascending column order, so score ties resolve to the lower column.
inline int strong_branching_select(const NodeContext& ctx) {
  StrongBranching policy;
  return policy.select(ctx);
}

class MostFractional final : public BranchingPolicy {
 public:
  int select(const NodeContext& ctx) override {
    int best = -1;
    double best_score = -kInf;
    for (int col : ctx.candidates()) {
      const double f = ctx.frac(col);
      const double s = std::min(f, 1.0 - f);
      if (s > best_score) {
        best_score = s;
        best = col;
      }
    }
    return best;
  }
  std::string name() const override { return "mostfrac"; }
};

// Pseudocost branching with strong-branching bootstrap: a variable is scored
// by child LPs until it has eta feasible observations in each direction, and
// by its historical per-unit gains afterwards.
class ReliabilityPseudocost final : public BranchingPolicy {
 public:
  explicit ReliabilityPseudocost(int eta = 4) : eta_(eta) {}

  int select(const NodeContext& ctx) override {
    const int n = ctx.problem().num_vars();
    if (static_cast<int>(pc_up_.size()) != n) reset_state(n);
    const double z = ctx.lp().objective;
    const double eps = ctx.epsilon_sb();
    const double big = ctx.infeasible_child_value();
    int best = -1;
    double best_score = -kInf;
    for (int col : ctx.candidates()) {
      const double f = ctx.frac(col);
      double score;
      if (n_down_[col] >= eta_ && n_up_[col] >= eta_) {
        score = std::max(pc_down_[col] * f, eps) * std::max(pc_up_[col] * (1.0 - f), eps);
      } else {
        const LpProbe down = ctx.probe_child(col, -1);
        const LpProbe up = ctx.probe_child(col, +1);
        double fd = big, fu = big;
        if (down.status == LpStatus::Optimal) {
          fd = std::max(down.objective - z, eps);
          observe(pc_down_, n_down_, col, std::max(down.objective - z, 0.0) / std::max(f, 1e-12));
        }
        if (up.status == LpStatus::Optimal) {
          fu = std::max(up.objective - z, eps);
          observe(pc_up_, n_up_, col, std::max(up.objective - z, 0.0) / std::max(1.0 - f, 1e-12));
        }
        score = fd * fu;
      }
      if (score > best_score) {
        best_score = score;
        best = col;
      }
    }
    return best;
  }

  void reset() override {
    pc_up_.clear();
    pc_down_.clear();
    n_up_.clear();
    n_down_.clear();
  }

  std::string name() const override { return "relpcost"; }

 private:
  void reset_state(int n) {
    pc_up_.assign(n, 0.0);
    pc_down_.assign(n, 0.0);
    n_up_.assign(n, 0);
    n_down_.assign(n, 0);
  }

  static void observe(std::vector<double>& pc, std::vector<int>& cnt, int col, double unit_gain) {
    pc[col] = (pc[col] * cnt[col] + unit_gain) / (cnt[col] + 1);
    ++cnt[col];
  }

  int eta_;
  std::vector<double> pc_up_, pc_down_;
  std::vector<int> n_up_, n_down_;
};

// Adapter for model-backed selection; the callback sees the same NodeContext
// as any other policy.
class CallbackBranching final : public BranchingPolicy {
 public:
  CallbackBranching(std::function<int(const NodeContext&)> fn, std::string name)
      : fn_(std::move(fn)), name_(std::move(name)) {}
  int select(const NodeContext& ctx) override { return fn_(ctx); }
  std::string name() const override { return name_; }

 private:
  std::function<int(const NodeContext&)> fn_;
  std::string name_;
};

using NodeCallback = std::function<void(const NodeContext&)>;

class BnbEngine {
 public:
  BnbEngine(const MilpProblem& problem, const BnbConfig& config)
      : prob_(&problem), cfg_(config), solver_(problem) {}

  BnbResult run(const NodeCallback& on_node) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0]() {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    MostFractional default_policy;
    BranchingPolicy* policy = cfg_.branching ? cfg_.branching : &default_policy;

    BnbResult res;
    integer_cols_.clear();
    for (int j = 0; j < prob_->num_vars(); ++j) {
      if (prob_->is_integer[j]) integer_cols_.push_back(j);
    }
    col_status_.assign(prob_->num_vars(), BasisStatus::Lower);
    col_change_.assign(prob_->num_vars(), 0);
    row_status_.assign(prob_->num_rows(), BasisStatus::Basic);
    row_change_.assign(prob_->num_rows(), 0);
    lp_count_ = 0;
    incumbent_.clear();
    incumbent_value_ = kInf;
    inc_sum_.assign(prob_->num_vars(), 0.0);
    inc_count_ = 0;

    std::vector<Node> pool;
    pool.push_back(Node{{}, -kInf, 0, 0});
    auto cmp = [&pool](int a, int b) {
      if (pool[a].parent_lp != pool[b].parent_lp) return pool[a].parent_lp > pool[b].parent_lp;
      return pool[a].seq > pool[b].seq;
    };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
    std::vector<int> stack;
    std::multiset<double> open_bounds;
    long long seq = 1;
    int pending = -1;

    auto push_node = [&](Node&& node) {
      node.seq = seq++;
      open_bounds.insert(node.parent_lp);
      pool.push_back(std::move(node));
      const int id = static_cast<int>(pool.size()) - 1;
      if (cfg_.node_selection == NodeSelection::BestBound) {
        heap.push(id);
      } else {
        stack.push_back(id);
      }
    };
    auto open_empty = [&]() { return pending < 0 && heap.empty() && stack.empty(); };
    auto pop_node = [&]() {
      int id;
      if (pending >= 0) {
        id = pending;
        pending = -1;
      } else if (cfg_.node_selection == NodeSelection::BestBound) {
        id = heap.top();
        heap.pop();
      } else {
        id = stack.back();
        stack.pop_back();
      }
      open_bounds.erase(open_bounds.find(pool[id].parent_lp));
      return id;
    };
    auto current_lb = [&]() {
      if (!open_bounds.empty()) return *open_bounds.begin();
      return incumbent_value_;  // tree exhausted: bound closed
    };
    auto record_incumbent = [&](const std::vector<double>& x, double value) {
      if (value >= incumbent_value_ - 1e-12) return;
      incumbent_ = x;
      incumbent_value_ = value;
      ++inc_count_;
      for (int j = 0; j < prob_->num_vars(); ++j) inc_sum_[j] += x[j];
      res.incumbent_timeline.push_back({elapsed(), solver_.total_iterations(), value});
    };

    open_bounds.insert(-kInf);
    {
      // Root enters through the same path as any node.
      if (cfg_.node_selection == NodeSelection::BestBound) {
        heap.push(0);
      } else {
        stack.push_back(0);
      }
    }

    // Proven-bound trace for gap-versus-work curves. Sampled while every node
    // is open; the min open bound caps at the incumbent, since subtrees whose
    // bound exceeds it say nothing about the optimum beyond the incumbent.
    double last_lb = -kInf;
    auto record_bound = [&](double lb) {
      if (has_incumbent()) lb = std::min(lb, incumbent_value_);
      if (lb > last_lb + 1e-12 && lb > -kInf && lb < kInf) {
        last_lb = lb;
        res.bound_timeline.push_back({elapsed(), solver_.total_iterations(), lb});
      }
    };

    bool limit_hit = false;
    while (!open_empty()) {
      if (res.nodes_processed >= cfg_.node_limit || elapsed() >= cfg_.time_limit) {
        limit_hit = true;
        break;
      }
      record_bound(current_lb());
      const int id = pop_node();
      if (pool[id].parent_lp >= incumbent_value_ - 1e-9) continue;  // bound pruning

      cur_node_ = id;
      node_pool_ = &pool;
      lp_ = solver_.solve(pool[id].overrides, true);
      ++res.nodes_processed;
      ++lp_count_;
      track_ages();

      if (lp_.status == LpStatus::Infeasible) continue;
      if (lp_.status == LpStatus::Unbounded) {
        throw NumericalError("solve_bnb: unbounded relaxation");
      }
      const double z = lp_.objective;
      if (z >= incumbent_value_ - 1e-9) continue;

      candidates_.clear();
      for (int col : integer_cols_) {
        const double v = lp_.x[col];
        if (std::fabs(v - std::round(v)) > 1e-6) candidates_.push_back(col);
      }

      if (candidates_.empty()) {
        record_incumbent(lp_.x, z);
        if (bound_gap(incumbent_value_, current_lb()) <= cfg_.gap_tol) break;
        continue;
      }

      // Rounding heuristic: snap integer columns and keep the rest.
      rounding_buf_ = lp_.x;
      for (int col : integer_cols_) rounding_buf_[col] = std::round(rounding_buf_[col]);
      if (check_feasible(*prob_, rounding_buf_, 1e-6).feasible) {
        record_incumbent(rounding_buf_, prob_->objective_value(rounding_buf_));
      }

      NodeContext ctx(this);
      if (on_node) on_node(ctx);
      const int branch_col = policy->select(ctx);
      if (branch_col < 0) throw NumericalError("solve_bnb: policy returned no column");

      const double v = lp_.x[branch_col];
      const double f = v - std::floor(v);
      Node down{pool[id].overrides, z, pool[id].depth + 1, 0};
      down.overrides.push_back({branch_col, node_lower(branch_col), std::floor(v)});
      Node up{pool[id].overrides, z, pool[id].depth + 1, 0};
      up.overrides.push_back({branch_col, std::ceil(v), node_upper(branch_col)});

      // Plunge into the child nearer the LP value; queue the other.
      const bool down_first = f < 0.5;
      Node& first = down_first ? down : up;
      Node& second = down_first ? up : down;
      push_node(std::move(second));
      if (cfg_.node_selection == NodeSelection::BestBound) {
        first.seq = seq++;
        open_bounds.insert(first.parent_lp);
        pool.push_back(std::move(first));
        pending = static_cast<int>(pool.size()) - 1;
      } else {
        push_node(std::move(first));
      }

      if (has_incumbent() && bound_gap(incumbent_value_, current_lb()) <= cfg_.gap_tol) break;
    }

    // When a pending plunge node was left unprocessed, its bound is still in
    // open_bounds; that is correct for the reported lower bound.
    res.elapsed_s = elapsed();
    res.lp_iterations = solver_.total_iterations();
    res.probe_solves = probe_count_;
    res.incumbent = incumbent_;
    res.upper_bound = incumbent_value_;
    const bool exhausted = open_empty() && !limit_hit;
    double lb;
    if (exhausted) {
      lb = has_incumbent() ? incumbent_value_ : kInf;
    } else {
      lb = open_bounds.empty() ? incumbent_value_ : *open_bounds.begin();
      // Open nodes that can only complete above the incumbent do not loosen
      // the proven bound; without the clamp the gap could go negative.
      if (has_incumbent()) lb = std::min(lb, incumbent_value_);
    }
    res.lower_bound = lb;
    record_bound(res.lower_bound);
    if (has_incumbent()) {
      res.gap = lb == -kInf ? kInf : bound_gap(incumbent_value_, lb);
      res.status =
          (exhausted || res.gap <= cfg_.gap_tol) ? BnbStatus::Optimal : BnbStatus::FeasibleLimit;
    } else {
      res.status = exhausted ? BnbStatus::InfeasibleProven : BnbStatus::NoIncumbentLimit;
      if (exhausted) res.lower_bound = kInf;
    }
    return res;
  }

 private:
  friend class NodeContext;

  struct Node {
    std::vector<BoundOverride> overrides;
    double parent_lp;
    int depth;
    long long seq;
  };

  static double bound_gap(double upper, double lower) {
    if (lower == -kInf) return kInf;
    if (upper == lower) return 0.0;
    return (upper - lower) / std::max(std::fabs(upper), 1e-10);
  }

  bool has_incumbent() const { return !incumbent_.empty(); }

  void track_ages() {
    for (int j = 0; j < prob_->num_vars(); ++j) {
      const BasisStatus s = lp_.basis[j];
      if (s != col_status_[j]) {
        col_status_[j] = s;
        col_change_[j] = lp_count_;
      }
    }
    for (int i = 0; i < prob_->num_rows(); ++i) {
      const BasisStatus s = lp_.row_basis[i];
      if (s != row_status_[i]) {
        row_status_[i] = s;
        row_change_[i] = lp_count_;
      }
    }
  }

  double node_lower(int col) const {
    double v = prob_->l[col];
    for (const auto& ov : (*node_pool_)[cur_node_].overrides) {
      if (ov.col == col) v = ov.lower;
    }
    return v;
  }

  double node_upper(int col) const {
    double v = prob_->u[col];
    for (const auto& ov : (*node_pool_)[cur_node_].overrides) {
      if (ov.col == col) v = ov.upper;
    }
    return v;
  }

  LpProbe probe(int col, int dir) {
    ++probe_count_;
    std::vector<BoundOverride> ov = (*node_pool_)[cur_node_].overrides;
    const double v = lp_.x[col];
    if (dir < 0) {
      ov.push_back({col, node_lower(col), std::floor(v)});
    } else {
      ov.push_back({col, std::ceil(v), node_upper(col)});
    }
    const LpSolution child = solver_.solve(ov, true);
    LpProbe p;
    p.status = child.status;
    p.objective = child.objective;
    return p;
  }

  const MilpProblem* prob_;
  BnbConfig cfg_;
  SimplexSolver solver_;
  LpSolution lp_;
  std::vector<int> integer_cols_;
  std::vector<int> candidates_;
  std::vector<double> rounding_buf_;
  std::vector<double> incumbent_;
  double incumbent_value_ = kInf;
  std::vector<double> inc_sum_;
  std::vector<double> inc_avg_buf_;
  long long inc_count_ = 0;
  std::vector<BasisStatus> col_status_, row_status_;
  std::vector<long long> col_change_, row_change_;
  long long lp_count_ = 0;
  long long probe_count_ = 0;
  std::vector<Node>* node_pool_ = nullptr;
  int cur_node_ = 0;
};

inline const MilpProblem& NodeContext::problem() const { return *eng_->prob_; }
inline const LpSolution& NodeContext::lp() const { return eng_->lp_; }
inline const std::vector<int>& NodeContext::candidates() const { return eng_->candidates_; }
inline double NodeContext::incumbent_value() const { return eng_->incumbent_value_; }
inline const std::vector<double>* NodeContext::incumbent() const {
  return eng_->has_incumbent() ? &eng_->incumbent_ : nullptr;
}
inline const std::vector<double>* NodeContext::incumbent_running_avg() const {
  if (eng_->inc_count_ == 0) return nullptr;
  eng_->inc_avg_buf_.assign(eng_->inc_sum_.begin(), eng_->inc_sum_.end());
  for (double& v : eng_->inc_avg_buf_) v /= static_cast<double>(eng_->inc_count_);
  return &eng_->inc_avg_buf_;
}
inline int NodeContext::depth() const { return (*eng_->node_pool_)[eng_->cur_node_].depth; }
inline long long NodeContext::nodes_processed() const { return eng_->lp_count_; }
inline long long NodeContext::lp_solve_count() const { return eng_->lp_count_; }
inline double NodeContext::node_lower(int col) const { return eng_->node_lower(col); }
inline double NodeContext::node_upper(int col) const { return eng_->node_upper(col); }
inline double NodeContext::col_age(int col) const {
  if (eng_->lp_count_ == 0) return 0.0;
  return static_cast<double>(eng_->lp_count_ - eng_->col_change_[col]) /
         static_cast<double>(eng_->lp_count_);
}
inline double NodeContext::row_age(int row) const {
  if (eng_->lp_count_ == 0) return 0.0;
  return static_cast<double>(eng_->lp_count_ - eng_->row_change_[row]) /
         static_cast<double>(eng_->lp_count_);
}
inline double NodeContext::frac(int col) const {
  const double v = eng_->lp_.x[col];
  return v - std::floor(v);
}
inline double NodeContext::epsilon_sb() const { return eng_->cfg_.epsilon_sb; }
inline double NodeContext::infeasible_child_value() const { return eng_->cfg_.infeasible_child_value; }
inline LpProbe NodeContext::probe_child(int col, int dir) const { return eng_->probe(col, dir); }

inline BnbResult solve_bnb(const MilpProblem& problem, const BnbConfig& config = BnbConfig{},
                           const NodeCallback& on_node = nullptr) {
  BnbEngine engine(problem, config);
  return engine.run(on_node);
}

}  // namespace ucmip
