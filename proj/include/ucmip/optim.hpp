// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ucmip/autodiff.hpp"
#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"

namespace ucmip {

// Probability the Bernoulli head assigns to outcome x under logit y. Evaluated
// through exp of the log-probability so saturated logits behave.
inline double log_diving_prob(double logit, int x) {
  if (x != 0 && x != 1) throw ConfigError("diving outcome must be 0 or 1");
  return -Tape::softplus(x == 1 ? -logit : logit);
}

inline double diving_prob(double logit, int x) { return std::exp(log_diving_prob(logit, x)); }

// Min-max bounds of the training-set objectives; fixes the scale of the
// diving-loss weights so validation reuses the training normalization.
struct DivingNormalizer {
  double c_min = 0.0;
  double c_max = 0.0;
};

inline DivingNormalizer make_diving_normalizer(const std::vector<double>& objectives) {
  if (objectives.empty()) throw ConfigError("normalizer needs at least one objective");
  DivingNormalizer n{objectives[0], objectives[0]};
  for (double c : objectives) {
    n.c_min = std::min(n.c_min, c);
    n.c_max = std::max(n.c_max, c);
  }
  return n;
}

// w_i = exp(-beta * normalized objective). A degenerate normalizer (all
// objectives equal) weighs every instance at 1.
inline std::vector<double> diving_weights(const std::vector<double>& objectives, double beta,
                                          const DivingNormalizer& norm) {
  const double span = norm.c_max - norm.c_min;
  std::vector<double> w(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const double scaled = span > 0.0 ? (objectives[i] - norm.c_min) / span : 0.0;
    w[i] = std::exp(-beta * scaled);
  }
  return w;
}

// Weighted mean over instances of the summed per-dimension Bernoulli
// negative log likelihoods.
inline Var diving_loss(Tape& t, const std::vector<Var>& logits, const std::vector<std::vector<double>>& targets,
                       const std::vector<double>& weights) {
  if (logits.empty() || logits.size() != targets.size() || logits.size() != weights.size())
    throw ConfigError("diving loss needs aligned logits, targets and weights");
  Var total = t.scale(t.bernoulli_nll(logits[0], targets[0]), weights[0]);
  for (std::size_t i = 1; i < logits.size(); ++i)
    total = t.add(total, t.scale(t.bernoulli_nll(logits[i], targets[i]), weights[i]));
  return t.scale(total, 1.0 / static_cast<double>(logits.size()));
}

// Cross entropy of the candidate softmax against the strong-branching choice.
inline Var branching_loss(Tape& t, Var logits, int chosen) { return t.softmax_ce(logits, chosen); }

// Acc(d) = share of instances where round-half-up(p) hits the label.
inline std::vector<double> accuracy_per_dim(const Mat& probs, const Mat& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    throw ShapeError("accuracy needs matching prediction and target shapes");
  if (probs.rows() == 0) throw ShapeError("accuracy needs at least one instance");
  std::vector<double> acc(static_cast<std::size_t>(probs.cols()), 0.0);
  for (int i = 0; i < probs.rows(); ++i)
    for (int j = 0; j < probs.cols(); ++j) {
      if (probs(i, j) < 0.0 || probs(i, j) > 1.0) throw ConfigError("probabilities must lie in [0,1]");
      const double predicted = std::floor(probs(i, j) + 0.5);
      if (predicted == targets(i, j)) acc[static_cast<std::size_t>(j)] += 1.0;
    }
  for (double& a : acc) a /= probs.rows();
  return acc;
}

// Shared training knobs. An epoch is `epoch_size` single-sample steps; the
// learning rate halves after `patience` epochs without validation improvement
// and training stops after `early_stop` such epochs (0: run exactly one).
struct TrainConfig {
  double learning_rate = 0.005;
  int epochs = 1000;
  int batch_size = 1;
  int epoch_size = 10;
  int patience = 50;
  int early_stop = 100;
  double beta = 1.0;  // best-solution weight scale in the diving loss
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (epochs < 1 || epochs > 1000) throw ConfigError("TrainConfig: epochs outside [1,1000]");
    if (batch_size != 1) throw ConfigError("TrainConfig: only batch_size 1 is supported");
    if (epoch_size < 1) throw ConfigError("TrainConfig: epoch_size must be positive");
    if (patience < 1) throw ConfigError("TrainConfig: patience must be positive");
    if (early_stop < 0) throw ConfigError("TrainConfig: early_stop must be non-negative");
    if (beta < 0.0) throw ConfigError("TrainConfig: beta must be non-negative");
  }
};

// Adam with bias correction. State is keyed by parameter name and created on
// first use, so a fresh state resumes cleanly from any checkpoint.
struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::int64_t step = 0;
};

inline void adam_step(ParamStore& params, AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.value.size(), 0.0);
    if (v.empty()) v.assign(p.value.size(), 0.0);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::int64_t worst_index = -1;
  int coords_checked = 0;
};

// Central-difference audit of the gradients already stored in `params`.
// Samples coordinates per tensor (all of them for small tensors), re-runs the
// forward closure at +-step, and reports the worst relative mismatch. The
// absolute floor keeps roundoff noise on near-zero coordinates from failing
// the check while a scaled-up gradient still trips it.
inline GradCheckReport finite_diff_check(ParamStore& params, const std::function<double()>& loss,
                                         double step = 1e-6, double tol_rel = 1e-4, int coords_per_tensor = 50,
                                         std::uint64_t seed = 0x51ED5EEDULL, double abs_floor = 1e-6) {
  if (step <= 0.0) throw ConfigError("finite difference step must be positive");
  SplitMix64 rng(seed);
  GradCheckReport report;
  for (auto& [name, p] : params) {
    const std::int64_t n = p.numel();
    std::vector<std::int64_t> coords;
    if (n <= coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < coords_per_tensor; ++i)
        coords.push_back(static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n))));
    }
    for (std::int64_t c : coords) {
      const std::size_t i = static_cast<std::size_t>(c);
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = loss();
      p.value[i] = saved - step;
      const double down = loss();
      p.value[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = p.grad[i];
      const double scale = std::max({std::abs(fd), std::abs(an), abs_floor});
      const double rel = std::abs(fd - an) / scale;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = name;
        report.worst_index = c;
      }
    }
  }
  report.pass = report.max_rel_err <= tol_rel;
  return report;
}

}  // namespace ucmip
