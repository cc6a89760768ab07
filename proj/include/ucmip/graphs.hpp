// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"
#include "ucmip/milp.hpp"
#include "ucmip/power_system.hpp"
#include "ucmip/simplex.hpp"

namespace ucmip {

// Loads over the horizon on the bus topology: one scalar channel per node
// and period.
struct SpatiotemporalGraph {
  Mat node_features;  // num_buses x T
  Mat adjacency;      // num_buses x num_buses, binary, zero diagonal
};

// Generator data on nodes, line data on edges. Nodes without a generator
// carry an all-zero feature row.
struct SpatialGraph {
  Mat node_features;                        // num_buses x feature_width
  Mat edge_features;                        // merged_edges x 4
  Mat adjacency;                            // num_buses x num_buses
  std::vector<std::pair<int, int>> edges;   // bus index pairs, one per merged edge
  std::vector<char> has_generator;          // per bus

  int feature_width() const { return node_features.cols(); }
};

// One constraint node per row, one variable node per column, an edge per
// structural nonzero.
struct BipartiteGraph {
  Mat cons_features;                           // m x 5
  Mat var_features;                            // n x 19
  Mat edge_features;                           // nnz x 1
  std::vector<std::pair<int, int>> incidence;  // (row, col) per edge
};

struct ScaledLaplacian {
  Mat l_hat;
  double lambda_max = 0.0;
};

namespace detail {

// Binary bus adjacency; parallel lines collapse onto one edge.
inline Mat bus_adjacency(const SystemSpec& sys) {
  Mat adj(sys.num_buses(), sys.num_buses());
  for (const auto& l : sys.lines) {
    const int a = sys.bus_index(l.from_bus);
    const int b = sys.bus_index(l.to_bus);
    adj(a, b) = 1.0;
    adj(b, a) = 1.0;
  }
  return adj;
}

}  // namespace detail

inline SpatiotemporalGraph build_spatiotemporal_graph(const UcInstance& inst) {
  inst.validate();
  SpatiotemporalGraph g;
  g.node_features = inst.scenario.d;
  g.adjacency = detail::bus_adjacency(inst.system);
  return g;
}

// Node rows are [pb (padded), cb (padded), ru, rd, su, sd, v0, p0]; the
// piecewise vectors are right-padded with their last entry to a fixed width
// of max_segments+1 so every system maps to the same feature size.
inline SpatialGraph build_spatial_graph(const UcInstance& inst, int max_segments = 4) {
  inst.validate();
  const SystemSpec& sys = inst.system;
  const int n = sys.num_buses();
  const int pw_len = max_segments + 1;
  const int width = 2 * pw_len + 6;

  SpatialGraph g;
  g.adjacency = detail::bus_adjacency(sys);
  g.node_features = Mat(n, width);
  g.has_generator.assign(n, 0);
  for (const auto& gen : sys.generators) {
    if (gen.nl > max_segments) {
      throw ConfigError("build_spatial_graph: generator has more segments than the embedding");
    }
    const int bi = sys.bus_index(gen.bus);
    if (g.has_generator[bi]) {
      throw ConfigError("build_spatial_graph: two generators on one bus");
    }
    g.has_generator[bi] = 1;
    double* row = g.node_features.row(bi);
    for (int k = 0; k < pw_len; ++k) {
      row[k] = gen.pb[std::min<std::size_t>(k, gen.pb.size() - 1)];
      row[pw_len + k] = gen.cb[std::min<std::size_t>(k, gen.cb.size() - 1)];
    }
    row[2 * pw_len + 0] = gen.ru;
    row[2 * pw_len + 1] = gen.rd;
    row[2 * pw_len + 2] = gen.su;
    row[2 * pw_len + 3] = gen.sd;
    row[2 * pw_len + 4] = gen.v0;
    row[2 * pw_len + 5] = gen.p0;
  }

  // Merged edges in first-appearance order, capacities summed over parallels.
  std::vector<std::vector<int>> slot(n, std::vector<int>(n, -1));
  std::vector<std::array<double, 4>> feats;
  for (const auto& l : sys.lines) {
    const int a = sys.bus_index(l.from_bus);
    const int b = sys.bus_index(l.to_bus);
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (slot[lo][hi] < 0) {
      slot[lo][hi] = static_cast<int>(g.edges.size());
      g.edges.push_back({a, b});
      feats.push_back({l.f_pos, l.f_neg, l.reactance, l.susceptance});
    } else {
      feats[slot[lo][hi]][0] += l.f_pos;
      feats[slot[lo][hi]][1] += l.f_neg;
    }
  }
  g.edge_features = Mat(static_cast<int>(feats.size()), 4);
  for (std::size_t e = 0; e < feats.size(); ++e) {
    for (int k = 0; k < 4; ++k) g.edge_features(static_cast<int>(e), k) = feats[e][k];
  }
  return g;
}

// Appendix-style constraint/variable/edge features. Ages come normalized by
// the caller (fraction of LP solves since the basis entry changed); empty
// vectors mean age zero everywhere. Incumbent columns take the latest and the
// running-average solution directly; null pointers mean no incumbent yet.
inline BipartiteGraph build_bipartite_graph(const MilpProblem& p, const LpSolution& lp,
                                            const double* last_incumbent,
                                            const double* avg_incumbent,
                                            const std::vector<double>& row_age = {},
                                            const std::vector<double>& col_age = {}) {
  if (lp.status != LpStatus::Optimal) {
    throw ConfigError("build_bipartite_graph: LP solution must be Optimal");
  }
  p.validate();
  const int m = p.num_rows();
  const int n = p.num_vars();
  if (!row_age.empty() && static_cast<int>(row_age.size()) != m) {
    throw ShapeError("build_bipartite_graph: row_age length");
  }
  if (!col_age.empty() && static_cast<int>(col_age.size()) != n) {
    throw ShapeError("build_bipartite_graph: col_age length");
  }
  const SparseMatrix& a = *p.A;

  double c_norm = 0.0;
  for (double v : p.c) c_norm += v * v;
  c_norm = std::sqrt(c_norm);
  const double c_div = std::max(c_norm, 1.0);

  BipartiteGraph g;
  g.cons_features = Mat(m, 5);
  for (int i = 0; i < m; ++i) {
    const double norm = a.row_norm2(i);
    double dot_c = 0.0;
    for (int k = a.row_begin(i); k < a.row_end(i); ++k) {
      dot_c += a.val_at(k) * p.c[a.col_at(k)];
    }
    const double denom = norm * c_norm;
    g.cons_features(i, 0) = denom > 1e-30 ? dot_c / denom : 0.0;
    g.cons_features(i, 1) = p.b[i] / norm;
    g.cons_features(i, 2) = std::abs(a.row_dot(i, lp.x) - p.b[i]) <= 1e-6 ? 1.0 : 0.0;
    g.cons_features(i, 3) = lp.duals[i] / std::max(std::abs(p.b[i]), 1.0);
    g.cons_features(i, 4) = row_age.empty() ? 0.0 : row_age[i];
  }

  g.var_features = Mat(n, 19);
  for (int j = 0; j < n; ++j) {
    double* f = g.var_features.row(j);
    const bool integral = p.is_integer[j] != 0;
    const bool binary = integral && p.l[j] >= -1e-9 && p.u[j] <= 1.0 + 1e-9;
    f[0] = binary ? 1.0 : 0.0;
    f[1] = integral && !binary ? 1.0 : 0.0;
    f[2] = 0.0;  // implied integer: not produced by this toolkit
    f[3] = integral ? 0.0 : 1.0;
    f[4] = p.c[j] / c_div;
    const bool has_lb = p.l[j] > -kInf;
    const bool has_ub = p.u[j] < kInf;
    f[5] = has_lb ? 1.0 : 0.0;
    f[6] = has_ub ? 1.0 : 0.0;
    const double x = lp.x[j];
    f[7] = has_lb && std::abs(x - p.l[j]) <= 1e-6 ? 1.0 : 0.0;
    f[8] = has_ub && std::abs(x - p.u[j]) <= 1e-6 ? 1.0 : 0.0;
    f[9] = integral ? std::abs(x - std::round(x)) : 0.0;
    f[10] = lp.basis[j] == BasisStatus::Lower ? 1.0 : 0.0;
    f[11] = lp.basis[j] == BasisStatus::Basic ? 1.0 : 0.0;
    f[12] = lp.basis[j] == BasisStatus::Upper ? 1.0 : 0.0;
    f[13] = lp.basis[j] == BasisStatus::Zero ? 1.0 : 0.0;
    f[14] = lp.reduced_costs[j] / c_div;
    f[15] = col_age.empty() ? 0.0 : col_age[j];
    f[16] = x;
    if (last_incumbent != nullptr && avg_incumbent != nullptr) {
      f[17] = last_incumbent[j];
      f[18] = avg_incumbent[j];
    }
  }

  std::vector<int> rows, cols;
  std::vector<double> vals;
  a.to_triplets(rows, cols, vals);
  g.edge_features = Mat(static_cast<int>(vals.size()), 1);
  g.incidence.reserve(vals.size());
  for (std::size_t k = 0; k < vals.size(); ++k) {
    const double scale = a.row_max_abs(rows[k]);
    g.edge_features(static_cast<int>(k), 0) = vals[k] / scale;
    g.incidence.push_back({rows[k], cols[k]});
  }
  return g;
}

// Convenience form that averages an explicit incumbent list.
inline BipartiteGraph build_bipartite_graph(const MilpProblem& p, const LpSolution& lp,
                                            const std::vector<std::vector<double>>& incumbents,
                                            const std::vector<double>& row_age = {},
                                            const std::vector<double>& col_age = {}) {
  if (incumbents.empty()) {
    return build_bipartite_graph(p, lp, nullptr, nullptr, row_age, col_age);
  }
  std::vector<double> avg(incumbents.back().size(), 0.0);
  for (const auto& inc : incumbents) {
    if (inc.size() != avg.size()) throw ShapeError("build_bipartite_graph: incumbent length");
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += inc[j];
  }
  for (double& v : avg) v /= static_cast<double>(incumbents.size());
  return build_bipartite_graph(p, lp, incumbents.back().data(), avg.data(), row_age, col_age);
}

// L = I - D^{-1/2} A D^{-1/2}, rescaled so the spectrum lands in [-1, 1].
inline ScaledLaplacian scaled_laplacian(const Mat& adjacency) {
  const int n = adjacency.rows();
  if (n == 0 || adjacency.cols() != n) throw ShapeError("scaled_laplacian: not square");
  std::vector<double> inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw ConfigError("scaled_laplacian: self loop");
    double deg = 0.0;
    for (int j = 0; j < n; ++j) {
      if (std::abs(adjacency(i, j) - adjacency(j, i)) > 1e-12) {
        throw ConfigError("scaled_laplacian: adjacency not symmetric");
      }
      deg += adjacency(i, j);
    }
    if (deg <= 0.0) {
      throw NumericalError("scaled_laplacian: isolated node " + std::to_string(i));
    }
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  Mat lap(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double norm_a = adjacency(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
      lap(i, j) = (i == j ? 1.0 : 0.0) - norm_a;
    }
  }
  ScaledLaplacian out;
  out.lambda_max = power_iteration_max_eig(lap, 1e-9);
  out.l_hat = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.l_hat(i, j) = 2.0 * lap(i, j) / out.lambda_max - (i == j ? 1.0 : 0.0);
    }
  }
  return out;
}

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw ConfigError("mat json: ragged rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline nlohmann::json spatiotemporal_to_json(const SpatiotemporalGraph& g) {
  return {{"node_features", mat_to_json(g.node_features)},
          {"adjacency", mat_to_json(g.adjacency)}};
}

inline SpatiotemporalGraph spatiotemporal_from_json(const nlohmann::json& j) {
  SpatiotemporalGraph g;
  g.node_features = mat_from_json(j.at("node_features"));
  g.adjacency = mat_from_json(j.at("adjacency"));
  return g;
}

inline nlohmann::json spatial_to_json(const SpatialGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  return {{"node_features", mat_to_json(g.node_features)},
          {"edge_features", mat_to_json(g.edge_features)},
          {"adjacency", mat_to_json(g.adjacency)},
          {"edges", std::move(edges)},
          {"has_generator", std::vector<int>(g.has_generator.begin(), g.has_generator.end())}};
}

inline SpatialGraph spatial_from_json(const nlohmann::json& j) {
  SpatialGraph g;
  g.node_features = mat_from_json(j.at("node_features"));
  g.edge_features = mat_from_json(j.at("edge_features"));
  g.adjacency = mat_from_json(j.at("adjacency"));
  for (const auto& e : j.at("edges")) g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
  for (int v : j.at("has_generator").get<std::vector<int>>()) {
    g.has_generator.push_back(static_cast<char>(v));
  }
  return g;
}

inline nlohmann::json bipartite_to_json(const BipartiteGraph& g) {
  nlohmann::json inc = nlohmann::json::array();
  for (const auto& [r, c] : g.incidence) inc.push_back({r, c});
  return {{"cons_features", mat_to_json(g.cons_features)},
          {"var_features", mat_to_json(g.var_features)},
          {"edge_features", mat_to_json(g.edge_features)},
          {"incidence", std::move(inc)}};
}

inline BipartiteGraph bipartite_from_json(const nlohmann::json& j) {
  BipartiteGraph g;
  g.cons_features = mat_from_json(j.at("cons_features"));
  g.var_features = mat_from_json(j.at("var_features"));
  g.edge_features = mat_from_json(j.at("edge_features"));
  for (const auto& e : j.at("incidence")) g.incidence.push_back({e[0].get<int>(), e[1].get<int>()});
  return g;
}

}  // namespace ucmip
