// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ucmip/autodiff.hpp"
#include "ucmip/graphs.hpp"
#include "ucmip/layers.hpp"
#include "ucmip/power_system.hpp"

namespace ucmip {

// Physics-informed model over the bus graph. One branch reads the load
// spatiotemporal graph, one reads the generator/line spatial graph; a
// Chebyshev layer over the merged graph mixes them before the commitment head.
struct PiGcnConfig {
  int horizon = 0;
  int num_buses = 0;
  int spatial_width = 0;
  int edge_width = 4;
  int embed = 64;
  int temporal_kernel = 3;
  int temporal_channels = 16;
  int cheb_channels = 64;
  int cheb_order_block = 3;
  int cheb_order_map = 9;
  int ecc_channels = 64;
  int edge_kernel_hidden = 16;
  int fc_hidden = 128;
  int branch_width = 64;

  // Two blocks, each with two valid temporal convolutions.
  int time_after_blocks() const { return horizon - 4 * (temporal_kernel - 1); }

  void validate() const {
    for (int v : {horizon, num_buses, spatial_width, edge_width, embed, temporal_kernel, temporal_channels,
                  cheb_channels, cheb_order_block, cheb_order_map, ecc_channels, edge_kernel_hidden, fc_hidden,
                  branch_width})
      if (v < 1) throw ConfigError("model sizes must be positive");
    if (temporal_kernel >= horizon) throw ConfigError("temporal kernel must be narrower than the horizon");
  }
};

struct MbGcnConfig {
  int cons_width = 5;
  int var_width = 19;
  int edge_width = 1;
  int embed = 24;

  void validate() const {
    for (int v : {cons_width, var_width, edge_width, embed})
      if (v < 1) throw ConfigError("model sizes must be positive");
  }
};

inline ParamStore make_pi_gcn_params(const PiGcnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.time_after_blocks() < 1) throw ShapeError("horizon too short for two temporal blocks");
  ParamStore ps;
  ps.add("pi.embed.w", {1, cfg.embed});
  auto add_block = [&](const std::string& prefix, int in_channels) {
    ps.add(prefix + ".t1.w", {cfg.temporal_kernel, in_channels, cfg.temporal_channels});
    ps.add(prefix + ".t1.v", {cfg.temporal_kernel, in_channels, cfg.temporal_channels});
    for (int k = 0; k < cfg.cheb_order_block; ++k)
      ps.add(prefix + ".cheb.w" + std::to_string(k), {cfg.temporal_channels, cfg.cheb_channels});
    ps.add(prefix + ".t2.w", {cfg.temporal_kernel, cfg.cheb_channels, cfg.temporal_channels});
    ps.add(prefix + ".t2.v", {cfg.temporal_kernel, cfg.cheb_channels, cfg.temporal_channels});
  };
  add_block("pi.b1", cfg.embed);
  add_block("pi.b2", cfg.temporal_channels);
  ps.add("pi.st_fc.w1", {cfg.temporal_channels * cfg.time_after_blocks(), cfg.fc_hidden});
  ps.add("pi.st_fc.b1", {cfg.fc_hidden});
  ps.add("pi.st_fc.w2", {cfg.fc_hidden, cfg.branch_width});
  ps.add("pi.st_fc.b2", {cfg.branch_width});
  auto add_ecc = [&](const std::string& prefix, int in_channels) {
    ps.add(prefix + ".w", {in_channels, cfg.ecc_channels});
    ps.add(prefix + ".h.w1", {cfg.edge_width, cfg.edge_kernel_hidden});
    ps.add(prefix + ".h.b1", {cfg.edge_kernel_hidden});
    ps.add(prefix + ".h.w2", {cfg.edge_kernel_hidden, cfg.ecc_channels * in_channels});
    ps.add(prefix + ".h.b2", {cfg.ecc_channels * in_channels});
  };
  add_ecc("pi.ecc1", cfg.spatial_width);
  add_ecc("pi.ecc2", cfg.ecc_channels);
  ps.add("pi.ec_fc.w1", {cfg.ecc_channels, cfg.fc_hidden});
  ps.add("pi.ec_fc.b1", {cfg.fc_hidden});
  ps.add("pi.ec_fc.w2", {cfg.fc_hidden, cfg.branch_width});
  ps.add("pi.ec_fc.b2", {cfg.branch_width});
  for (int k = 0; k < cfg.cheb_order_map; ++k)
    ps.add("pi.map.cheb.w" + std::to_string(k), {2 * cfg.branch_width, cfg.branch_width});
  ps.add("pi.map.fc.w1", {cfg.branch_width, cfg.fc_hidden});
  ps.add("pi.map.fc.b1", {cfg.fc_hidden});
  ps.add("pi.map.fc.w2", {cfg.fc_hidden, cfg.horizon});
  ps.add("pi.map.fc.b2", {cfg.horizon});
  ps.glorot_init(seed);
  return ps;
}

// Bus row of each generator, in generator order; defines the logit row order.
inline std::vector<int> generator_bus_rows(const UcInstance& inst) {
  std::vector<int> rows;
  rows.reserve(inst.system.generators.size());
  for (const auto& g : inst.system.generators) rows.push_back(inst.system.bus_index(g.bus));
  return rows;
}

inline Var pi_gcn_forward(Tape& t, ParamStore& ps, const PiGcnConfig& cfg, const SpatiotemporalGraph& st,
                          const SpatialGraph& sp, const ScaledLaplacian& lap, const std::vector<int>& gen_buses) {
  const int n = cfg.num_buses;
  const int horizon = cfg.horizon;
  if (st.node_features.rows() != n || st.node_features.cols() != horizon)
    throw ShapeError("load graph does not match the model config");
  if (sp.node_features.rows() != n || sp.node_features.cols() != cfg.spatial_width)
    throw ShapeError("generator graph does not match the model config");
  if (lap.l_hat.rows() != n || lap.l_hat.cols() != n) throw ShapeError("graph operator size mismatch");
  if (static_cast<int>(sp.edge_features.rows()) != static_cast<int>(sp.edges.size()))
    throw ShapeError("spatial graph edge tables disagree");
  if (gen_buses.empty()) throw ShapeError("need at least one generator row");
  const int t_tail = cfg.time_after_blocks();
  if (t_tail < 1) throw ShapeError("horizon too short for two temporal blocks");

  // Load branch: scalar load lifted to `embed` channels, two gated blocks,
  // then a per-bus FC over the surviving time steps.
  std::vector<double> load(st.node_features.data(),
                           st.node_features.data() + static_cast<std::size_t>(n) * horizon);
  Var h = t.reshape(t.matmul(t.constant({n * horizon, 1}, std::move(load)), t.param(ps.at("pi.embed.w"))),
                    {n, horizon, cfg.embed});
  auto st_block = [&](Var in, const std::string& prefix) {
    Var a = temporal_gated_conv(t, in, t.param(ps.at(prefix + ".t1.w")), t.param(ps.at(prefix + ".t1.v")));
    std::vector<Var> cw;
    for (int k = 0; k < cfg.cheb_order_block; ++k)
      cw.push_back(t.param(ps.at(prefix + ".cheb.w" + std::to_string(k))));
    Var b = t.relu(chebyshev_conv_st(t, a, lap.l_hat, cw));
    return temporal_gated_conv(t, b, t.param(ps.at(prefix + ".t2.w")), t.param(ps.at(prefix + ".t2.v")));
  };
  h = st_block(h, "pi.b1");
  h = st_block(h, "pi.b2");
  Var st_emb = mlp2(t, t.reshape(h, {n, cfg.temporal_channels * t_tail}), t.param(ps.at("pi.st_fc.w1")),
                    t.param(ps.at("pi.st_fc.b1")), t.param(ps.at("pi.st_fc.w2")), t.param(ps.at("pi.st_fc.b2")));

  // Physics branch: generator and line data through two edge-conditioned
  // convolutions. Each undirected line contributes both directed messages.
  std::vector<int> dst, src, feat;
  dst.reserve(2 * sp.edges.size());
  src.reserve(2 * sp.edges.size());
  feat.reserve(2 * sp.edges.size());
  for (std::size_t m = 0; m < sp.edges.size(); ++m) {
    dst.push_back(sp.edges[m].first);
    src.push_back(sp.edges[m].second);
    feat.push_back(static_cast<int>(m));
    dst.push_back(sp.edges[m].second);
    src.push_back(sp.edges[m].first);
    feat.push_back(static_cast<int>(m));
  }
  Var e_feat = t.constant(sp.edge_features);
  Var g = t.constant(sp.node_features);
  auto ecc = [&](Var in, const std::string& prefix) {
    EdgeKernel hk{t.param(ps.at(prefix + ".h.w1")), t.param(ps.at(prefix + ".h.b1")),
                  t.param(ps.at(prefix + ".h.w2")), t.param(ps.at(prefix + ".h.b2"))};
    return t.relu(edge_conditioned_conv(t, in, e_feat, dst, src, feat, t.param(ps.at(prefix + ".w")), hk));
  };
  g = ecc(g, "pi.ecc1");
  g = ecc(g, "pi.ecc2");
  Var ec_emb = mlp2(t, g, t.param(ps.at("pi.ec_fc.w1")), t.param(ps.at("pi.ec_fc.b1")),
                    t.param(ps.at("pi.ec_fc.w2")), t.param(ps.at("pi.ec_fc.b2")));

  // Variable map over the merged graph, then the commitment head on the
  // generator rows only.
  std::vector<Var> mw;
  for (int k = 0; k < cfg.cheb_order_map; ++k) mw.push_back(t.param(ps.at("pi.map.cheb.w" + std::to_string(k))));
  Var mixed = t.relu(chebyshev_conv(t, t.concat_cols(st_emb, ec_emb), lap.l_hat, mw));
  Var gen_rows = t.gather_rows(mixed, gen_buses);
  return mlp2(t, gen_rows, t.param(ps.at("pi.map.fc.w1")), t.param(ps.at("pi.map.fc.b1")),
              t.param(ps.at("pi.map.fc.w2")), t.param(ps.at("pi.map.fc.b2")));
}

inline ParamStore make_mb_gcn_params(const MbGcnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore ps;
  auto add_mlp = [&](const std::string& prefix, int in, int hidden, int out) {
    ps.add(prefix + ".w1", {in, hidden});
    ps.add(prefix + ".b1", {hidden});
    ps.add(prefix + ".w2", {hidden, out});
    ps.add(prefix + ".b2", {out});
  };
  add_mlp("mb.embed_c", cfg.cons_width, cfg.embed, cfg.embed);
  add_mlp("mb.embed_v", cfg.var_width, cfg.embed, cfg.embed);
  for (const char* dir : {"mb.vc", "mb.cv"}) {
    const std::string d(dir);
    ps.add(d + ".self", {cfg.embed, cfg.embed});
    ps.add(d + ".other", {cfg.embed, cfg.embed});
    ps.add(d + ".edge", {cfg.edge_width, cfg.embed});
  }
  add_mlp("mb.out", cfg.embed, cfg.embed, 1);
  ps.glorot_init(seed);
  return ps;
}

// Returns one logit per requested variable column, in the given order. The
// caller picks the columns: the commitment block for diving, the fractional
// candidate set for branching.
inline Var mb_gcn_forward(Tape& t, ParamStore& ps, const MbGcnConfig& cfg, const BipartiteGraph& g,
                          const std::vector<int>& logit_cols) {
  if (g.cons_features.cols() != cfg.cons_width || g.var_features.cols() != cfg.var_width ||
      g.edge_features.cols() != cfg.edge_width)
    throw ShapeError("bipartite graph does not match the model config");
  if (logit_cols.empty()) throw ShapeError("need at least one logit column");
  std::vector<int> rows, cols;
  rows.reserve(g.incidence.size());
  cols.reserve(g.incidence.size());
  for (const auto& [r, c] : g.incidence) {
    rows.push_back(r);
    cols.push_back(c);
  }
  Var e = t.constant(g.edge_features);
  Var ce = t.relu(mlp2(t, t.constant(g.cons_features), t.param(ps.at("mb.embed_c.w1")),
                       t.param(ps.at("mb.embed_c.b1")), t.param(ps.at("mb.embed_c.w2")),
                       t.param(ps.at("mb.embed_c.b2"))));
  Var ve = t.relu(mlp2(t, t.constant(g.var_features), t.param(ps.at("mb.embed_v.w1")),
                       t.param(ps.at("mb.embed_v.b1")), t.param(ps.at("mb.embed_v.w2")),
                       t.param(ps.at("mb.embed_v.b2"))));
  Var c2 = t.relu(bipartite_conv(t, ce, ve, e, rows, cols, t.param(ps.at("mb.vc.self")),
                                 t.param(ps.at("mb.vc.other")), t.param(ps.at("mb.vc.edge"))));
  Var v2 = t.relu(bipartite_conv(t, ve, c2, e, cols, rows, t.param(ps.at("mb.cv.self")),
                                 t.param(ps.at("mb.cv.other")), t.param(ps.at("mb.cv.edge"))));
  Var head = mlp2(t, t.gather_rows(v2, logit_cols), t.param(ps.at("mb.out.w1")), t.param(ps.at("mb.out.b1")),
                  t.param(ps.at("mb.out.w2")), t.param(ps.at("mb.out.b2")));
  return t.reshape(head, {static_cast<int>(logit_cols.size())});
}

inline nlohmann::json pi_gcn_config_to_json(const PiGcnConfig& c) {
  return nlohmann::json{{"horizon", c.horizon},
                        {"num_buses", c.num_buses},
                        {"spatial_width", c.spatial_width},
                        {"edge_width", c.edge_width},
                        {"embed", c.embed},
                        {"temporal_kernel", c.temporal_kernel},
                        {"temporal_channels", c.temporal_channels},
                        {"cheb_channels", c.cheb_channels},
                        {"cheb_order_block", c.cheb_order_block},
                        {"cheb_order_map", c.cheb_order_map},
                        {"ecc_channels", c.ecc_channels},
                        {"edge_kernel_hidden", c.edge_kernel_hidden},
                        {"fc_hidden", c.fc_hidden},
                        {"branch_width", c.branch_width}};
}

inline PiGcnConfig pi_gcn_config_from_json(const nlohmann::json& j) {
  PiGcnConfig c;
  c.horizon = j.at("horizon").get<int>();
  c.num_buses = j.at("num_buses").get<int>();
  c.spatial_width = j.at("spatial_width").get<int>();
  c.edge_width = j.at("edge_width").get<int>();
  c.embed = j.at("embed").get<int>();
  c.temporal_kernel = j.at("temporal_kernel").get<int>();
  c.temporal_channels = j.at("temporal_channels").get<int>();
  c.cheb_channels = j.at("cheb_channels").get<int>();
  c.cheb_order_block = j.at("cheb_order_block").get<int>();
  c.cheb_order_map = j.at("cheb_order_map").get<int>();
  c.ecc_channels = j.at("ecc_channels").get<int>();
  c.edge_kernel_hidden = j.at("edge_kernel_hidden").get<int>();
  c.fc_hidden = j.at("fc_hidden").get<int>();
  c.branch_width = j.at("branch_width").get<int>();
  return c;
}

inline nlohmann::json mb_gcn_config_to_json(const MbGcnConfig& c) {
  return nlohmann::json{{"cons_width", c.cons_width},
                        {"var_width", c.var_width},
                        {"edge_width", c.edge_width},
                        {"embed", c.embed}};
}

inline MbGcnConfig mb_gcn_config_from_json(const nlohmann::json& j) {
  MbGcnConfig c;
  c.cons_width = j.at("cons_width").get<int>();
  c.var_width = j.at("var_width").get<int>();
  c.edge_width = j.at("edge_width").get<int>();
  c.embed = j.at("embed").get<int>();
  return c;
}

// Checkpoint layout: 4-byte magic, little-endian uint32 header length, JSON
// header (version, model kind, seed, config, tensor table), then every tensor
// row-major as little-endian doubles in header order.
inline constexpr char kCheckpointMagic[4] = {'U', 'C', 'N', 'C'};
inline constexpr int kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string model;
  std::uint64_t seed = 0;
  nlohmann::json config;
  ParamStore params;
};

inline void save_checkpoint(const std::string& path, const std::string& model, const nlohmann::json& config,
                            std::uint64_t seed, const ParamStore& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    tensors.push_back(std::move(entry));
  }
  const nlohmann::json header{{"version", kCheckpointVersion},
                              {"model", model},
                              {"seed", seed},
                              {"config", config},
                              {"tensors", tensors}};
  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : params)
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  if (!out) throw ConfigError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot read checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw DecodeError("not a checkpoint file: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw DecodeError("truncated checkpoint header: " + path);
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in) throw DecodeError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception&) {
    throw DecodeError("checkpoint header is not valid JSON: " + path);
  }
  Checkpoint ck;
  try {
    ck.version = header.at("version").get<int>();
    ck.model = header.at("model").get<std::string>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.config = header.at("config");
    if (ck.version != kCheckpointVersion) throw DecodeError("unsupported checkpoint version");
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      ParamTensor& t = ck.params.add(name, shape);
      in.read(reinterpret_cast<char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
      if (!in) throw DecodeError("truncated checkpoint payload: " + path);
    }
  } catch (const nlohmann::json::exception&) {
    throw DecodeError("malformed checkpoint header: " + path);
  }
  return ck;
}

}  // namespace ucmip
