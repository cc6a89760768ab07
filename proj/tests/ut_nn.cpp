// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ucmip/graphs.hpp"
#include "ucmip/models.hpp"
#include "ucmip/optim.hpp"
#include "ucmip/simplex.hpp"
#include "ucmip/uc_model.hpp"
#include "uc_fixtures.hpp"

using namespace ucmip;

namespace {

std::vector<double> random_values(SplitMix64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Sum of squares keeps every output coordinate in the loss with a distinct
// weight, so index mix-ups cannot cancel out.
double sum_sq(Tape& t, Var v) {
  return t.scalar(t.sum(t.mul(v, v)));
}

Var sum_sq_var(Tape& t, Var v) { return t.sum(t.mul(v, v)); }

// Triangle system with a 12-step horizon, long enough for both temporal
// blocks of the physics-informed model.
UcInstance triangle_instance_t12() {
  const std::vector<double> shape = {0.5, 0.45, 0.42, 0.45, 0.55, 0.7, 0.85, 0.95, 1.0, 0.9, 0.75, 0.6};
  const auto scens = generate_load_scenarios(3, shape, 1, 95.0, 0.04, 0.05, 1234);
  return make_instance(ucfix::triangle_system(), scens[0]);
}

PiGcnConfig pi_config_for(const UcInstance& inst, const SpatialGraph& sp) {
  PiGcnConfig cfg;
  cfg.horizon = inst.horizon;
  cfg.num_buses = inst.system.num_buses();
  cfg.spatial_width = sp.feature_width();
  return cfg;
}

Mat path4_adjacency() {
  Mat a(4, 4);
  a(0, 1) = a(1, 0) = 1.0;
  a(1, 2) = a(2, 1) = 1.0;
  a(2, 3) = a(3, 2) = 1.0;
  return a;
}

}  // namespace

TEST_CASE("gated temporal convolution follows the valid-window contract") {
  Tape t;
  Var x0 = t.constant({2, 4, 3}, std::vector<double>(24, 0.0));
  Var w0 = t.constant({2, 3, 2}, std::vector<double>(12, 0.0));
  Var out0 = temporal_gated_conv(t, x0, w0, w0);
  REQUIRE(t.shape(out0) == std::vector<int>{2, 3, 2});
  for (double v : t.values(out0)) REQUIRE(v == 0.0);

  // Width-1 identity kernel with a zero gate branch halves the input.
  SplitMix64 rng(5);
  const std::vector<double> xv = random_values(rng, 2 * 3 * 2, -2.0, 2.0);
  Var x1 = t.constant({2, 3, 2}, xv);
  std::vector<double> ident(4, 0.0);
  ident[0] = 1.0;  // (c=0,o=0)
  ident[3] = 1.0;  // (c=1,o=1)
  Var w1 = t.constant({1, 2, 2}, ident);
  Var v1 = t.constant({1, 2, 2}, std::vector<double>(4, 0.0));
  Var out1 = temporal_gated_conv(t, x1, w1, v1);
  const auto& o1 = t.values(out1);
  for (std::size_t i = 0; i < o1.size(); ++i) REQUIRE(o1[i] == Catch::Approx(0.5 * xv[i]).margin(1e-15));

  Var short_x = t.constant({1, 2, 1}, {1.0, 2.0});
  Var wide_w = t.constant({3, 1, 1}, {1.0, 1.0, 1.0});
  REQUIRE_THROWS_AS(temporal_gated_conv(t, short_x, wide_w, wide_w), ShapeError);
}

TEST_CASE("gated temporal convolution matches a direct reference") {
  const int n = 2, time = 5, c_in = 2, c_out = 3, k = 3;
  SplitMix64 rng(17);
  const auto xv = random_values(rng, static_cast<std::size_t>(n) * time * c_in, -1.0, 1.0);
  const auto wv = random_values(rng, static_cast<std::size_t>(k) * c_in * c_out, -1.0, 1.0);
  const auto vv = random_values(rng, static_cast<std::size_t>(k) * c_in * c_out, -1.0, 1.0);

  Tape t;
  Var out = temporal_gated_conv(t, t.constant({n, time, c_in}, xv), t.constant({k, c_in, c_out}, wv),
                                t.constant({k, c_in, c_out}, vv));
  const int t_out = time - k + 1;
  for (int i = 0; i < n; ++i)
    for (int tau = 0; tau < t_out; ++tau)
      for (int o = 0; o < c_out; ++o) {
        double lhs = 0.0, gate = 0.0;
        for (int kk = 0; kk < k; ++kk)
          for (int c = 0; c < c_in; ++c) {
            const double xin = xv[(static_cast<std::size_t>(i) * time + tau + kk) * c_in + c];
            lhs += xin * wv[(static_cast<std::size_t>(kk) * c_in + c) * c_out + o];
            gate += xin * vv[(static_cast<std::size_t>(kk) * c_in + c) * c_out + o];
          }
        const double want = lhs * Tape::stable_sigmoid(gate);
        REQUIRE(t.values(out)[(static_cast<std::size_t>(i) * t_out + tau) * c_out + o] ==
                Catch::Approx(want).margin(1e-12));
      }
}

TEST_CASE("gated temporal convolution gradient matches finite differences") {
  SplitMix64 rng(23);
  ParamStore ps;
  ParamTensor& x = ps.add("x", {2, 5, 2});
  ParamTensor& w = ps.add("w", {2, 2, 3});
  ParamTensor& v = ps.add("v", {2, 2, 3});
  x.value = random_values(rng, x.value.size(), -1.0, 1.0);
  w.value = random_values(rng, w.value.size(), -1.0, 1.0);
  v.value = random_values(rng, v.value.size(), -1.0, 1.0);

  auto loss = [&]() {
    Tape t;
    return sum_sq(t, temporal_gated_conv(t, t.param(ps.at("x")), t.param(ps.at("w")), t.param(ps.at("v"))));
  };
  {
    Tape t;
    Var l = sum_sq_var(t, temporal_gated_conv(t, t.param(x), t.param(w), t.param(v)));
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-6, 1e-4);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("chebyshev convolution keeps its recursion base cases") {
  SplitMix64 rng(31);
  const auto xv = random_values(rng, 4 * 3, -1.0, 1.0);
  const auto wv = random_values(rng, 3 * 2, -1.0, 1.0);
  const ScaledLaplacian lap = scaled_laplacian(path4_adjacency());

  // Order 1 is a plain linear map, bit for bit.
  Tape t;
  Var x = t.constant({4, 3}, xv);
  Var w = t.constant({3, 2}, wv);
  Var out = chebyshev_conv(t, x, lap.l_hat, {w});
  Var direct = t.matmul(x, w);
  for (std::size_t i = 0; i < t.values(out).size(); ++i) REQUIRE(t.values(out)[i] == t.values(direct)[i]);

  // Order 2 reaches one hop: an indicator on node 0 leaves nodes 2,3 untouched.
  Var e0 = t.constant({4, 1}, {1.0, 0.0, 0.0, 0.0});
  Var w1 = t.constant({1, 1}, {0.7});
  Var w2 = t.constant({1, 1}, {-0.3});
  Var local = chebyshev_conv(t, e0, lap.l_hat, {w1, w2});
  const auto& lv = t.values(local);
  REQUIRE(lv[0] != 0.0);
  REQUIRE(lv[1] != 0.0);
  REQUIRE(lv[2] == 0.0);
  REQUIRE(lv[3] == 0.0);
}

TEST_CASE("chebyshev convolution gradient matches finite differences") {
  SplitMix64 rng(37);
  const ScaledLaplacian lap = scaled_laplacian(path4_adjacency());
  ParamStore ps;
  ParamTensor& x = ps.add("x", {4, 3});
  x.value = random_values(rng, x.value.size(), -1.0, 1.0);
  for (int k = 0; k < 3; ++k) {
    ParamTensor& w = ps.add("w" + std::to_string(k), {3, 2});
    w.value = random_values(rng, w.value.size(), -1.0, 1.0);
  }
  auto forward = [&](Tape& t) {
    std::vector<Var> w;
    for (int k = 0; k < 3; ++k) w.push_back(t.param(ps.at("w" + std::to_string(k))));
    return chebyshev_conv(t, t.param(ps.at("x")), lap.l_hat, w);
  };
  auto loss = [&]() {
    Tape t;
    return sum_sq(t, forward(t));
  };
  {
    Tape t;
    Var l = sum_sq_var(t, forward(t));
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-6, 1e-4);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("spatiotemporal chebyshev equals the per-slice convolution") {
  SplitMix64 rng(41);
  Mat triangle(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) triangle(i, j) = i == j ? 0.0 : 1.0;
  const ScaledLaplacian lap = scaled_laplacian(triangle);
  const int n = 3, time = 2, c_in = 2, c_out = 2;
  const auto xv = random_values(rng, static_cast<std::size_t>(n) * time * c_in, -1.0, 1.0);
  std::vector<std::vector<double>> wv;
  for (int k = 0; k < 3; ++k) wv.push_back(random_values(rng, c_in * c_out, -1.0, 1.0));

  Tape t;
  std::vector<Var> w;
  for (int k = 0; k < 3; ++k) w.push_back(t.constant({c_in, c_out}, wv[k]));
  Var st = chebyshev_conv_st(t, t.constant({n, time, c_in}, xv), lap.l_hat, w);

  for (int slice = 0; slice < time; ++slice) {
    std::vector<double> sx(static_cast<std::size_t>(n) * c_in);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < c_in; ++c) sx[static_cast<std::size_t>(i) * c_in + c] = xv[(static_cast<std::size_t>(i) * time + slice) * c_in + c];
    Var flat = chebyshev_conv(t, t.constant({n, c_in}, sx), lap.l_hat, w);
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < c_out; ++o)
        REQUIRE(t.values(st)[(static_cast<std::size_t>(i) * time + slice) * c_out + o] ==
                Catch::Approx(t.values(flat)[static_cast<std::size_t>(i) * c_out + o]).margin(1e-12));
  }
}

TEST_CASE("edge conditioned convolution matches its definition") {
  SplitMix64 rng(43);
  const int c_in = 2, c_out = 2, f_e = 3, hidden = 4;
  const auto gv = random_values(rng, 3 * c_in, -1.0, 1.0);
  const auto ev = random_values(rng, f_e, -1.0, 1.0);
  const auto wv = random_values(rng, c_in * c_out, -1.0, 1.0);
  const auto w1 = random_values(rng, f_e * hidden, -1.0, 1.0);
  const auto b1 = random_values(rng, hidden, -0.5, 0.5);
  const auto w2 = random_values(rng, hidden * c_out * c_in, -1.0, 1.0);
  const auto b2 = random_values(rng, c_out * c_in, -0.5, 0.5);

  Tape t;
  Var g = t.constant({3, c_in}, gv);
  Var e = t.constant({1, f_e}, ev);
  Var w = t.constant({c_in, c_out}, wv);
  EdgeKernel hk{t.constant({f_e, hidden}, w1), t.constant({hidden}, b1),
                t.constant({hidden, c_out * c_in}, w2), t.constant({c_out * c_in}, b2)};
  // One undirected edge between nodes 0 and 1; node 2 is isolated.
  Var out = edge_conditioned_conv(t, g, e, {0, 1}, {1, 0}, {0, 0}, w, hk);

  std::vector<double> kernel(c_out * c_in, 0.0);
  for (int o = 0; o < c_out * c_in; ++o) {
    double acc = b2[o];
    for (int h = 0; h < hidden; ++h) {
      double pre = b1[h];
      for (int f = 0; f < f_e; ++f) pre += ev[f] * w1[static_cast<std::size_t>(f) * hidden + h];
      acc += std::max(pre, 0.0) * w2[static_cast<std::size_t>(h) * c_out * c_in + o];
    }
    kernel[o] = acc;
  }
  for (int i = 0; i < 3; ++i)
    for (int o = 0; o < c_out; ++o) {
      double want = 0.0;
      for (int c = 0; c < c_in; ++c) want += gv[static_cast<std::size_t>(i) * c_in + c] * wv[static_cast<std::size_t>(c) * c_out + o];
      if (i < 2) {
        const int j = 1 - i;
        for (int c = 0; c < c_in; ++c)
          want += kernel[static_cast<std::size_t>(o) * c_in + c] * gv[static_cast<std::size_t>(j) * c_in + c];
      }
      REQUIRE(t.values(out)[static_cast<std::size_t>(i) * c_out + o] == Catch::Approx(want).margin(1e-12));
    }

  // A zero kernel network degrades to the shared linear map on every node.
  EdgeKernel zero{t.constant({f_e, hidden}, std::vector<double>(f_e * hidden, 0.0)),
                  t.constant({hidden}, std::vector<double>(hidden, 0.0)),
                  t.constant({hidden, c_out * c_in}, std::vector<double>(hidden * c_out * c_in, 0.0)),
                  t.constant({c_out * c_in}, std::vector<double>(c_out * c_in, 0.0))};
  Var plain = edge_conditioned_conv(t, g, e, {0, 1}, {1, 0}, {0, 0}, w, zero);
  Var ref = t.matmul(g, w);
  for (std::size_t i = 0; i < t.values(plain).size(); ++i)
    REQUIRE(t.values(plain)[i] == Catch::Approx(t.values(ref)[i]).margin(1e-15));
}

TEST_CASE("edge conditioned convolution gradient matches finite differences") {
  SplitMix64 rng(47);
  ParamStore ps;
  ps.add("g", {3, 2}).value = random_values(rng, 6, -1.0, 1.0);
  ps.add("e", {2, 3}).value = random_values(rng, 6, -1.0, 1.0);
  ps.add("w", {2, 2}).value = random_values(rng, 4, -1.0, 1.0);
  ps.add("h.w1", {3, 4}).value = random_values(rng, 12, -1.0, 1.0);
  ps.add("h.b1", {4}).value = random_values(rng, 4, -0.5, 0.5);
  ps.add("h.w2", {4, 4}).value = random_values(rng, 16, -1.0, 1.0);
  ps.add("h.b2", {4}).value = random_values(rng, 4, -0.5, 0.5);

  // Two undirected edges: 0-1 (feature row 0) and 1-2 (feature row 1).
  const std::vector<int> dst = {0, 1, 1, 2};
  const std::vector<int> src = {1, 0, 2, 1};
  const std::vector<int> feat = {0, 0, 1, 1};
  auto forward = [&](Tape& t) {
    EdgeKernel hk{t.param(ps.at("h.w1")), t.param(ps.at("h.b1")), t.param(ps.at("h.w2")), t.param(ps.at("h.b2"))};
    return edge_conditioned_conv(t, t.param(ps.at("g")), t.param(ps.at("e")), dst, src, feat,
                                 t.param(ps.at("w")), hk);
  };
  auto loss = [&]() {
    Tape t;
    return sum_sq(t, forward(t));
  };
  {
    Tape t;
    Var l = sum_sq_var(t, forward(t));
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-6, 1e-4);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("bipartite half convolution aggregates messages") {
  SplitMix64 rng(53);
  const auto xs = random_values(rng, 2 * 3, -1.0, 1.0);
  const auto wc = random_values(rng, 3 * 2, -1.0, 1.0);
  const auto wv = random_values(rng, 3 * 2, -1.0, 1.0);
  const auto we = random_values(rng, 1 * 2, -1.0, 1.0);

  Tape t;
  Var self = t.constant({2, 3}, xs);
  Var wc_v = t.constant({3, 2}, wc);
  Var wv_v = t.constant({3, 2}, wv);
  Var we_v = t.constant({1, 2}, we);

  // Both edges land on receiver 0; receiver 1 keeps only its self term.
  std::vector<double> other = random_values(rng, 2 * 3, -1.0, 1.0);
  Var xo = t.constant({2, 3}, other);
  Var e = t.constant({2, 1}, random_values(rng, 2, -1.0, 1.0));
  Var out = bipartite_conv(t, self, xo, e, {0, 0}, {0, 1}, wc_v, wv_v, we_v);
  for (int o = 0; o < 2; ++o) {
    double bare = 0.0;
    for (int c = 0; c < 3; ++c) bare += xs[3 + c] * wc[static_cast<std::size_t>(c) * 2 + o];
    REQUIRE(t.values(out)[2 + o] == Catch::Approx(bare).margin(1e-12));
  }

  // A single edge carrying zero feature from a zero neighbor adds nothing.
  Var xo_zero = t.constant({1, 3}, std::vector<double>(3, 0.0));
  Var e_zero = t.constant({1, 1}, {0.0});
  Var out2 = bipartite_conv(t, self, xo_zero, e_zero, {0}, {0}, wc_v, wv_v, we_v);
  Var bare2 = t.matmul(self, wc_v);
  for (std::size_t i = 0; i < t.values(out2).size(); ++i)
    REQUIRE(t.values(out2)[i] == Catch::Approx(t.values(bare2)[i]).margin(1e-15));
}

TEST_CASE("bipartite half convolution gradient matches finite differences") {
  SplitMix64 rng(59);
  ParamStore ps;
  ps.add("xs", {2, 3}).value = random_values(rng, 6, -1.0, 1.0);
  ps.add("xo", {3, 3}).value = random_values(rng, 9, -1.0, 1.0);
  ps.add("e", {4, 1}).value = random_values(rng, 4, -1.0, 1.0);
  ps.add("wc", {3, 2}).value = random_values(rng, 6, -1.0, 1.0);
  ps.add("wv", {3, 2}).value = random_values(rng, 6, -1.0, 1.0);
  ps.add("we", {1, 2}).value = random_values(rng, 2, -1.0, 1.0);
  const std::vector<int> self_idx = {0, 0, 1, 1};
  const std::vector<int> other_idx = {0, 2, 1, 2};
  auto forward = [&](Tape& t) {
    return bipartite_conv(t, t.param(ps.at("xs")), t.param(ps.at("xo")), t.param(ps.at("e")), self_idx,
                          other_idx, t.param(ps.at("wc")), t.param(ps.at("wv")), t.param(ps.at("we")));
  };
  auto loss = [&]() {
    Tape t;
    return sum_sq(t, forward(t));
  };
  {
    Tape t;
    Var l = sum_sq_var(t, forward(t));
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-6, 1e-4);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("physics-informed model emits one logit row per generator") {
  const UcInstance inst = triangle_instance_t12();
  const SpatiotemporalGraph st = build_spatiotemporal_graph(inst);
  const SpatialGraph sp = build_spatial_graph(inst);
  const ScaledLaplacian lap = scaled_laplacian(st.adjacency);
  const PiGcnConfig cfg = pi_config_for(inst, sp);
  ParamStore ps = make_pi_gcn_params(cfg, 7);

  Tape t;
  Var logits = pi_gcn_forward(t, ps, cfg, st, sp, lap, generator_bus_rows(inst));
  REQUIRE(t.shape(logits) == std::vector<int>{2, 12});
  for (double v : t.values(logits)) REQUIRE(std::isfinite(v));

  // Horizons shorter than the two temporal blocks are rejected.
  PiGcnConfig tiny = cfg;
  tiny.horizon = 8;
  REQUIRE_THROWS_AS(make_pi_gcn_params(tiny, 7), ShapeError);
  const UcInstance small = ucfix::triangle_instance_t4();
  const SpatiotemporalGraph st4 = build_spatiotemporal_graph(small);
  const SpatialGraph sp4 = build_spatial_graph(small);
  Tape t2;
  REQUIRE_THROWS_AS(pi_gcn_forward(t2, ps, cfg, st4, sp4, lap, generator_bus_rows(small)), ShapeError);
}

TEST_CASE("physics-informed model is equivariant to bus relabeling") {
  const UcInstance inst = triangle_instance_t12();
  SystemSpec permuted_sys = inst.system;
  permuted_sys.buses = {2, 3, 1};
  LoadScenario permuted_scen = inst.scenario;
  const int from_old[3] = {1, 2, 0};  // new row i held old row from_old[i]
  for (int i = 0; i < 3; ++i)
    for (int tt = 0; tt < inst.horizon; ++tt) permuted_scen.d(i, tt) = inst.scenario.d(from_old[i], tt);
  const UcInstance permuted = make_instance(permuted_sys, permuted_scen);

  const SpatiotemporalGraph st_a = build_spatiotemporal_graph(inst);
  const SpatialGraph sp_a = build_spatial_graph(inst);
  const SpatiotemporalGraph st_b = build_spatiotemporal_graph(permuted);
  const SpatialGraph sp_b = build_spatial_graph(permuted);
  const PiGcnConfig cfg = pi_config_for(inst, sp_a);
  ParamStore ps = make_pi_gcn_params(cfg, 11);

  Tape ta, tb;
  Var la = pi_gcn_forward(ta, ps, cfg, st_a, sp_a, scaled_laplacian(st_a.adjacency), generator_bus_rows(inst));
  Var lb = pi_gcn_forward(tb, ps, cfg, st_b, sp_b, scaled_laplacian(st_b.adjacency), generator_bus_rows(permuted));
  const auto& va = ta.values(la);
  const auto& vb = tb.values(lb);
  REQUIRE(va.size() == vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) REQUIRE(va[i] == Catch::Approx(vb[i]).margin(1e-6));
}

TEST_CASE("physics-informed model gradient matches finite differences") {
  const UcInstance inst = triangle_instance_t12();
  const SpatiotemporalGraph st = build_spatiotemporal_graph(inst);
  const SpatialGraph sp = build_spatial_graph(inst);
  const ScaledLaplacian lap = scaled_laplacian(st.adjacency);
  const PiGcnConfig cfg = pi_config_for(inst, sp);
  ParamStore ps = make_pi_gcn_params(cfg, 13);
  const std::vector<int> gens = generator_bus_rows(inst);

  SplitMix64 rng(61);
  std::vector<double> target(24);
  for (double& x : target) x = rng.uniform() < 0.5 ? 0.0 : 1.0;

  auto loss_var = [&](Tape& t) {
    Var logits = pi_gcn_forward(t, ps, cfg, st, sp, lap, gens);
    return diving_loss(t, {logits}, {target}, {1.0});
  };
  auto loss = [&]() {
    Tape t;
    return t.scalar(loss_var(t));
  };
  {
    Tape t;
    Var l = loss_var(t);
    ps.zero_grad();
    t.backward(l);
  }
  // A central difference of a loss of magnitude L carries rounding noise of
  // order eps * L / step, so near-zero gradients need a floor tied to L or
  // the quotient compares noise against noise.
  const double floor = 1e-4 * std::max(1.0, std::abs(loss()));
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-5, 1e-3, 50, 0x51ED5EEDULL, floor);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
  REQUIRE(rep.coords_checked >= 50);
}

TEST_CASE("bipartite model scores exactly the requested columns") {
  const UcBuild built = build_uc_milp(ucfix::triangle_instance_t2());
  const LpSolution lp = solve_lp(built.problem);
  REQUIRE(lp.status == LpStatus::Optimal);
  const BipartiteGraph g = build_bipartite_graph(built.problem, lp, {});
  const MbGcnConfig cfg;
  ParamStore ps = make_mb_gcn_params(cfg, 19);

  const std::vector<int> x_cols = {0, 1, 2, 3};  // commitment block, 2 units x 2 steps
  Tape t;
  Var logits = mb_gcn_forward(t, ps, cfg, g, x_cols);
  REQUIRE(t.shape(logits) == std::vector<int>{4});
  for (double v : t.values(logits)) REQUIRE(std::isfinite(v));

  // Zero features with zero biases cannot produce a signal.
  BipartiteGraph dark = g;
  dark.cons_features = Mat(g.cons_features.rows(), g.cons_features.cols());
  dark.var_features = Mat(g.var_features.rows(), g.var_features.cols());
  dark.edge_features = Mat(g.edge_features.rows(), g.edge_features.cols());
  Tape t2;
  Var silent = mb_gcn_forward(t2, ps, cfg, dark, x_cols);
  for (double v : t2.values(silent)) REQUIRE(v == 0.0);

  Tape t3;
  REQUIRE_THROWS_AS(mb_gcn_forward(t3, ps, cfg, g, {}), ShapeError);
}

TEST_CASE("bipartite model gradient matches finite differences") {
  const UcBuild built = build_uc_milp(ucfix::triangle_instance_t2());
  const LpSolution lp = solve_lp(built.problem);
  const BipartiteGraph g = build_bipartite_graph(built.problem, lp, {lp.x});
  const MbGcnConfig cfg;
  ParamStore ps = make_mb_gcn_params(cfg, 29);
  const std::vector<int> cand = {0, 1, 2, 3};

  auto loss_var = [&](Tape& t) { return branching_loss(t, mb_gcn_forward(t, ps, cfg, g, cand), 2); };
  auto loss = [&]() {
    Tape t;
    return t.scalar(loss_var(t));
  };
  {
    Tape t;
    Var l = loss_var(t);
    ps.zero_grad();
    t.backward(l);
  }
  const double floor = 1e-4 * std::max(1.0, std::abs(loss()));
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-5, 1e-3, 50, 0x51ED5EEDULL, floor);
  INFO(rep.worst_tensor << "[" << rep.worst_index << "] rel " << rep.max_rel_err);
  REQUIRE(rep.pass);
}

TEST_CASE("diving probabilities form a Bernoulli distribution") {
  REQUIRE(diving_prob(0.0, 1) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(diving_prob(0.0, 0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(diving_prob(20.0, 1) >= 1.0 - 1e-8);
  REQUIRE(diving_prob(-20.0, 0) >= 1.0 - 1e-8);

  SplitMix64 rng(67);
  for (int i = 0; i < 200; ++i) {
    const double y = rng.uniform(-40.0, 40.0);
    REQUIRE(diving_prob(y, 0) + diving_prob(y, 1) == Catch::Approx(1.0).margin(1e-12));
  }

  // Log-space evaluation keeps extreme logits finite.
  REQUIRE(log_diving_prob(-1000.0, 1) == Catch::Approx(-1000.0));
  REQUIRE(diving_prob(-1000.0, 1) == 0.0);
  REQUIRE(diving_prob(1000.0, 1) == 1.0);
  REQUIRE_THROWS_AS(diving_prob(0.0, 2), ConfigError);
}

TEST_CASE("diving loss weights instances by normalized objective") {
  Tape t;
  // One instance, indifferent logits: each dimension costs ln 2.
  Var zero6 = t.constant({6}, std::vector<double>(6, 0.0));
  Var l0 = diving_loss(t, {zero6}, {std::vector<double>(6, 1.0)}, {1.0});
  REQUIRE(t.scalar(l0) == Catch::Approx(6.0 * std::log(2.0)).margin(1e-12));

  // Saturated correct logits cost essentially nothing.
  Var sharp = t.constant({4}, {20.0, -20.0, 20.0, -20.0});
  Var l1 = diving_loss(t, {sharp}, {{1.0, 0.0, 1.0, 0.0}}, {1.0});
  REQUIRE(t.scalar(l1) <= 1e-6 * 4.0);

  // Two instances with objectives 100 and 300 under beta=1.
  const DivingNormalizer norm = make_diving_normalizer({100.0, 300.0});
  const std::vector<double> w = diving_weights({100.0, 300.0}, 1.0, norm);
  REQUIRE(w[0] == Catch::Approx(1.0));
  REQUIRE(w[1] == Catch::Approx(std::exp(-1.0)));
  Var zero2a = t.constant({2}, std::vector<double>(2, 0.0));
  Var zero2b = t.constant({2}, std::vector<double>(2, 0.0));
  Var l2 = diving_loss(t, {zero2a, zero2b}, {{1.0, 0.0}, {0.0, 1.0}}, w);
  REQUIRE(t.scalar(l2) == Catch::Approx(std::log(2.0) * (1.0 + std::exp(-1.0))).margin(1e-12));

  // beta = 0 ignores the objectives.
  const std::vector<double> wu = diving_weights({100.0, 300.0}, 0.0, norm);
  REQUIRE(wu[0] == 1.0);
  REQUIRE(wu[1] == 1.0);

  Var bad = t.constant({1}, {0.0});
  REQUIRE_THROWS_AS(diving_loss(t, {bad}, {{0.5}}, {1.0}), ConfigError);
}

TEST_CASE("diving loss gradient matches finite differences") {
  SplitMix64 rng(71);
  ParamStore ps;
  ps.add("y", {6}).value = random_values(rng, 6, -2.0, 2.0);
  const std::vector<double> target = {1.0, 0.0, 0.0, 1.0, 1.0, 0.0};
  auto loss = [&]() {
    Tape t;
    return t.scalar(diving_loss(t, {t.param(ps.at("y"))}, {target}, {0.8}));
  };
  {
    Tape t;
    Var l = diving_loss(t, {t.param(ps.at("y"))}, {target}, {0.8});
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport rep = finite_diff_check(ps, loss, 1e-6, 1e-4);
  REQUIRE(rep.pass);
}

TEST_CASE("branching loss is a stable softmax cross entropy") {
  Tape t;
  Var uniform = t.constant({4}, std::vector<double>(4, 1.3));
  REQUIRE(t.scalar(branching_loss(t, uniform, 2)) == Catch::Approx(std::log(4.0)).margin(1e-12));

  Var confident = t.constant({5}, {0.0, 30.0, 0.0, 0.0, 0.0});
  REQUIRE(t.scalar(branching_loss(t, confident, 1)) <= 1e-9);

  SplitMix64 rng(73);
  const auto yv = random_values(rng, 6, -3.0, 3.0);
  std::vector<double> shifted = yv;
  for (double& x : shifted) x += 13.7;
  Var y1 = t.constant({6}, yv);
  Var y2 = t.constant({6}, shifted);
  REQUIRE(std::abs(t.scalar(branching_loss(t, y1, 4)) - t.scalar(branching_loss(t, y2, 4))) <= 1e-10);

  REQUIRE_THROWS_AS(branching_loss(t, y1, 6), ShapeError);

  ParamStore ps;
  ps.add("y", {5}).value = random_values(rng, 5, -2.0, 2.0);
  auto loss = [&]() {
    Tape tt;
    return tt.scalar(branching_loss(tt, tt.param(ps.at("y")), 3));
  };
  {
    Tape tt;
    Var l = branching_loss(tt, tt.param(ps.at("y")), 3);
    ps.zero_grad();
    tt.backward(l);
  }
  REQUIRE(finite_diff_check(ps, loss, 1e-6, 1e-4).pass);
}

TEST_CASE("per-dimension accuracy rounds half up") {
  Mat probs(2, 2);
  probs(0, 0) = 0.9;
  probs(0, 1) = 0.2;
  probs(1, 0) = 0.8;
  probs(1, 1) = 0.1;
  Mat targets(2, 2);
  targets(0, 0) = 1.0;
  targets(1, 0) = 1.0;
  const auto perfect = accuracy_per_dim(probs, targets);
  REQUIRE(perfect[0] == 1.0);
  REQUIRE(perfect[1] == 1.0);

  // p = 0.5 predicts 1 under the floor(p + 1/2) rule.
  Mat half(1, 2, 0.5);
  Mat ht(1, 2);
  ht(0, 0) = 1.0;
  const auto coin = accuracy_per_dim(half, ht);
  REQUIRE(coin[0] == 1.0);
  REQUIRE(coin[1] == 0.0);

  SplitMix64 rng(79);
  const int n = 1000, d = 3;
  Mat rp(n, d);
  Mat rt(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      rp(i, j) = rng.uniform();
      rt(i, j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
  for (double a : accuracy_per_dim(rp, rt)) {
    REQUIRE(a >= 0.45);
    REQUIRE(a <= 0.55);
  }
}

TEST_CASE("adam takes bias-corrected deterministic steps") {
  ParamStore ps;
  ParamTensor& p = ps.add("p", {4});
  p.value = {1.0, 2.0, 3.0, 4.0};
  std::fill(p.grad.begin(), p.grad.end(), 1.0);
  AdamState state;
  adam_step(ps, state, 0.005);
  for (int i = 0; i < 4; ++i)
    REQUIRE(p.value[static_cast<std::size_t>(i)] == Catch::Approx(1.0 + i - 0.005).margin(1e-9));

  // Zero gradient from a fresh state moves nothing.
  ParamStore qs;
  ParamTensor& q = qs.add("q", {3});
  q.value = {5.0, 6.0, 7.0};
  AdamState fresh;
  adam_step(qs, fresh, 0.005);
  REQUIRE(q.value == std::vector<double>{5.0, 6.0, 7.0});

  // Identical runs give bit-identical trajectories.
  auto run = [&]() {
    const MbGcnConfig cfg;
    ParamStore m = make_mb_gcn_params(cfg, 101);
    AdamState st;
    const UcBuild built = build_uc_milp(ucfix::triangle_instance_t2());
    const LpSolution lp = solve_lp(built.problem);
    const BipartiteGraph g = build_bipartite_graph(built.problem, lp, {});
    for (int step = 0; step < 5; ++step) {
      Tape t;
      Var l = branching_loss(t, mb_gcn_forward(t, m, cfg, g, {0, 1, 2, 3}), 1);
      m.zero_grad();
      t.backward(l);
      adam_step(m, st, 0.005);
    }
    return m;
  };
  const ParamStore a = run();
  const ParamStore b = run();
  for (const auto& [name, ta] : a) {
    const auto& tb = b.at(name);
    REQUIRE(ta.value == tb.value);
  }
}

TEST_CASE("glorot initialization is seeded and bounded") {
  const MbGcnConfig cfg;
  const ParamStore a = make_mb_gcn_params(cfg, 5);
  const ParamStore b = make_mb_gcn_params(cfg, 5);
  const ParamStore c = make_mb_gcn_params(cfg, 6);
  bool all_same = true;
  bool any_nonzero = false;
  for (const auto& [name, ta] : a) {
    REQUIRE(ta.value == b.at(name).value);
    if (ta.value != c.at(name).value) all_same = false;
    if (ta.shape.size() == 1) {
      for (double v : ta.value) REQUIRE(v == 0.0);
    } else {
      const double bound = std::sqrt(6.0 / (ta.shape[0] + ta.shape[1]));
      for (double v : ta.value) {
        REQUIRE(std::abs(v) <= bound);
        any_nonzero = any_nonzero || v != 0.0;
      }
    }
  }
  REQUIRE_FALSE(all_same);
  REQUIRE(any_nonzero);
}

TEST_CASE("checkpoints round trip bit for bit") {
  const MbGcnConfig cfg;
  ParamStore ps = make_mb_gcn_params(cfg, 77);
  const std::string path = "ck_roundtrip.bin";
  save_checkpoint(path, "mb-gcn-branching", mb_gcn_config_to_json(cfg), 77, ps);

  const Checkpoint ck = load_checkpoint(path);
  REQUIRE(ck.model == "mb-gcn-branching");
  REQUIRE(ck.seed == 77);
  REQUIRE(ck.version == 1);
  const MbGcnConfig back = mb_gcn_config_from_json(ck.config);
  REQUIRE(back.embed == cfg.embed);
  REQUIRE(ck.params.size() == ps.size());
  for (const auto& [name, t] : ps) {
    REQUIRE(ck.params.at(name).shape == t.shape);
    REQUIRE(ck.params.at(name).value == t.value);
  }

  // Corrupted magic and truncated payloads are rejected.
  {
    std::ofstream bad(path + ".bad", std::ios::binary);
    bad << "NOPE and some trailing bytes";
  }
  REQUIRE_THROWS_AS(load_checkpoint(path + ".bad"), DecodeError);
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream cut(path + ".cut", std::ios::binary);
    cut.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  REQUIRE_THROWS_AS(load_checkpoint(path + ".cut"), DecodeError);
  std::remove((path + ".bad").c_str());
  std::remove((path + ".cut").c_str());
  std::remove(path.c_str());
}

TEST_CASE("model configs survive json round trips") {
  PiGcnConfig pc;
  pc.horizon = 12;
  pc.num_buses = 9;
  pc.spatial_width = 16;
  const PiGcnConfig pc2 = pi_gcn_config_from_json(pi_gcn_config_to_json(pc));
  REQUIRE(pc2.horizon == 12);
  REQUIRE(pc2.num_buses == 9);
  REQUIRE(pc2.spatial_width == 16);
  REQUIRE(pc2.cheb_order_map == pc.cheb_order_map);

  MbGcnConfig mc;
  const MbGcnConfig mc2 = mb_gcn_config_from_json(mb_gcn_config_to_json(mc));
  REQUIRE(mc2.cons_width == 5);
  REQUIRE(mc2.var_width == 19);
  REQUIRE(mc2.embed == 24);
}

TEST_CASE("finite difference audit flags corrupted gradients") {
  SplitMix64 rng(83);
  ParamStore ps;
  ps.add("x", {3, 4}).value = random_values(rng, 12, -1.0, 1.0);
  ps.add("w", {4, 2}).value = random_values(rng, 8, -1.0, 1.0);
  ps.add("b", {2}).value = random_values(rng, 2, -0.5, 0.5);
  auto forward = [&](Tape& t) { return linear(t, t.param(ps.at("x")), t.param(ps.at("w")), t.param(ps.at("b"))); };
  auto loss = [&]() {
    Tape t;
    return sum_sq(t, forward(t));
  };
  {
    Tape t;
    Var l = sum_sq_var(t, forward(t));
    ps.zero_grad();
    t.backward(l);
  }
  const GradCheckReport clean = finite_diff_check(ps, loss, 1e-6, 1e-7);
  INFO("linear layer max rel " << clean.max_rel_err);
  REQUIRE(clean.pass);

  for (double& g : ps.at("w").grad) g *= 2.0;
  const GradCheckReport dirty = finite_diff_check(ps, loss, 1e-6, 1e-4);
  REQUIRE_FALSE(dirty.pass);
  REQUIRE(dirty.worst_tensor == "w");
}

TEST_CASE("five hundred steps overfit one instance") {
  const UcInstance inst = triangle_instance_t12();
  const SpatiotemporalGraph st = build_spatiotemporal_graph(inst);
  const SpatialGraph sp = build_spatial_graph(inst);
  const ScaledLaplacian lap = scaled_laplacian(st.adjacency);
  const PiGcnConfig cfg = pi_config_for(inst, sp);
  ParamStore ps = make_pi_gcn_params(cfg, 3);
  const std::vector<int> gens = generator_bus_rows(inst);

  SplitMix64 rng(89);
  std::vector<double> target(24);
  for (double& x : target) x = rng.uniform() < 0.5 ? 0.0 : 1.0;

  AdamState adam;
  for (int step = 0; step < 500; ++step) {
    Tape t;
    Var loss = diving_loss(t, {pi_gcn_forward(t, ps, cfg, st, sp, lap, gens)}, {target}, {1.0});
    ps.zero_grad();
    t.backward(loss);
    adam_step(ps, adam, 0.005);
  }
  Tape t;
  const double final_loss = t.scalar(diving_loss(t, {pi_gcn_forward(t, ps, cfg, st, sp, lap, gens)}, {target}, {1.0}));
  REQUIRE(final_loss < 0.01 * 24.0);

  // The bipartite model has the same single-instance capacity.
  const UcBuild built = build_uc_milp(ucfix::triangle_instance_t2());
  const LpSolution lp = solve_lp(built.problem);
  const BipartiteGraph g = build_bipartite_graph(built.problem, lp, {});
  const MbGcnConfig mcfg;
  ParamStore ms = make_mb_gcn_params(mcfg, 4);
  const std::vector<double> mb_target = {1.0, 1.0, 0.0, 1.0};
  AdamState madam;
  for (int step = 0; step < 500; ++step) {
    Tape tt;
    Var loss = diving_loss(tt, {mb_gcn_forward(tt, ms, mcfg, g, {0, 1, 2, 3})}, {mb_target}, {1.0});
    ms.zero_grad();
    tt.backward(loss);
    adam_step(ms, madam, 0.005);
  }
  Tape tt;
  const double mb_loss =
      tt.scalar(diving_loss(tt, {mb_gcn_forward(tt, ms, mcfg, g, {0, 1, 2, 3})}, {mb_target}, {1.0}));
  REQUIRE(mb_loss < 0.01 * 4.0);
}
