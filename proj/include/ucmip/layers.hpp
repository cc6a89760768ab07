// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ucmip/autodiff.hpp"
#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"

namespace ucmip {

inline Var linear(Tape& t, Var x, Var w, Var b) { return t.add_rowvec(t.matmul(x, w), b); }

// Two-layer perceptron with a ReLU hidden layer; the output stays linear so
// heads can attach their own nonlinearity.
inline Var mlp2(Tape& t, Var x, Var w1, Var b1, Var w2, Var b2) {
  return linear(t, t.relu(linear(t, x, w1, b1)), w2, b2);
}

// Gated temporal convolution over an N x T x C_in tensor. Valid (no padding)
// width-K convolution along the time axis, output gated by a sigmoid branch:
// out = (x * W) . sigma(x * V). Shrinks the time axis by K-1.
inline Var temporal_gated_conv(Tape& t, Var x, Var w, Var v) {
  const auto& xs = t.shape(x);
  const auto& ws = t.shape(w);
  if (xs.size() != 3) throw ShapeError("temporal_gated_conv input must be N x T x C");
  if (ws.size() != 3 || t.shape(v) != ws) throw ShapeError("temporal_gated_conv kernels must be K x C_in x C_out");
  const int n = xs[0];
  const int time = xs[1];
  const int c_in = xs[2];
  const int k = ws[0];
  const int c_out = ws[2];
  if (ws[1] != c_in) throw ShapeError("temporal_gated_conv channel mismatch");
  if (time < k) throw ShapeError("temporal_gated_conv needs T >= kernel width");
  const int t_out = time - k + 1;

  // im2col: each output step sees a K*C_in window of its node's sequence.
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n) * t_out * k * c_in);
  std::size_t w_at = 0;
  for (int i = 0; i < n; ++i)
    for (int tau = 0; tau < t_out; ++tau)
      for (int kk = 0; kk < k; ++kk)
        for (int c = 0; c < c_in; ++c)
          idx[w_at++] = (static_cast<std::int64_t>(i) * time + tau + kk) * c_in + c;
  Var window = t.gather(x, std::move(idx), {n * t_out, k * c_in});
  Var lhs = t.matmul(window, t.reshape(w, {k * c_in, c_out}));
  Var gate = t.sigmoid(t.matmul(window, t.reshape(v, {k * c_in, c_out})));
  return t.reshape(t.mul(lhs, gate), {n, t_out, c_out});
}

// Chebyshev graph convolution on N x C_in features: out = sum_k Z_k W_k with
// Z_1 = X, Z_2 = L_hat X, Z_k = 2 L_hat Z_{k-1} - Z_{k-2}.
inline Var chebyshev_conv(Tape& t, Var x, const Mat& l_hat, const std::vector<Var>& w) {
  const auto& xs = t.shape(x);
  if (xs.size() != 2) throw ShapeError("chebyshev_conv input must be N x C");
  if (w.empty()) throw ShapeError("chebyshev_conv needs at least one weight");
  if (l_hat.rows() != xs[0] || l_hat.cols() != xs[0]) throw ShapeError("chebyshev_conv operator size mismatch");
  Var lap = t.constant(l_hat);
  Var z_prev2 = x;
  Var out = t.matmul(x, w[0]);
  if (w.size() == 1) return out;
  Var z_prev1 = t.matmul(lap, x);
  out = t.add(out, t.matmul(z_prev1, w[1]));
  for (std::size_t k = 2; k < w.size(); ++k) {
    Var z = t.add(t.scale(t.matmul(lap, z_prev1), 2.0), t.scale(z_prev2, -1.0));
    out = t.add(out, t.matmul(z, w[k]));
    z_prev2 = z_prev1;
    z_prev1 = z;
  }
  return out;
}

// Same recursion applied independently at every time step of an N x T x C
// tensor with shared weights. Row-major layout lets both halves run as plain
// matmuls: the operator acts on the N x (T*C) view, weights on (N*T) x C.
inline Var chebyshev_conv_st(Tape& t, Var x, const Mat& l_hat, const std::vector<Var>& w) {
  const auto& xs = t.shape(x);
  if (xs.size() != 3) throw ShapeError("chebyshev_conv_st input must be N x T x C");
  if (w.empty()) throw ShapeError("chebyshev_conv_st needs at least one weight");
  const int n = xs[0];
  const int time = xs[1];
  const int c_in = xs[2];
  if (l_hat.rows() != n || l_hat.cols() != n) throw ShapeError("chebyshev_conv_st operator size mismatch");
  const int c_out = t.shape(w[0])[1];
  Var lap = t.constant(l_hat);
  auto lmul = [&](Var z) { return t.reshape(t.matmul(lap, t.reshape(z, {n, time * c_in})), {n, time, c_in}); };
  auto apply = [&](Var z, Var wk) { return t.matmul(t.reshape(z, {n * time, c_in}), wk); };
  Var z_prev2 = x;
  Var out = apply(x, w[0]);
  if (w.size() > 1) {
    Var z_prev1 = lmul(x);
    out = t.add(out, apply(z_prev1, w[1]));
    for (std::size_t k = 2; k < w.size(); ++k) {
      Var z = t.add(t.scale(lmul(z_prev1), 2.0), t.scale(z_prev2, -1.0));
      out = t.add(out, apply(z, w[k]));
      z_prev2 = z_prev1;
      z_prev1 = z;
    }
  }
  return t.reshape(out, {n, time, c_out});
}

// Parameters of the edge kernel network h_theta: a two-layer MLP mapping edge
// features to flattened C_out x C_in matrices.
struct EdgeKernel {
  Var w1, b1, w2, b2;
};

// Edge-conditioned convolution: out_i = W g_i + sum_{j in N(i)} h_theta(e_ij) g_j.
// Unnormalized neighbor sum. Directed edge arrays carry both orientations of
// each undirected edge, sharing the feature row.
inline Var edge_conditioned_conv(Tape& t, Var g, Var edge_features, const std::vector<int>& edge_dst,
                                 const std::vector<int>& edge_src, const std::vector<int>& edge_feature_row,
                                 Var w, const EdgeKernel& h_theta) {
  const auto& gs = t.shape(g);
  if (gs.size() != 2) throw ShapeError("edge_conditioned_conv nodes must be N x C");
  if (edge_dst.size() != edge_src.size() || edge_dst.size() != edge_feature_row.size())
    throw ShapeError("edge_conditioned_conv edge arrays must align");
  const int n = gs[0];
  const int c_in = gs[1];
  const int c_out = t.shape(w)[1];
  Var self = t.matmul(g, w);
  if (edge_dst.empty()) return self;
  Var e_rows = t.gather_rows(edge_features, edge_feature_row);
  Var kernels = mlp2(t, e_rows, h_theta.w1, h_theta.b1, h_theta.w2, h_theta.b2);
  if (t.shape(kernels)[1] != c_out * c_in) throw ShapeError("edge kernel output must be c_out*c_in wide");
  Var g_src = t.gather_rows(g, edge_src);
  Var msgs = t.edge_matvec(kernels, g_src, c_out);
  return t.add(self, t.row_scatter_add(msgs, edge_dst, n));
}

// Half-convolution across a bipartite graph: out_i = W_c x_i
// + sum_{j in N(i)} W_v x_j + sum_{j in N(i)} W_e e_ij, where i ranges over the
// receiving side. self_index/other_index give the edge endpoints.
inline Var bipartite_conv(Tape& t, Var x_self, Var x_other, Var edge_features,
                          const std::vector<int>& self_index, const std::vector<int>& other_index,
                          Var w_self, Var w_other, Var w_edge) {
  if (t.shape(x_self).size() != 2) throw ShapeError("bipartite_conv features must be matrices");
  if (self_index.size() != other_index.size()) throw ShapeError("bipartite_conv edge arrays must align");
  const int num_self = t.shape(x_self)[0];
  Var out = t.matmul(x_self, w_self);
  if (self_index.empty()) return out;
  if (static_cast<int>(self_index.size()) != t.shape(edge_features)[0])
    throw ShapeError("bipartite_conv needs one edge feature row per edge");
  Var from_other = t.gather_rows(t.matmul(x_other, w_other), other_index);
  out = t.add(out, t.row_scatter_add(from_other, self_index, num_self));
  Var from_edges = t.matmul(edge_features, w_edge);
  out = t.add(out, t.row_scatter_add(from_edges, self_index, num_self));
  return out;
}

}  // namespace ucmip
