// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ucmip/common.hpp"
#include "ucmip/dense.hpp"

namespace ucmip {

inline std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor dimension must be positive");
    n *= d;
  }
  return n;
}

// A named trainable tensor. `grad` accumulates across backward passes until
// zero_grad is called, which is what batch-style training loops expect.
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
};

// Ordered (by name) collection of parameters. Name order fixes both the
// initialization stream and the checkpoint payload layout, so iteration must
// stay deterministic.
class ParamStore {
 public:
  ParamTensor& add(const std::string& name, std::vector<int> shape) {
    if (map_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
    const std::int64_t n = shape_numel(shape);
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.value.assign(static_cast<std::size_t>(n), 0.0);
    t.grad.assign(static_cast<std::size_t>(n), 0.0);
    return map_.emplace(name, std::move(t)).first->second;
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  ParamTensor& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const ParamTensor& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [k, t] : map_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
  }

  std::size_t size() const { return map_.size(); }
  std::int64_t total_values() const {
    std::int64_t n = 0;
    for (const auto& [k, t] : map_) n += t.numel();
    return n;
  }

  auto begin() { return map_.begin(); }
  auto end() { return map_.end(); }
  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

  // Weights get uniform +-sqrt(6/(fan_in+fan_out)); rank-1 tensors are biases
  // and start at zero. Fan counts for rank-3 kernels include the kernel width.
  void glorot_init(std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (auto& [k, t] : map_) {
      if (t.shape.size() < 2) {
        std::fill(t.value.begin(), t.value.end(), 0.0);
        continue;
      }
      double fan_in = 1.0;
      double fan_out = 1.0;
      if (t.shape.size() == 2) {
        fan_in = t.shape[0];
        fan_out = t.shape[1];
      } else {
        const int width = t.shape[0];
        fan_in = static_cast<double>(width) * t.shape[t.shape.size() - 2];
        fan_out = static_cast<double>(width) * t.shape.back();
      }
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : t.value) v = rng.uniform(-bound, bound);
    }
  }

 private:
  std::map<std::string, ParamTensor> map_;
};

// Handle into a Tape. Plain index so copies are free and accidental cross-tape
// use is caught by range checks.
struct Var {
  int id = -1;
};

// Reverse-mode tape over dense row-major tensors. Every op checks shapes at
// build time and records one backward closure; backward() replays them in
// reverse and then flushes gradients into any bound ParamTensors.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::vector<int> shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), false, nullptr);
  }

  Var constant(const Mat& m) {
    std::vector<double> v(m.data(), m.data() + static_cast<std::size_t>(m.rows()) * m.cols());
    return make({m.rows(), m.cols()}, std::move(v), false, nullptr);
  }

  Var param(ParamTensor& p) { return make(p.shape, p.value, true, &p); }

  const std::vector<int>& shape(Var v) const { return node(v).shape; }
  const std::vector<double>& values(Var v) const { return node(v).val; }
  const std::vector<double>& gradient(Var v) const { return node(v).grad; }

  double scalar(Var v) const {
    const Node& n = node(v);
    if (n.val.size() != 1) throw ShapeError("scalar() needs a single-element tensor");
    return n.val[0];
  }

  // Note for every op below: make() can reallocate the node pool, so no Node
  // reference obtained before it may be touched afterwards. Backward closures
  // re-fetch nodes through the tape, and grad flags are snapshotted up front.
  Var reshape(Var a, std::vector<int> shape) {
    const Node& na = node(a);
    if (shape_numel(shape) != static_cast<std::int64_t>(na.val.size()))
      throw ShapeError("reshape changes element count");
    const bool a_grad = na.needs_grad;
    Var out = make(std::move(shape), na.val, a_grad, nullptr);
    if (a_grad)
      record([a, out](Tape& t) {
        auto& ga = t.node(a).grad;
        const auto& go = t.node(out).grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      });
    return out;
  }

  Var add(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) throw ShapeError("add needs matching shapes");
    std::vector<double> v(na.val.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] + nb.val[i];
    Var out = make(na.shape, std::move(v), na.needs_grad || nb.needs_grad, nullptr);
    record([a, b, out](Tape& t) {
      const auto& go = t.node(out).grad;
      if (t.node(a).needs_grad) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (t.node(b).needs_grad) {
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
    return out;
  }

  Var mul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape) throw ShapeError("mul needs matching shapes");
    std::vector<double> v(na.val.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] * nb.val[i];
    Var out = make(na.shape, std::move(v), na.needs_grad || nb.needs_grad, nullptr);
    record([a, b, out](Tape& t) {
      const auto& go = t.node(out).grad;
      const auto& va = t.node(a).val;
      const auto& vb = t.node(b).val;
      if (t.node(a).needs_grad) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
      }
      if (t.node(b).needs_grad) {
        auto& gb = t.node(b).grad;
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
      }
    });
    return out;
  }

  Var scale(Var a, double k) {
    const Node& na = node(a);
    std::vector<double> v(na.val.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] * k;
    const bool a_grad = na.needs_grad;
    Var out = make(na.shape, std::move(v), a_grad, nullptr);
    if (a_grad)
      record([a, out, k](Tape& t) {
        auto& ga = t.node(a).grad;
        const auto& go = t.node(out).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * k;
      });
    return out;
  }

  // a is r x c, bias has c entries, added to every row.
  Var add_rowvec(Var a, Var bias) {
    const Node& na = node(a);
    const Node& nb = node(bias);
    if (na.shape.size() != 2 || nb.shape.size() != 1 || nb.shape[0] != na.shape[1])
      throw ShapeError("add_rowvec needs r x c matrix and width-c vector");
    const int r = na.shape[0];
    const int c = na.shape[1];
    std::vector<double> v(na.val.size());
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        v[static_cast<std::size_t>(i) * c + j] = na.val[static_cast<std::size_t>(i) * c + j] + nb.val[j];
    Var out = make(na.shape, std::move(v), na.needs_grad || nb.needs_grad, nullptr);
    record([a, bias, out, r, c](Tape& t) {
      const auto& go = t.node(out).grad;
      if (t.node(a).needs_grad) {
        auto& ga = t.node(a).grad;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (t.node(bias).needs_grad) {
        auto& gb = t.node(bias).grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gb[j] += go[static_cast<std::size_t>(i) * c + j];
      }
    });
    return out;
  }

  Var matmul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
      throw ShapeError("matmul needs r x k and k x c operands");
    const int r = na.shape[0];
    const int k = na.shape[1];
    const int c = nb.shape[1];
    std::vector<double> v(static_cast<std::size_t>(r) * c, 0.0);
    for (int i = 0; i < r; ++i)
      for (int p = 0; p < k; ++p) {
        const double aip = na.val[static_cast<std::size_t>(i) * k + p];
        if (aip == 0.0) continue;
        const double* brow = nb.val.data() + static_cast<std::size_t>(p) * c;
        double* vrow = v.data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) vrow[j] += aip * brow[j];
      }
    Var out = make({r, c}, std::move(v), na.needs_grad || nb.needs_grad, nullptr);
    record([a, b, out, r, k, c](Tape& t) {
      const auto& go = t.node(out).grad;
      const auto& va = t.node(a).val;
      const auto& vb = t.node(b).val;
      if (t.node(a).needs_grad) {
        auto& ga = t.node(a).grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) {
            const double g = go[static_cast<std::size_t>(i) * c + j];
            if (g == 0.0) continue;
            for (int p = 0; p < k; ++p)
              ga[static_cast<std::size_t>(i) * k + p] += g * vb[static_cast<std::size_t>(p) * c + j];
          }
      }
      if (t.node(b).needs_grad) {
        auto& gb = t.node(b).grad;
        for (int i = 0; i < r; ++i)
          for (int p = 0; p < k; ++p) {
            const double aip = va[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            for (int j = 0; j < c; ++j)
              gb[static_cast<std::size_t>(p) * c + j] += aip * go[static_cast<std::size_t>(i) * c + j];
          }
      }
    });
    return out;
  }

  Var sigmoid(Var a) {
    const Node& na = node(a);
    std::vector<double> v(na.val.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = stable_sigmoid(na.val[i]);
    const bool a_grad = na.needs_grad;
    Var out = make(na.shape, std::move(v), a_grad, nullptr);
    if (a_grad)
      record([a, out](Tape& t) {
        auto& ga = t.node(a).grad;
        const auto& go = t.node(out).grad;
        const auto& vo = t.node(out).val;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
      });
    return out;
  }

  Var relu(Var a) {
    const Node& na = node(a);
    std::vector<double> v(na.val.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.val[i] > 0.0 ? na.val[i] : 0.0;
    const bool a_grad = na.needs_grad;
    Var out = make(na.shape, std::move(v), a_grad, nullptr);
    if (a_grad)
      record([a, out](Tape& t) {
        auto& ga = t.node(a).grad;
        const auto& go = t.node(out).grad;
        const auto& va = t.node(a).val;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (va[i] > 0.0) ga[i] += go[i];
      });
    return out;
  }

  // out.val[i] = a.val[index[i]]; the adjoint scatter-adds, so repeated source
  // entries are handled correctly. Powers im2col and row gathers.
  Var gather(Var a, std::vector<std::int64_t> index, std::vector<int> out_shape) {
    const Node& na = node(a);
    if (shape_numel(out_shape) != static_cast<std::int64_t>(index.size()))
      throw ShapeError("gather index count must match output shape");
    const std::int64_t limit = static_cast<std::int64_t>(na.val.size());
    std::vector<double> v(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] < 0 || index[i] >= limit) throw ShapeError("gather index out of range");
      v[i] = na.val[static_cast<std::size_t>(index[i])];
    }
    const bool a_grad = na.needs_grad;
    Var out = make(std::move(out_shape), std::move(v), a_grad, nullptr);
    if (a_grad)
      record([a, out, idx = std::move(index)](Tape& t) {
        auto& ga = t.node(a).grad;
        const auto& go = t.node(out).grad;
        for (std::size_t i = 0; i < idx.size(); ++i) ga[static_cast<std::size_t>(idx[i])] += go[i];
      });
    return out;
  }

  Var gather_rows(Var a, const std::vector<int>& rows) {
    const Node& na = node(a);
    if (na.shape.size() != 2) throw ShapeError("gather_rows needs a matrix");
    const int c = na.shape[1];
    std::vector<std::int64_t> idx(rows.size() * static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= na.shape[0]) throw ShapeError("gather_rows row out of range");
      for (int j = 0; j < c; ++j) idx[i * c + j] = static_cast<std::int64_t>(rows[i]) * c + j;
    }
    return gather(a, std::move(idx), {static_cast<int>(rows.size()), c});
  }

  // msgs is E x c; out[dst[e], :] += msgs[e, :]. Aggregation step for all the
  // message-passing layers.
  Var row_scatter_add(Var msgs, std::vector<int> dst, int num_rows) {
    const Node& nm = node(msgs);
    if (nm.shape.size() != 2 || static_cast<std::size_t>(nm.shape[0]) != dst.size())
      throw ShapeError("row_scatter_add needs one destination per message row");
    const int c = nm.shape[1];
    std::vector<double> v(static_cast<std::size_t>(num_rows) * c, 0.0);
    for (std::size_t e = 0; e < dst.size(); ++e) {
      if (dst[e] < 0 || dst[e] >= num_rows) throw ShapeError("row_scatter_add destination out of range");
      for (int j = 0; j < c; ++j)
        v[static_cast<std::size_t>(dst[e]) * c + j] += nm.val[e * c + j];
    }
    const bool m_grad = nm.needs_grad;
    Var out = make({num_rows, c}, std::move(v), m_grad, nullptr);
    if (m_grad)
      record([msgs, out, d = std::move(dst), c](Tape& t) {
        auto& gm = t.node(msgs).grad;
        const auto& go = t.node(out).grad;
        for (std::size_t e = 0; e < d.size(); ++e)
          for (int j = 0; j < c; ++j)
            gm[e * c + j] += go[static_cast<std::size_t>(d[e]) * c + j];
      });
    return out;
  }

  // h holds one c_out x c_in matrix per row (flattened); g holds one length
  // c_in vector per row. out[e] = H_e * g_e. Edge-conditioned message kernel.
  Var edge_matvec(Var h, Var g, int c_out) {
    const Node& nh = node(h);
    const Node& ng = node(g);
    if (nh.shape.size() != 2 || ng.shape.size() != 2 || nh.shape[0] != ng.shape[0])
      throw ShapeError("edge_matvec needs matching row counts");
    const int c_in = ng.shape[1];
    if (nh.shape[1] != c_out * c_in) throw ShapeError("edge_matvec kernel width must be c_out*c_in");
    const int rows = nh.shape[0];
    std::vector<double> v(static_cast<std::size_t>(rows) * c_out, 0.0);
    for (int e = 0; e < rows; ++e)
      for (int o = 0; o < c_out; ++o) {
        double s = 0.0;
        for (int c = 0; c < c_in; ++c)
          s += nh.val[(static_cast<std::size_t>(e) * c_out + o) * c_in + c] *
               ng.val[static_cast<std::size_t>(e) * c_in + c];
        v[static_cast<std::size_t>(e) * c_out + o] = s;
      }
    Var out = make({rows, c_out}, std::move(v), nh.needs_grad || ng.needs_grad, nullptr);
    record([h, g, out, rows, c_out, c_in](Tape& t) {
      const auto& go = t.node(out).grad;
      const auto& vh = t.node(h).val;
      const auto& vg = t.node(g).val;
      if (t.node(h).needs_grad) {
        auto& gh = t.node(h).grad;
        for (int e = 0; e < rows; ++e)
          for (int o = 0; o < c_out; ++o) {
            const double gout = go[static_cast<std::size_t>(e) * c_out + o];
            if (gout == 0.0) continue;
            for (int c = 0; c < c_in; ++c)
              gh[(static_cast<std::size_t>(e) * c_out + o) * c_in + c] +=
                  gout * vg[static_cast<std::size_t>(e) * c_in + c];
          }
      }
      if (t.node(g).needs_grad) {
        auto& gg = t.node(g).grad;
        for (int e = 0; e < rows; ++e)
          for (int o = 0; o < c_out; ++o) {
            const double gout = go[static_cast<std::size_t>(e) * c_out + o];
            if (gout == 0.0) continue;
            for (int c = 0; c < c_in; ++c)
              gg[static_cast<std::size_t>(e) * c_in + c] +=
                  gout * vh[(static_cast<std::size_t>(e) * c_out + o) * c_in + c];
          }
      }
    });
    return out;
  }

  Var concat_cols(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[0] != nb.shape[0])
      throw ShapeError("concat_cols needs matrices with equal row counts");
    const int r = na.shape[0];
    const int ca = na.shape[1];
    const int cb = nb.shape[1];
    std::vector<double> v(static_cast<std::size_t>(r) * (ca + cb));
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < ca; ++j)
        v[static_cast<std::size_t>(i) * (ca + cb) + j] = na.val[static_cast<std::size_t>(i) * ca + j];
      for (int j = 0; j < cb; ++j)
        v[static_cast<std::size_t>(i) * (ca + cb) + ca + j] = nb.val[static_cast<std::size_t>(i) * cb + j];
    }
    Var out = make({r, ca + cb}, std::move(v), na.needs_grad || nb.needs_grad, nullptr);
    record([a, b, out, r, ca, cb](Tape& t) {
      const auto& go = t.node(out).grad;
      if (t.node(a).needs_grad) {
        auto& ga = t.node(a).grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < ca; ++j)
            ga[static_cast<std::size_t>(i) * ca + j] += go[static_cast<std::size_t>(i) * (ca + cb) + j];
      }
      if (t.node(b).needs_grad) {
        auto& gb = t.node(b).grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < cb; ++j)
            gb[static_cast<std::size_t>(i) * cb + j] += go[static_cast<std::size_t>(i) * (ca + cb) + ca + j];
      }
    });
    return out;
  }

  Var sum(Var a) {
    const Node& na = node(a);
    double s = 0.0;
    for (double x : na.val) s += x;
    const bool a_grad = na.needs_grad;
    Var out = make({1}, {s}, a_grad, nullptr);
    if (a_grad)
      record([a, out](Tape& t) {
        auto& ga = t.node(a).grad;
        const double g = t.node(out).grad[0];
        for (double& x : ga) x += g;
      });
    return out;
  }

  // Sum over all entries of -log p(target | logit) for independent Bernoulli
  // outputs, evaluated in log space so saturated logits stay finite.
  Var bernoulli_nll(Var logits, const std::vector<double>& targets) {
    const Node& nl = node(logits);
    if (nl.val.size() != targets.size()) throw ShapeError("bernoulli_nll target count mismatch");
    for (double x : targets)
      if (x != 0.0 && x != 1.0) throw ConfigError("bernoulli_nll targets must be 0 or 1");
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double s = targets[i] == 1.0 ? -nl.val[i] : nl.val[i];
      loss += softplus(s);
    }
    const bool l_grad = nl.needs_grad;
    Var out = make({1}, {loss}, l_grad, nullptr);
    if (l_grad)
      record([logits, out, x = targets](Tape& t) {
        auto& gl = t.node(logits).grad;
        const auto& vl = t.node(logits).val;
        const double g = t.node(out).grad[0];
        for (std::size_t i = 0; i < x.size(); ++i)
          gl[i] += g * (stable_sigmoid(vl[i]) - x[i]);
      });
    return out;
  }

  // Cross entropy of a softmax over the logits against one target index,
  // computed with max subtraction.
  Var softmax_ce(Var logits, int target) {
    const Node& nl = node(logits);
    const int k = static_cast<int>(nl.val.size());
    if (target < 0 || target >= k) throw ShapeError("softmax_ce target out of range");
    double m = nl.val[0];
    for (double x : nl.val) m = std::max(m, x);
    double z = 0.0;
    for (double x : nl.val) z += std::exp(x - m);
    const double loss = std::log(z) + m - nl.val[static_cast<std::size_t>(target)];
    const bool l_grad = nl.needs_grad;
    Var out = make({1}, {loss}, l_grad, nullptr);
    if (l_grad)
      record([logits, out, target, m, z](Tape& t) {
        auto& gl = t.node(logits).grad;
        const auto& vl = t.node(logits).val;
        const double g = t.node(out).grad[0];
        for (std::size_t i = 0; i < vl.size(); ++i) {
          const double p = std::exp(vl[i] - m) / z;
          gl[i] += g * (p - (static_cast<int>(i) == target ? 1.0 : 0.0));
        }
      });
    return out;
  }

  // Seeds d(loss)/d(loss)=1, replays closures newest-first, then adds leaf
  // gradients into their bound ParamTensors.
  void backward(Var loss) {
    Node& nl = node(loss);
    if (nl.val.size() != 1) throw ShapeError("backward needs a scalar loss");
    for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    nl.grad[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
    for (Node& n : nodes_) {
      if (n.bound == nullptr) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
    }
  }

  static double stable_sigmoid(double y) {
    if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
    const double e = std::exp(y);
    return e / (1.0 + e);
  }

  static double softplus(double s) {
    if (s > 0.0) return s + std::log1p(std::exp(-s));
    return std::log1p(std::exp(s));
  }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;
    ParamTensor* bound = nullptr;
    bool needs_grad = false;
  };

  Node& node(Var v) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw ShapeError("stale tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw ShapeError("stale tape handle");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  Var make(std::vector<int> shape, std::vector<double> values, bool needs_grad, ParamTensor* bound) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw ShapeError("tensor shape does not match value count");
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(values);
    n.grad.assign(n.val.size(), 0.0);
    n.bound = bound;
    n.needs_grad = needs_grad || bound != nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void record(std::function<void(Tape&)> op) { ops_.push_back(std::move(op)); }

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> ops_;
};

}  // namespace ucmip
