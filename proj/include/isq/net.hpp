#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "isq/groups.hpp"
#include "isq/matrix.hpp"
#include "isq/rng.hpp"

namespace isq {

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
  }
  return z;
}

inline double activate_deriv(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Softplus: return 1.0 / (1.0 + std::exp(-z));
  }
  return 1.0;
}

// One parameter-tied layer. Every output unit of group g sees its own item
// through self_w[g] and every group h through a mean-pooled cross weight
// cross_w[g][h]; the layer therefore has a scalar count that depends on the
// channel widths and the number of groups but never on the item counts.
//
// An output (equivariant) layer emits rows for all groups; the final
// (psi-type) layer emits rows only for the unselected group, which is what
// collapses selected/context permutations to invariance.
struct SharedLayerParams {
  std::array<Matrix, kGroupCount> self_w;                          // out x in_width[g]
  std::array<std::array<Matrix, kGroupCount>, kGroupCount> cross_w;  // [g][h]: out x in_width[h]
  std::array<std::vector<double>, kGroupCount> bias;               // out
  std::array<int, kGroupCount> in_width{0, 0, 0};
  int out_width = 0;
  int n_groups = 2;      // 2 = selected+unselected, 3 adds the context group
  bool psi = false;      // output layer: rows only for the unselected group
  bool pooled = true;    // false: cross terms structurally zero (local-only nets)
  Activation act = Activation::Identity;

  bool outputs_group(int g) const {
    if (g >= n_groups) return false;
    return psi ? g == kUnselected : true;
  }
};

struct NetConfig {
  int d_item = 3;       // unselected-item feature width
  int n_commands = 5;   // C; selected rows have width d_item + n_commands
  int d_context = 0;    // context feature width; 0 disables the group
  int channels = 48;
  int depth = 3;        // number of equivariant hidden layers before the output layer
  Activation activation = Activation::ReLU;
  bool pooled = true;

  int n_groups() const { return d_context > 0 ? 3 : 2; }
  std::array<int, kGroupCount> input_widths() const {
    return {d_item + n_commands, d_item, d_context};
  }
};

// The tied scalars of one cascaded Q-network. The same value works at every
// phase and every item count; shapes are resolved against the input.
struct SharedParams {
  NetConfig cfg;
  std::vector<SharedLayerParams> layers;  // depth phi layers then one psi layer
};

namespace detail {

inline void init_layer_shapes(SharedLayerParams& L) {
  for (int g = 0; g < L.n_groups; ++g) {
    if (!L.outputs_group(g)) continue;
    L.self_w[g] = Matrix(static_cast<std::size_t>(L.out_width),
                         static_cast<std::size_t>(L.in_width[g]));
    for (int h = 0; h < L.n_groups; ++h)
      L.cross_w[g][h] = Matrix(static_cast<std::size_t>(L.out_width),
                               static_cast<std::size_t>(L.in_width[h]));
    L.bias[g].assign(static_cast<std::size_t>(L.out_width), 0.0);
  }
}

}  // namespace detail

// Builds the layer stack for a config without touching the scalar values.
inline SharedParams make_shared_shape(const NetConfig& cfg) {
  if (cfg.d_item < 1 || cfg.n_commands < 1 || cfg.channels < 1 || cfg.depth < 0)
    throw std::invalid_argument("make_shared_shape: bad config");
  SharedParams p;
  p.cfg = cfg;
  std::array<int, kGroupCount> widths = cfg.input_widths();
  for (int d = 0; d < cfg.depth; ++d) {
    SharedLayerParams L;
    L.n_groups = cfg.n_groups();
    L.in_width = widths;
    L.out_width = cfg.channels;
    L.act = cfg.activation;
    L.pooled = cfg.pooled;
    detail::init_layer_shapes(L);
    p.layers.push_back(std::move(L));
    widths = {cfg.channels, cfg.channels, cfg.channels};
  }
  SharedLayerParams out;
  out.n_groups = cfg.n_groups();
  out.in_width = widths;
  out.out_width = cfg.n_commands;
  out.psi = true;
  out.act = Activation::Identity;  // Q-values are unbounded
  out.pooled = cfg.pooled;
  detail::init_layer_shapes(out);
  p.layers.push_back(std::move(out));
  return p;
}

// Canonical scalar order used by flatten/unflatten, gradients, serialization
// and initialization: layers in stacking order; within a layer the output
// groups in (selected, unselected, context) order; per output group first the
// self weight (row-major over output x input channel), then the cross weights
// toward each group in the same group order (row-major), then the bias.
template <typename Fn>
void for_each_scalar(SharedParams& p, Fn&& fn) {
  for (auto& L : p.layers) {
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      for (std::size_t i = 0; i < L.self_w[g].size(); ++i) fn(L.self_w[g].data()[i]);
      for (int h = 0; h < L.n_groups; ++h)
        for (std::size_t i = 0; i < L.cross_w[g][h].size(); ++i) fn(L.cross_w[g][h].data()[i]);
      for (double& b : L.bias[g]) fn(b);
    }
  }
}

template <typename Fn>
void for_each_scalar(const SharedParams& p, Fn&& fn) {
  for_each_scalar(const_cast<SharedParams&>(p), [&](double& v) { fn(static_cast<double>(v)); });
}

inline std::size_t param_count(const SharedParams& p) {
  if (p.layers.empty()) throw std::invalid_argument("param_count: network has no layers");
  std::size_t n = 0;
  for_each_scalar(p, [&](double) { ++n; });
  return n;
}

inline std::vector<double> flatten(const SharedParams& p) {
  std::vector<double> out;
  out.reserve(256);
  for_each_scalar(p, [&](double v) { out.push_back(v); });
  return out;
}

inline void unflatten(SharedParams& p, const std::vector<double>& flat) {
  std::size_t i = 0;
  for_each_scalar(p, [&](double& v) {
    if (i >= flat.size()) throw std::invalid_argument("unflatten: vector too short");
    v = flat[i++];
  });
  if (i != flat.size()) throw std::invalid_argument("unflatten: vector too long");
}

// Uniform init in +-1/sqrt(fan-in), where the fan-in of an output unit counts
// its self channels plus every pooled channel. Cross weights of local-only
// nets are forced to zero after drawing so the draw sequence is layout-stable.
inline SharedParams make_shared_params(const NetConfig& cfg, SeededRng& rng) {
  SharedParams p = make_shared_shape(cfg);
  for (auto& L : p.layers) {
    int fan = 0;
    for (int h = 0; h < L.n_groups; ++h) fan += L.in_width[h];
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      const double bound = 1.0 / std::sqrt(static_cast<double>(L.in_width[g] + fan));
      auto draw = [&] { return rng.uniform(-bound, bound); };
      for (std::size_t i = 0; i < L.self_w[g].size(); ++i) L.self_w[g].data()[i] = draw();
      for (int h = 0; h < L.n_groups; ++h)
        for (std::size_t i = 0; i < L.cross_w[g][h].size(); ++i) {
          const double v = draw();
          L.cross_w[g][h].data()[i] = L.pooled ? v : 0.0;
        }
      for (double& b : L.bias[g]) b = draw();
    }
  }
  return p;
}

using GroupedRows = std::array<Matrix, kGroupCount>;

namespace detail {

inline void check_layer_input(const SharedLayerParams& L, const GroupedRows& in) {
  for (int g = 0; g < kGroupCount; ++g) {
    if (g >= L.n_groups) {
      if (in[g].rows() > 0)
        throw std::invalid_argument(std::string("layer_forward: unexpected items in group ") +
                                    group_name(g));
      continue;
    }
    if (in[g].rows() > 0 && static_cast<int>(in[g].cols()) != L.in_width[g])
      throw std::invalid_argument(std::string("layer_forward: group ") + group_name(g) +
                                  " width " + std::to_string(in[g].cols()) + ", expected " +
                                  std::to_string(L.in_width[g]));
  }
}

inline std::array<std::vector<double>, kGroupCount> column_means(const SharedLayerParams& L,
                                                                 const GroupedRows& in) {
  std::array<std::vector<double>, kGroupCount> pooled;
  for (int h = 0; h < L.n_groups; ++h) {
    pooled[h].assign(static_cast<std::size_t>(L.in_width[h]), 0.0);
    const std::size_t n = in[h].rows();
    if (n == 0) continue;  // empty group: empty-sum convention
    for (std::size_t j = 0; j < n; ++j) {
      const double* row = in[h].row(j);
      for (int p = 0; p < L.in_width[h]; ++p) pooled[h][static_cast<std::size_t>(p)] += row[p];
    }
    for (double& v : pooled[h]) v /= static_cast<double>(n);
  }
  return pooled;
}

}  // namespace detail

inline GroupedRows layer_forward(const SharedLayerParams& L, const GroupedRows& in,
                                 GroupedRows* preact = nullptr) {
  detail::check_layer_input(L, in);
  const auto pooled = detail::column_means(L, in);
  GroupedRows out;
  for (int g = 0; g < kGroupCount; ++g) {
    if (!L.outputs_group(g)) {
      out[g] = Matrix(0, 0);
      if (preact) (*preact)[g] = Matrix(0, 0);
      continue;
    }
    const std::size_t n = in[g].rows();
    const std::size_t w = static_cast<std::size_t>(L.out_width);
    Matrix z(n, w);
    std::vector<double> base(w);
    for (std::size_t o = 0; o < w; ++o) base[o] = L.bias[g][o];
    if (L.pooled) {
      for (int h = 0; h < L.n_groups; ++h) {
        if (in[h].rows() == 0) continue;
        const Matrix& cw = L.cross_w[g][h];
        for (std::size_t o = 0; o < w; ++o) {
          const double* wrow = cw.row(o);
          double acc = 0.0;
          for (int p = 0; p < L.in_width[h]; ++p)
            acc += wrow[p] * pooled[h][static_cast<std::size_t>(p)];
          base[o] += acc;
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double* xrow = in[g].row(j);
      double* zrow = z.row(j);
      for (std::size_t o = 0; o < w; ++o) {
        const double* wrow = L.self_w[g].row(o);
        double acc = base[o];
        for (int p = 0; p < L.in_width[g]; ++p) acc += wrow[p] * xrow[p];
        zrow[o] = acc;
      }
    }
    Matrix a(n, w);
    for (std::size_t i = 0; i < z.size(); ++i) a.data()[i] = activate(L.act, z.data()[i]);
    if (preact) (*preact)[g] = std::move(z);
    out[g] = std::move(a);
  }
  return out;
}

struct ForwardTrace {
  std::vector<GroupedRows> inputs;   // per layer
  std::vector<GroupedRows> preacts;  // per layer, output groups only
};

// Evaluates the cascaded Q-network on one phase state: an (N-k) x C grid of
// action values, row n for unselected item n, column c for command c.
using QMatrix = Matrix;

inline QMatrix network_forward(const SharedParams& p, const PhaseInput& s,
                               ForwardTrace* trace = nullptr) {
  if (p.layers.empty()) throw std::invalid_argument("network_forward: network has no layers");
  if (s.unselected().rows() == 0)
    throw std::invalid_argument("network_forward: empty unselected group, no feasible action");
  if (static_cast<int>(s.selected().rows()) != s.phase)
    throw std::invalid_argument("network_forward: selected rows " +
                                std::to_string(s.selected().rows()) + " != phase " +
                                std::to_string(s.phase));
  GroupedRows cur = s.groups;
  for (const auto& L : p.layers) {
    GroupedRows pre;
    GroupedRows next = layer_forward(L, cur, trace ? &pre : nullptr);
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->preacts.push_back(std::move(pre));
    }
    cur = std::move(next);
  }
  return cur[kUnselected];
}

// Analytic gradient of sum(upstream .* Q) with respect to the tied scalars,
// accumulated into `out` (canonical flatten order, scaled) reusing the trace
// of an earlier forward pass. The pooled terms make each tied scalar's
// gradient the (1/|h|-weighted) sum over all dense positions it is tied to.
inline void network_backward_into(const SharedParams& p, const ForwardTrace& trace,
                                  const QMatrix& upstream, double scale,
                                  std::vector<double>& out) {
  const Matrix& out_pre = trace.preacts.back()[kUnselected];
  if (upstream.rows() != out_pre.rows() || upstream.cols() != out_pre.cols())
    throw std::invalid_argument("network_backward: upstream shape mismatch");

  // canonical offsets of each layer's scalar block
  std::vector<std::size_t> layer_off(p.layers.size() + 1, 0);
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const SharedLayerParams& L = p.layers[li];
    std::size_t size = 0;
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      size += static_cast<std::size_t>(L.out_width) * static_cast<std::size_t>(L.in_width[g]);
      for (int h = 0; h < L.n_groups; ++h)
        size += static_cast<std::size_t>(L.out_width) * static_cast<std::size_t>(L.in_width[h]);
      size += static_cast<std::size_t>(L.out_width);
    }
    layer_off[li + 1] = layer_off[li] + size;
  }
  if (out.size() != layer_off.back())
    throw std::invalid_argument("network_backward: accumulator size mismatch");

  // d(loss)/d(output rows) for the layer currently being processed
  GroupedRows up;
  up[kSelected] = Matrix(0, 0);
  up[kContext] = Matrix(0, 0);
  up[kUnselected] = upstream;
  if (scale != 1.0)
    for (std::size_t i = 0; i < up[kUnselected].size(); ++i)
      up[kUnselected].data()[i] *= scale;

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const SharedLayerParams& L = p.layers[li];
    const GroupedRows& in = trace.inputs[li];
    const GroupedRows& pre = trace.preacts[li];
    const auto pooled = detail::column_means(L, in);

    // delta = upstream * act'(z), per output group
    GroupedRows delta;
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      const Matrix& z = pre[g];
      Matrix d(z.rows(), z.cols());
      for (std::size_t i = 0; i < z.size(); ++i)
        d.data()[i] = up[g].data()[i] * activate_deriv(L.act, z.data()[i]);
      delta[g] = std::move(d);
    }

    GroupedRows down;  // gradient w.r.t. this layer's inputs
    for (int h = 0; h < L.n_groups; ++h)
      down[h] = Matrix(in[h].rows(), static_cast<std::size_t>(L.in_width[h]));

    std::size_t cursor = layer_off[li];
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      const std::size_t w = static_cast<std::size_t>(L.out_width);
      const std::size_t self_off = cursor;
      cursor += w * static_cast<std::size_t>(L.in_width[g]);
      std::array<std::size_t, kGroupCount> cross_off{};
      for (int h = 0; h < L.n_groups; ++h) {
        cross_off[static_cast<std::size_t>(h)] = cursor;
        cursor += w * static_cast<std::size_t>(L.in_width[h]);
      }
      const std::size_t bias_off = cursor;
      cursor += w;

      const Matrix& d = delta[g];
      const std::size_t n = d.rows();
      std::vector<double> dsum(w, 0.0);  // sum_j delta(j,o)
      for (std::size_t j = 0; j < n; ++j) {
        const double* drow = d.row(j);
        for (std::size_t o = 0; o < w; ++o) dsum[o] += drow[o];
      }
      for (std::size_t o = 0; o < w; ++o) out[bias_off + o] += dsum[o];

      // self weight grads and the self path of the input grad
      for (std::size_t j = 0; j < n; ++j) {
        const double* drow = d.row(j);
        const double* xrow = in[g].row(j);
        double* downrow = down[g].row(j);
        for (std::size_t o = 0; o < w; ++o) {
          const double dv = drow[o];
          if (dv == 0.0) continue;
          double* gw = out.data() + self_off + o * static_cast<std::size_t>(L.in_width[g]);
          const double* sw = L.self_w[g].row(o);
          for (int pch = 0; pch < L.in_width[g]; ++pch) {
            gw[pch] += dv * xrow[pch];
            downrow[pch] += dv * sw[pch];
          }
        }
      }

      if (!L.pooled) continue;
      for (int h = 0; h < L.n_groups; ++h) {
        const std::size_t nh = in[h].rows();
        if (nh == 0) continue;  // empty pooled term contributed nothing
        const Matrix& cw = L.cross_w[g][h];
        std::vector<double> pool_grad(static_cast<std::size_t>(L.in_width[h]), 0.0);
        for (std::size_t o = 0; o < w; ++o) {
          const double dv = dsum[o];
          if (dv == 0.0) continue;
          double* grow =
              out.data() + cross_off[static_cast<std::size_t>(h)] +
              o * static_cast<std::size_t>(L.in_width[h]);
          const double* wrow = cw.row(o);
          for (int pch = 0; pch < L.in_width[h]; ++pch) {
            grow[pch] += dv * pooled[h][static_cast<std::size_t>(pch)];
            pool_grad[static_cast<std::size_t>(pch)] += dv * wrow[pch];
          }
        }
        // the pooled path spreads evenly over every item of group h
        for (std::size_t j2 = 0; j2 < nh; ++j2) {
          double* downrow = down[h].row(j2);
          for (int pch = 0; pch < L.in_width[h]; ++pch)
            downrow[pch] += pool_grad[static_cast<std::size_t>(pch)] / static_cast<double>(nh);
        }
      }
    }
    up = std::move(down);
  }
}

inline std::vector<double> network_backward(const SharedParams& p, const ForwardTrace& trace,
                                            const QMatrix& upstream) {
  std::vector<double> out(param_count(p), 0.0);
  network_backward_into(p, trace, upstream, 1.0, out);
  return out;
}

inline std::vector<double> network_backward(const SharedParams& p, const PhaseInput& s,
                                            const QMatrix& upstream) {
  ForwardTrace trace;
  network_forward(p, s, &trace);
  return network_backward(p, trace, upstream);
}

}  // namespace isq
