#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "isq/groups.hpp"
#include "isq/matrix.hpp"
#include "isq/net.hpp"
#include "isq/rng.hpp"

namespace isq {

// Plain fully connected network over the concatenated item features. Each
// layer keeps the per-group block structure as annotations so a dense net can
// be produced from tied parameters (project_params), permuted at item
// granularity, and its gradients pooled back onto the tied layout.
struct DenseLayer {
  Matrix w;  // out_dim x in_dim
  std::vector<double> b;
  Activation act = Activation::Identity;
  std::array<int, kGroupCount> in_counts{0, 0, 0};
  std::array<int, kGroupCount> in_width{0, 0, 0};
  std::array<int, kGroupCount> out_counts{0, 0, 0};
  int out_width = 0;

  int in_offset(int g) const {
    int off = 0;
    for (int h = 0; h < g; ++h) off += in_counts[h] * in_width[h];
    return off;
  }
  int out_offset(int g) const {
    int off = 0;
    for (int h = 0; h < g; ++h) off += out_counts[h] * out_width;
    return off;
  }
};

struct DenseNet {
  std::vector<DenseLayer> layers;
};

inline std::size_t dense_param_count(const DenseNet& net) {
  std::size_t n = 0;
  for (const auto& L : net.layers) n += L.w.size() + L.b.size();
  return n;
}

// Expands tied scalars into the equivalent unshared network for fixed group
// sizes: |selected| = k, |unselected| = N - k, |context| = u. The dense
// weight between output unit (g, j, o) and input unit (h, j', p) is
// self[g](o,p) when (g,j) == (h,j') plus cross[g][h](o,p) / |h|.
inline DenseNet project_params(const SharedParams& p, int k, int n_items, int u) {
  if (k < 0 || n_items <= k || u < 0) throw std::invalid_argument("project_params: bad sizes");
  std::array<int, kGroupCount> counts{k, n_items - k, u};
  if (p.cfg.n_groups() == 2 && u > 0)
    throw std::invalid_argument("project_params: net has no context group");

  DenseNet net;
  for (const auto& L : p.layers) {
    DenseLayer D;
    D.act = L.act;
    D.in_width = L.in_width;
    D.out_width = L.out_width;
    for (int g = 0; g < kGroupCount; ++g) {
      D.in_counts[g] = g < L.n_groups ? counts[g] : 0;
      D.out_counts[g] = L.outputs_group(g) ? counts[g] : 0;
    }
    int in_dim = 0, out_dim = 0;
    for (int g = 0; g < kGroupCount; ++g) {
      in_dim += D.in_counts[g] * D.in_width[g];
      out_dim += D.out_counts[g] * D.out_width;
    }
    D.w = Matrix(static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim));
    D.b.assign(static_cast<std::size_t>(out_dim), 0.0);

    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      for (int j = 0; j < D.out_counts[g]; ++j) {
        for (int o = 0; o < L.out_width; ++o) {
          const int row = D.out_offset(g) + j * D.out_width + o;
          D.b[static_cast<std::size_t>(row)] = L.bias[g][static_cast<std::size_t>(o)];
          for (int h = 0; h < L.n_groups; ++h) {
            if (D.in_counts[h] == 0) continue;
            const double inv = 1.0 / static_cast<double>(D.in_counts[h]);
            for (int j2 = 0; j2 < D.in_counts[h]; ++j2) {
              const int col = D.in_offset(h) + j2 * D.in_width[h];
              for (int pch = 0; pch < L.in_width[h]; ++pch) {
                double v = 0.0;
                if (L.pooled)
                  v = L.cross_w[g][h](static_cast<std::size_t>(o), static_cast<std::size_t>(pch)) *
                      inv;
                if (h == g && j2 == j)
                  v += L.self_w[g](static_cast<std::size_t>(o), static_cast<std::size_t>(pch));
                D.w(static_cast<std::size_t>(row), static_cast<std::size_t>(col + pch)) = v;
              }
            }
          }
        }
      }
    }
    net.layers.push_back(std::move(D));
  }
  return net;
}

// Concatenates a phase input in (selected, unselected, context) group order.
inline std::vector<double> concat_input(const PhaseInput& s) {
  std::vector<double> x;
  for (int g = 0; g < kGroupCount; ++g) {
    const Matrix& m = s.groups[g];
    x.insert(x.end(), m.data(), m.data() + m.size());
  }
  return x;
}

struct DenseTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> preacts;
};

inline std::vector<double> dense_forward(const DenseNet& net, const std::vector<double>& x,
                                         DenseTrace* trace = nullptr) {
  std::vector<double> cur = x;
  for (const auto& L : net.layers) {
    if (cur.size() != L.w.cols()) throw std::invalid_argument("dense_forward: width mismatch");
    std::vector<double> z(L.w.rows());
    for (std::size_t r = 0; r < L.w.rows(); ++r) {
      const double* wrow = L.w.row(r);
      double acc = L.b[r];
      for (std::size_t c = 0; c < L.w.cols(); ++c) acc += wrow[c] * cur[c];
      z[r] = acc;
    }
    std::vector<double> a(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(L.act, z[i]);
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->preacts.push_back(std::move(z));
    }
    cur = std::move(a);
  }
  return cur;
}

struct DenseGrads {
  std::vector<Matrix> dw;
  std::vector<std::vector<double>> db;

  DenseGrads() = default;
  explicit DenseGrads(const DenseNet& net) {
    for (const auto& L : net.layers) {
      dw.emplace_back(L.w.rows(), L.w.cols());
      db.emplace_back(L.b.size(), 0.0);
    }
  }

  void accumulate(const DenseGrads& other) {
    for (std::size_t l = 0; l < dw.size(); ++l) {
      for (std::size_t i = 0; i < dw[l].size(); ++i) dw[l].data()[i] += other.dw[l].data()[i];
      for (std::size_t i = 0; i < db[l].size(); ++i) db[l][i] += other.db[l][i];
    }
  }
};

// Backprop of sum(upstream .* output); returns weight/bias grads and fills
// `input_grad` if given.
inline DenseGrads dense_backward(const DenseNet& net, const std::vector<double>& x,
                                 const std::vector<double>& upstream,
                                 std::vector<double>* input_grad = nullptr) {
  DenseTrace trace;
  dense_forward(net, x, &trace);
  DenseGrads grads(net);
  std::vector<double> up = upstream;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& L = net.layers[li];
    const auto& z = trace.preacts[li];
    const auto& in = trace.inputs[li];
    if (up.size() != z.size()) throw std::invalid_argument("dense_backward: upstream mismatch");
    std::vector<double> delta(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) delta[i] = up[i] * activate_deriv(L.act, z[i]);
    std::vector<double> down(in.size(), 0.0);
    for (std::size_t r = 0; r < L.w.rows(); ++r) {
      const double dv = delta[r];
      grads.db[li][r] += dv;
      if (dv == 0.0) continue;
      double* grow = grads.dw[li].row(r);
      const double* wrow = L.w.row(r);
      for (std::size_t c = 0; c < L.w.cols(); ++c) {
        grow[c] += dv * in[c];
        down[c] += dv * wrow[c];
      }
    }
    up = std::move(down);
  }
  if (input_grad) *input_grad = up;
  return grads;
}

// Adjoint of project_params: pools dense gradients back onto the tied layout,
// weighting pooled positions by the same 1/|h| used in the expansion. The
// result lines up with flatten(shape).
inline std::vector<double> pool_dense_gradients(const SharedParams& shape, const DenseNet& net,
                                                const DenseGrads& dg) {
  if (shape.layers.size() != net.layers.size())
    throw std::invalid_argument("pool_dense_gradients: layer count mismatch");
  SharedParams pooled = make_shared_shape(shape.cfg);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const SharedLayerParams& L = shape.layers[li];
    SharedLayerParams& G = pooled.layers[li];
    const DenseLayer& D = net.layers[li];
    for (int g = 0; g < L.n_groups; ++g) {
      if (!L.outputs_group(g)) continue;
      for (int j = 0; j < D.out_counts[g]; ++j) {
        for (int o = 0; o < L.out_width; ++o) {
          const int row = D.out_offset(g) + j * D.out_width + o;
          G.bias[g][static_cast<std::size_t>(o)] += dg.db[li][static_cast<std::size_t>(row)];
          for (int h = 0; h < L.n_groups; ++h) {
            if (D.in_counts[h] == 0) continue;
            const double inv = 1.0 / static_cast<double>(D.in_counts[h]);
            for (int j2 = 0; j2 < D.in_counts[h]; ++j2) {
              const int col = D.in_offset(h) + j2 * D.in_width[h];
              for (int pch = 0; pch < L.in_width[h]; ++pch) {
                const double dv = dg.dw[li](static_cast<std::size_t>(row),
                                            static_cast<std::size_t>(col + pch));
                if (L.pooled)
                  G.cross_w[g][h](static_cast<std::size_t>(o), static_cast<std::size_t>(pch)) +=
                      dv * inv;
                if (h == g && j2 == j)
                  G.self_w[g](static_cast<std::size_t>(o), static_cast<std::size_t>(pch)) += dv;
              }
            }
          }
        }
      }
    }
  }
  return flatten(pooled);
}

// Acts a state permutation on dense weights: new W(a, b) = W(sigma(a),
// sigma(b)) at item granularity, so that the permuted net satisfies
// Q_{sigma(w)}(sigma(s)) = sigma_i(Q_w(s)).
inline DenseNet permute_dense(const DenseNet& net, const Permutation& perm) {
  // Maps a flat unit index to its sigma-image, walking the per-group blocks.
  auto map_index = [&perm](const std::array<int, kGroupCount>& counts,
                           const std::array<int, kGroupCount>& widths, int idx) -> int {
    int g = 0, off = 0;
    while (g < kGroupCount) {
      const int block = counts[g] * widths[g];
      if (idx < off + block) break;
      off += block;
      ++g;
    }
    const int local = idx - off;
    const int j = local / widths[g];
    const int ch = local % widths[g];
    return off + static_cast<int>(perm.sigma[g][static_cast<std::size_t>(j)]) * widths[g] + ch;
  };

  DenseNet out;
  for (const auto& L : net.layers) {
    DenseLayer P = L;
    const std::array<int, kGroupCount> out_widths{L.out_width, L.out_width, L.out_width};
    for (std::size_t r = 0; r < L.w.rows(); ++r) {
      const int rm = map_index(L.out_counts, out_widths, static_cast<int>(r));
      P.b[r] = L.b[static_cast<std::size_t>(rm)];
      for (std::size_t c = 0; c < L.w.cols(); ++c) {
        const int cm = map_index(L.in_counts, L.in_width, static_cast<int>(c));
        P.w(r, c) = L.w(static_cast<std::size_t>(rm), static_cast<std::size_t>(cm));
      }
    }
    out.layers.push_back(std::move(P));
  }
  return out;
}

inline std::vector<double> dense_flatten(const DenseNet& net) {
  std::vector<double> flat;
  for (const auto& L : net.layers) {
    flat.insert(flat.end(), L.w.data(), L.w.data() + L.w.size());
    flat.insert(flat.end(), L.b.begin(), L.b.end());
  }
  return flat;
}

inline void dense_unflatten(DenseNet& net, const std::vector<double>& flat) {
  std::size_t i = 0;
  for (auto& L : net.layers) {
    for (std::size_t j = 0; j < L.w.size(); ++j) L.w.data()[j] = flat.at(i++);
    for (auto& b : L.b) b = flat.at(i++);
  }
  if (i != flat.size()) throw std::invalid_argument("dense_unflatten: size mismatch");
}

inline std::vector<double> dense_flatten(const DenseGrads& grads) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.dw.size(); ++l) {
    flat.insert(flat.end(), grads.dw[l].data(), grads.dw[l].data() + grads.dw[l].size());
    flat.insert(flat.end(), grads.db[l].begin(), grads.db[l].end());
  }
  return flat;
}

// Fresh dense net with the same block structure as a projection, e.g. for a
// no-sharing baseline. Uniform init in +-1/sqrt(fan_in).
inline DenseNet make_dense_like(const SharedParams& shape, int k, int n_items, int u,
                                SeededRng& rng) {
  DenseNet net = project_params(shape, k, n_items, u);
  for (auto& L : net.layers) {
    const double bound = L.w.cols() > 0 ? 1.0 / std::sqrt(static_cast<double>(L.w.cols())) : 0.0;
    for (std::size_t i = 0; i < L.w.size(); ++i) L.w.data()[i] = rng.uniform(-bound, bound);
    for (auto& b : L.b) b = rng.uniform(-bound, bound);
  }
  return net;
}

}  // namespace isq
