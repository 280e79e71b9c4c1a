#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace isq {

// Adam with bias correction. Learning rate 0.001 is the published training
// setting; the decay/epsilon defaults are the usual ones.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0, double lr = 1e-3)
      : m(n, 0.0), v(n, 0.0), alpha(lr) {}
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.alpha * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace isq
