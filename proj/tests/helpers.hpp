#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "isq/dense.hpp"
#include "isq/groups.hpp"
#include "isq/net.hpp"
#include "isq/rng.hpp"

namespace isq::test {

inline Matrix random_rows(SeededRng& rng, std::size_t n, std::size_t width, double scale = 1.0) {
  Matrix m(n, width);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

inline PhaseInput random_phase_input(SeededRng& rng, const NetConfig& cfg, int k, int n_unsel,
                                     int n_ctx) {
  PhaseInput s;
  s.phase = k;
  s.groups[kSelected] = random_rows(rng, static_cast<std::size_t>(k),
                                    static_cast<std::size_t>(cfg.d_item + cfg.n_commands));
  s.groups[kUnselected] =
      random_rows(rng, static_cast<std::size_t>(n_unsel), static_cast<std::size_t>(cfg.d_item));
  s.groups[kContext] =
      random_rows(rng, static_cast<std::size_t>(n_ctx), static_cast<std::size_t>(cfg.d_context));
  return s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  double dev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::abs(a.data()[i] - b.data()[i]));
  return dev;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 1e300;
  double dev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dev = std::max(dev, std::abs(a[i] - b[i]));
  return dev;
}

}  // namespace isq::test
