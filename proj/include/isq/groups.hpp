#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "isq/matrix.hpp"
#include "isq/rng.hpp"

namespace isq {

// Item groups of a phase state. Selected carries (info, command) pairs,
// Unselected the remaining item infos, Context the unselectable/background
// items. Only Unselected rows ever appear in the Q output.
enum Group : int { kSelected = 0, kUnselected = 1, kContext = 2 };
constexpr int kGroupCount = 3;

inline const char* group_name(int g) {
  static const char* names[] = {"selected", "unselected", "context"};
  return names[g];
}

enum class Activation { Identity, ReLU, Tanh, Softplus };

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

inline std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
  }
  return "relu";
}

// One network input: per-group item feature rows. `selected` has phase-many
// rows of width d_item + n_commands (info with the one-hot command appended),
// `unselected` holds item infos, `context` is optional.
struct PhaseInput {
  int phase = 0;
  std::array<Matrix, kGroupCount> groups;

  Matrix& selected() { return groups[kSelected]; }
  const Matrix& selected() const { return groups[kSelected]; }
  Matrix& unselected() { return groups[kUnselected]; }
  const Matrix& unselected() const { return groups[kUnselected]; }
  Matrix& context() { return groups[kContext]; }
  const Matrix& context() const { return groups[kContext]; }
};

// Per-group index bijections. apply() uses gather semantics: the j-th output
// row is the sigma[j]-th input row.
struct Permutation {
  std::array<std::vector<std::size_t>, kGroupCount> sigma;

  static Permutation identity(std::size_t n_sel, std::size_t n_unsel, std::size_t n_ctx) {
    Permutation p;
    const std::size_t sizes[] = {n_sel, n_unsel, n_ctx};
    for (int g = 0; g < kGroupCount; ++g) {
      p.sigma[g].resize(sizes[g]);
      for (std::size_t i = 0; i < sizes[g]; ++i) p.sigma[g][i] = i;
    }
    return p;
  }

  static Permutation random(SeededRng& rng, std::size_t n_sel, std::size_t n_unsel,
                            std::size_t n_ctx);
};

inline bool is_bijection(const std::vector<std::size_t>& s) {
  std::vector<bool> seen(s.size(), false);
  for (std::size_t v : s) {
    if (v >= s.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline Matrix permute_rows(const std::vector<std::size_t>& sigma, const Matrix& m) {
  if (sigma.size() != m.rows())
    throw std::invalid_argument("permute_rows: permutation size " + std::to_string(sigma.size()) +
                                " vs " + std::to_string(m.rows()) + " rows");
  if (!is_bijection(sigma)) throw std::invalid_argument("permute_rows: not a bijection");
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.rows(); ++j)
    for (std::size_t c = 0; c < m.cols(); ++c) out(j, c) = m(sigma[j], c);
  return out;
}

inline PhaseInput apply_permutation(const Permutation& p, const PhaseInput& s) {
  PhaseInput out;
  out.phase = s.phase;
  for (int g = 0; g < kGroupCount; ++g) out.groups[g] = permute_rows(p.sigma[g], s.groups[g]);
  return out;
}

// compose(a, b) applies b first: apply(compose(a,b), s) == apply(a, apply(b, s)).
inline std::vector<std::size_t> compose(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compose: size mismatch");
  std::vector<std::size_t> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = b[a[j]];
  return out;
}

inline std::vector<std::size_t> inverse(const std::vector<std::size_t>& s) {
  std::vector<std::size_t> out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) out[s[j]] = j;
  return out;
}

inline Permutation Permutation::random(SeededRng& rng, std::size_t n_sel, std::size_t n_unsel,
                                       std::size_t n_ctx) {
  Permutation p;
  p.sigma[kSelected] = rng.permutation(n_sel);
  p.sigma[kUnselected] = rng.permutation(n_unsel);
  p.sigma[kContext] = rng.permutation(n_ctx);
  return p;
}

inline Permutation compose(const Permutation& a, const Permutation& b) {
  Permutation out;
  for (int g = 0; g < kGroupCount; ++g) out.sigma[g] = compose(a.sigma[g], b.sigma[g]);
  return out;
}

inline Permutation inverse(const Permutation& p) {
  Permutation out;
  for (int g = 0; g < kGroupCount; ++g) out.sigma[g] = inverse(p.sigma[g]);
  return out;
}

}  // namespace isq
