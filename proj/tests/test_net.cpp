#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "isq/net.hpp"

using namespace isq;
using isq::test::max_abs_diff;
using isq::test::random_phase_input;

namespace {

// Single-channel layer over the unselected group only: W_self = W_cross = 1.
SharedLayerParams hand_layer() {
  SharedLayerParams L;
  L.n_groups = 2;
  L.in_width = {1, 1, 0};
  L.out_width = 1;
  L.act = Activation::Identity;
  detail::init_layer_shapes(L);
  L.self_w[kUnselected](0, 0) = 1.0;
  L.cross_w[kUnselected][kUnselected](0, 0) = 1.0;
  return L;
}

NetConfig small_cfg(int d_item, int n_commands, int d_context, int channels, int depth,
                    Activation act = Activation::Tanh) {
  NetConfig cfg;
  cfg.d_item = d_item;
  cfg.n_commands = n_commands;
  cfg.d_context = d_context;
  cfg.channels = channels;
  cfg.depth = depth;
  cfg.activation = act;
  return cfg;
}

}  // namespace

TEST_CASE("layer_forward mean-pooled hand example") {
  SharedLayerParams L = hand_layer();
  GroupedRows in;
  in[kUnselected] = Matrix(2, 1);
  in[kUnselected](0, 0) = 1.0;
  in[kUnselected](1, 0) = 3.0;
  GroupedRows out = layer_forward(L, in);
  // pooled mean is 2, so outputs are x_j + 2
  REQUIRE(out[kUnselected](0, 0) == 3.0);
  REQUIRE(out[kUnselected](1, 0) == 5.0);
}

TEST_CASE("layer_forward constant map with zero weights") {
  SeededRng rng(3);
  NetConfig cfg = small_cfg(2, 1, 2, 4, 1, Activation::Identity);
  SharedParams p = make_shared_shape(cfg);
  const double beta = 0.37;
  for (auto& L : p.layers)
    for (int g = 0; g < L.n_groups; ++g)
      if (L.outputs_group(g))
        for (double& b : L.bias[g]) b = beta;
  PhaseInput s = random_phase_input(rng, cfg, 1, 3, 2);
  GroupedRows out = layer_forward(p.layers[0], s.groups);
  for (int g = 0; g < kGroupCount; ++g)
    for (std::size_t i = 0; i < out[g].size(); ++i) REQUIRE(out[g].data()[i] == beta);
}

TEST_CASE("layer_forward rejects width mismatch") {
  SharedLayerParams L = hand_layer();
  GroupedRows in;
  in[kUnselected] = Matrix(2, 3);
  REQUIRE_THROWS_AS(layer_forward(L, in), std::invalid_argument);
}

TEST_CASE("network_forward identity permutation is a no-op") {
  SeededRng rng(17);
  NetConfig cfg = small_cfg(3, 5, 2, 6, 2);
  SharedParams p = make_shared_params(cfg, rng);
  PhaseInput s = random_phase_input(rng, cfg, 2, 4, 2);
  Permutation id = Permutation::identity(2, 4, 2);
  REQUIRE(max_abs_diff(network_forward(p, s), network_forward(p, apply_permutation(id, s))) ==
          0.0);
}

TEST_CASE("network_forward is equi-invariant") {
  SeededRng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = static_cast<int>(rng.uniform_int(3));
    const int n_unsel = 2 + static_cast<int>(rng.uniform_int(5));
    const int n_ctx = static_cast<int>(rng.uniform_int(3));
    NetConfig cfg = small_cfg(2 + static_cast<int>(rng.uniform_int(3)),
                              1 + static_cast<int>(rng.uniform_int(5)), 2, 5,
                              static_cast<int>(rng.uniform_int(3)));
    SharedParams p = make_shared_params(cfg, rng);
    PhaseInput s = random_phase_input(rng, cfg, k, n_unsel, n_ctx);
    Permutation perm = Permutation::random(rng, static_cast<std::size_t>(k),
                                           static_cast<std::size_t>(n_unsel),
                                           static_cast<std::size_t>(n_ctx));
    QMatrix lhs = network_forward(p, apply_permutation(perm, s));
    QMatrix rhs = permute_rows(perm.sigma[kUnselected], network_forward(p, s));
    REQUIRE(max_abs_diff(lhs, rhs) <= 1e-10);
  }
}

TEST_CASE("permuting only selected or context leaves output invariant") {
  SeededRng rng(29);
  NetConfig cfg = small_cfg(3, 2, 2, 6, 2);
  SharedParams p = make_shared_params(cfg, rng);
  PhaseInput s = random_phase_input(rng, cfg, 3, 4, 3);
  Permutation perm = Permutation::identity(3, 4, 3);
  perm.sigma[kSelected] = rng.permutation(3);
  perm.sigma[kContext] = rng.permutation(3);
  REQUIRE(max_abs_diff(network_forward(p, s), network_forward(p, apply_permutation(perm, s))) <=
          1e-10);
}

TEST_CASE("psi-only network equals the output layer") {
  NetConfig cfg;
  cfg.d_item = 1;
  cfg.n_commands = 1;
  cfg.d_context = 0;
  cfg.channels = 1;
  cfg.depth = 0;
  SharedParams p = make_shared_shape(cfg);
  p.layers[0].self_w[kUnselected](0, 0) = 1.0;
  p.layers[0].cross_w[kUnselected][kUnselected](0, 0) = 1.0;
  PhaseInput s;
  s.phase = 0;
  s.groups[kUnselected] = Matrix(2, 1);
  s.groups[kUnselected](0, 0) = 1.0;
  s.groups[kUnselected](1, 0) = 3.0;
  QMatrix q = network_forward(p, s);
  REQUIRE(q(0, 0) == 3.0);
  REQUIRE(q(1, 0) == 5.0);
}

TEST_CASE("network_forward rejects an empty unselected group") {
  SeededRng rng(31);
  NetConfig cfg = small_cfg(2, 1, 0, 4, 1);
  SharedParams p = make_shared_params(cfg, rng);
  PhaseInput s;
  s.phase = 0;
  s.groups[kUnselected] = Matrix(0, 2);
  REQUIRE_THROWS_AS(network_forward(p, s), std::invalid_argument);
}

TEST_CASE("param_count for the single-channel two-group layer") {
  SharedParams p;
  p.cfg = small_cfg(1, 1, 0, 1, 1);
  SharedLayerParams L;
  L.n_groups = 2;
  L.in_width = {1, 1, 0};
  L.out_width = 1;
  detail::init_layer_shapes(L);
  p.layers.push_back(L);
  // 2 self + 4 cross + 2 bias
  REQUIRE(param_count(p) == 8);
}

TEST_CASE("param_count rejects an empty network") {
  SharedParams p;
  REQUIRE_THROWS_AS(param_count(p), std::invalid_argument);
}

TEST_CASE("param_count does not depend on item counts") {
  SeededRng rng(37);
  NetConfig cfg = small_cfg(3, 5, 3, 16, 3);
  SharedParams p = make_shared_params(cfg, rng);
  const std::size_t count = param_count(p);
  // the same parameter vector evaluates at any N; only dense projections grow
  for (int n : {4, 50, 200}) {
    PhaseInput s = random_phase_input(rng, cfg, 2, n - 2, 3);
    REQUIRE_NOTHROW(network_forward(p, s));
  }
  REQUIRE(param_count(p) == count);
  REQUIRE(flatten(p).size() == count);
}

TEST_CASE("flatten and unflatten round-trip") {
  SeededRng rng(41);
  NetConfig cfg = small_cfg(2, 3, 2, 5, 2);
  SharedParams p = make_shared_params(cfg, rng);
  auto flat = flatten(p);
  SharedParams q = make_shared_shape(cfg);
  unflatten(q, flat);
  REQUIRE(flatten(q) == flat);
  flat.push_back(0.0);
  REQUIRE_THROWS_AS(unflatten(q, flat), std::invalid_argument);
}

TEST_CASE("empty context group does not change the output") {
  SeededRng rng(43);
  NetConfig cfg2 = small_cfg(3, 2, 0, 5, 2);
  NetConfig cfg3 = cfg2;
  cfg3.d_context = 4;
  SharedParams p3 = make_shared_params(cfg3, rng);
  // copy the selected/unselected scalars into a two-group net
  SharedParams p2 = make_shared_shape(cfg2);
  for (std::size_t li = 0; li < p2.layers.size(); ++li) {
    auto& L2 = p2.layers[li];
    const auto& L3 = p3.layers[li];
    for (int g = 0; g < 2; ++g) {
      if (!L2.outputs_group(g)) continue;
      L2.self_w[g] = L3.self_w[g];
      for (int h = 0; h < 2; ++h) L2.cross_w[g][h] = L3.cross_w[g][h];
      L2.bias[g] = L3.bias[g];
    }
  }
  PhaseInput s = random_phase_input(rng, cfg2, 2, 4, 0);
  PhaseInput s3 = s;
  s3.groups[kContext] = Matrix(0, 4);
  REQUIRE(max_abs_diff(network_forward(p2, s), network_forward(p3, s3)) == 0.0);
}

TEST_CASE("permutation composition and inverse laws") {
  SeededRng rng(47);
  Permutation a = Permutation::random(rng, 3, 5, 2);
  Permutation b = Permutation::random(rng, 3, 5, 2);
  PhaseInput s;
  s.phase = 3;
  s.groups[kSelected] = isq::test::random_rows(rng, 3, 2);
  s.groups[kUnselected] = isq::test::random_rows(rng, 5, 2);
  s.groups[kContext] = isq::test::random_rows(rng, 2, 2);

  PhaseInput lhs = apply_permutation(compose(a, b), s);
  PhaseInput rhs = apply_permutation(a, apply_permutation(b, s));
  for (int g = 0; g < kGroupCount; ++g) REQUIRE(max_abs_diff(lhs.groups[g], rhs.groups[g]) == 0.0);

  PhaseInput round = apply_permutation(inverse(a), apply_permutation(a, s));
  for (int g = 0; g < kGroupCount; ++g)
    REQUIRE(max_abs_diff(round.groups[g], s.groups[g]) == 0.0);
}

TEST_CASE("swap applied twice is the identity") {
  Permutation p = Permutation::identity(0, 2, 0);
  std::swap(p.sigma[kUnselected][0], p.sigma[kUnselected][1]);
  Matrix m(2, 1);
  m(0, 0) = 1.0;
  m(1, 0) = 2.0;
  Matrix twice = permute_rows(p.sigma[kUnselected], permute_rows(p.sigma[kUnselected], m));
  REQUIRE(twice == m);
}

TEST_CASE("permute_rows rejects size mismatch") {
  Matrix m(3, 1);
  REQUIRE_THROWS_AS(permute_rows(std::vector<std::size_t>{0, 1}, m), std::invalid_argument);
}

TEST_CASE("initialization is deterministic in the seed") {
  NetConfig cfg = small_cfg(3, 5, 2, 8, 2);
  SeededRng r1(99), r2(99);
  REQUIRE(flatten(make_shared_params(cfg, r1)) == flatten(make_shared_params(cfg, r2)));
}
