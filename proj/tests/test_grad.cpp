#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "isq/dense.hpp"
#include "isq/net.hpp"

using namespace isq;
using isq::test::max_abs_diff;
using isq::test::random_phase_input;

namespace {

double loss_of(const SharedParams& p, const PhaseInput& s, const QMatrix& upstream) {
  QMatrix q = network_forward(p, s);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += upstream.data()[i] * q.data()[i];
  return acc;
}

}  // namespace

TEST_CASE("zero upstream gives a zero gradient") {
  SeededRng rng(51);
  NetConfig cfg;
  cfg.d_item = 2;
  cfg.n_commands = 2;
  cfg.d_context = 2;
  cfg.channels = 4;
  cfg.depth = 2;
  cfg.activation = Activation::Tanh;
  SharedParams p = make_shared_params(cfg, rng);
  PhaseInput s = random_phase_input(rng, cfg, 1, 3, 2);
  QMatrix upstream(3, 2);
  auto grad = network_backward(p, s, upstream);
  for (double g : grad) REQUIRE(g == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
  SeededRng rng(53);
  for (int trial = 0; trial < 12; ++trial) {
    NetConfig cfg;
    cfg.d_item = 2;
    cfg.n_commands = 1 + static_cast<int>(rng.uniform_int(3));
    cfg.d_context = trial % 2 == 0 ? 2 : 0;
    cfg.channels = 4;
    cfg.depth = static_cast<int>(rng.uniform_int(3));
    cfg.activation = Activation::Tanh;
    SharedParams p = make_shared_params(cfg, rng);
    const int k = static_cast<int>(rng.uniform_int(3));
    PhaseInput s = random_phase_input(rng, cfg, k, 2 + static_cast<int>(rng.uniform_int(3)),
                                      cfg.d_context > 0 ? 2 : 0);
    QMatrix upstream = isq::test::random_rows(rng, s.unselected().rows(),
                                              static_cast<std::size_t>(cfg.n_commands));

    auto analytic = network_backward(p, s, upstream);
    auto flat = flatten(p);
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      auto plus = flat, minus = flat;
      plus[i] += h;
      minus[i] -= h;
      SharedParams pp = make_shared_shape(cfg), pm = make_shared_shape(cfg);
      unflatten(pp, plus);
      unflatten(pm, minus);
      const double fd = (loss_of(pp, s, upstream) - loss_of(pm, s, upstream)) / (2 * h);
      const double rel = std::abs(analytic[i] - fd) / std::max(1e-6, std::abs(fd));
      REQUIRE(rel <= 1e-4);
    }
  }
}

TEST_CASE("tied gradient equals the pooled dense gradient") {
  SeededRng rng(59);
  for (int trial = 0; trial < 10; ++trial) {
    NetConfig cfg;
    cfg.d_item = 2;
    cfg.n_commands = 2;
    cfg.d_context = trial % 2 == 0 ? 2 : 0;
    cfg.channels = 3;
    cfg.depth = 1 + static_cast<int>(rng.uniform_int(2));
    cfg.activation = Activation::Tanh;
    SharedParams p = make_shared_params(cfg, rng);
    const int k = 1 + static_cast<int>(rng.uniform_int(2));
    const int n_unsel = 2 + static_cast<int>(rng.uniform_int(3));
    const int n_ctx = cfg.d_context > 0 ? 2 : 0;
    PhaseInput s = random_phase_input(rng, cfg, k, n_unsel, n_ctx);
    QMatrix upstream = isq::test::random_rows(rng, static_cast<std::size_t>(n_unsel),
                                              static_cast<std::size_t>(cfg.n_commands));

    auto tied = network_backward(p, s, upstream);

    DenseNet dense = project_params(p, k, k + n_unsel, n_ctx);
    std::vector<double> up_flat(upstream.data(), upstream.data() + upstream.size());
    DenseGrads dg = dense_backward(dense, concat_input(s), up_flat);
    auto pooled = pool_dense_gradients(p, dense, dg);

    REQUIRE(max_abs_diff(tied, pooled) <= 1e-8);
  }
}

TEST_CASE("local-only nets keep cross gradients at zero") {
  SeededRng rng(61);
  NetConfig cfg;
  cfg.d_item = 2;
  cfg.n_commands = 2;
  cfg.channels = 4;
  cfg.depth = 1;
  cfg.activation = Activation::Tanh;
  cfg.pooled = false;
  SharedParams p = make_shared_params(cfg, rng);
  PhaseInput s = random_phase_input(rng, cfg, 1, 3, 0);
  QMatrix upstream = isq::test::random_rows(rng, 3, 2);
  auto grad = network_backward(p, s, upstream);
  // walk the canonical layout and confirm every cross entry is zero
  SharedParams g = make_shared_shape(cfg);
  unflatten(g, grad);
  for (const auto& L : g.layers)
    for (int gg = 0; gg < L.n_groups; ++gg) {
      if (!L.outputs_group(gg)) continue;
      for (int h = 0; h < L.n_groups; ++h)
        for (std::size_t i = 0; i < L.cross_w[gg][h].size(); ++i)
          REQUIRE(L.cross_w[gg][h].data()[i] == 0.0);
    }
}
