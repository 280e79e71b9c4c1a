#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "isq/env_circle.hpp"
#include "isq/env_pp.hpp"

using namespace isq;

namespace {

CircleConfig small_cs() {
  CircleConfig cfg;
  cfg.n_selectable = 3;
  cfg.n_context = 1;
  cfg.n_select = 2;
  cfg.n_commands = 5;
  return cfg;
}

}  // namespace

TEST_CASE("cs_reward isolated circle earns its area") {
  std::vector<Circle> circles = {{0.0, 0.0, 0.2, true}, {0.45, 0.45, 0.01, true},
                                 {-0.45, -0.45, 0.01, false}};
  REQUIRE(std::abs(cs_reward(circles, {0}) - M_PI * 0.04) < 1e-12);
}

TEST_CASE("cs_reward overlap between selected circles only is worth zero") {
  std::vector<Circle> circles = {{0.0, 0.0, 0.2, true}, {0.1, 0.0, 0.2, true}};
  REQUIRE(cs_reward(circles, {0, 1}) == 0.0);
}

TEST_CASE("cs_reward unselectable overlap costs the area") {
  std::vector<Circle> circles = {{0.0, 0.0, 0.3, true}, {0.2, 0.0, 0.2, false}};
  REQUIRE(std::abs(cs_reward(circles, {0}) + M_PI * 0.09) < 1e-12);
}

TEST_CASE("cs_reward unselectable overlap dominates selected overlap") {
  std::vector<Circle> circles = {{0.0, 0.0, 0.2, true},
                                 {0.15, 0.0, 0.2, true},
                                 {-0.22, 0.0, 0.04, false}};
  // circle 0 touches both: case 1 wins, contribution -area; circle 1 touches
  // only circle 0: case 2, zero
  REQUIRE(std::abs(cs_reward(circles, {0, 1}) + M_PI * 0.04) < 1e-12);
}

TEST_CASE("cs_reward tangency is not a collision") {
  // distance 0.5 equals the radius sum exactly in double arithmetic
  std::vector<Circle> circles = {{0.0, 0.0, 0.25, true}, {0.5, 0.0, 0.25, false}};
  REQUIRE(std::abs(cs_reward(circles, {0}) - M_PI * 0.0625) < 1e-12);
}

TEST_CASE("cs_reward rejects duplicates and unselectable picks") {
  std::vector<Circle> circles = {{0.0, 0.0, 0.1, true}, {0.3, 0.0, 0.2, false}};
  REQUIRE_THROWS_AS(cs_reward(circles, {0, 0}), std::invalid_argument);
  REQUIRE_THROWS_AS(cs_reward(circles, {1}), std::invalid_argument);
}

TEST_CASE("circle selection reset respects invariants") {
  CircleSelection env(small_cs());
  SMDPObservation obs = env.reset(11);
  REQUIRE(obs.items.size() == 3);
  REQUIRE(obs.context.size() == 1);
  for (const Circle& c : env.circles()) {
    REQUIRE(c.r > 0.0);
    REQUIRE(c.r <= 0.45);
    REQUIRE(std::abs(c.x) <= 0.5);
    REQUIRE(std::abs(c.y) <= 0.5);
  }
}

TEST_CASE("circle selection step replaces exactly the selected circles") {
  CircleConfig cfg = small_cs();
  CircleSelection env(cfg);
  env.reset(13);
  env.step({{0, 0}, {2, 0}});
  // unreplaced selectable circles grew by at least 0.045, so exactly the K
  // selected ones carry the initial radius
  int fresh = 0;
  for (int i = 0; i < cfg.n_selectable; ++i)
    if (env.circles()[static_cast<std::size_t>(i)].r == cfg.init_radius) ++fresh;
  REQUIRE(fresh == 2);
}

TEST_CASE("circle invariants hold after many steps") {
  CircleConfig cfg = small_cs();
  CircleSelection env(cfg);
  env.reset(17);
  SeededRng rng(3);
  for (int t = 0; t < 200; ++t) {
    const int a = static_cast<int>(rng.uniform_int(3));
    const int b = (a + 1 + static_cast<int>(rng.uniform_int(2))) % 3;
    env.step({{a, static_cast<int>(rng.uniform_int(5))}, {b, static_cast<int>(rng.uniform_int(5))}});
    for (const Circle& c : env.circles()) {
      REQUIRE(c.r > 0.0);
      REQUIRE(c.r <= cfg.max_radius);
      REQUIRE(std::abs(c.x) <= 0.5);
      REQUIRE(std::abs(c.y) <= 0.5);
    }
  }
}

TEST_CASE("single stay command leaves positions unchanged before reward") {
  CircleConfig cfg = small_cs();
  cfg.n_commands = 1;
  CircleSelection env(cfg);
  env.reset(19);
  const Circle before = env.circles()[0];
  // with command 0 the selected circle is rewarded at its pre-step position
  CircleSelection probe(cfg);
  probe.reset(19);
  auto [reward, obs] = probe.step({{0, 0}, {1, 0}});
  (void)obs;
  std::vector<Circle> frozen = {before, env.circles()[1], env.circles()[2], env.circles()[3]};
  REQUIRE(std::abs(reward - cs_reward(frozen, {0, 1})) < 1e-12);
}

TEST_CASE("circle selection is deterministic under a seed") {
  CircleSelection a(small_cs()), b(small_cs());
  a.reset(23);
  b.reset(23);
  for (int t = 0; t < 20; ++t) {
    auto [ra, oa] = a.step({{0, 1}, {1, 2}});
    auto [rb, ob] = b.step({{0, 1}, {1, 2}});
    REQUIRE(ra == rb);
    REQUIRE(oa.items == ob.items);
    REQUIRE(oa.context == ob.context);
  }
}

TEST_CASE("circle featurization is the raw triple") {
  CircleSelection env(small_cs());
  SMDPObservation obs = env.reset(29);
  const Circle& c = env.circles()[0];
  REQUIRE(obs.items[0] == std::vector<double>{c.x, c.y, c.r});
}

TEST_CASE("predator prey catch requires two adjacent hunters") {
  PPConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 3;
  cfg.n_preys = 1;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(31);
  env.place({{4, 4}, {6, 6}, {0, 0}}, {{5, 5}});
  auto [reward, obs] = env.step({{0, 0}, {1, 0}});
  (void)obs;
  REQUIRE(reward == 1.0);
}

TEST_CASE("one adjacent predator is not enough") {
  PPConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 2;
  cfg.n_preys = 1;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(37);
  env.place({{4, 4}, {0, 0}}, {{5, 5}});
  auto [reward, obs] = env.step({{0, 0}, {1, 0}});
  (void)obs;
  REQUIRE(reward == 0.0);
}

TEST_CASE("far away predators earn nothing") {
  PPConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 2;
  cfg.n_preys = 2;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(41);
  env.place({{0, 0}, {9, 9}}, {{5, 5}, {3, 3}});
  auto [reward, obs] = env.step({{0, 0}, {1, 0}});
  (void)obs;
  REQUIRE(reward == 0.0);
}

TEST_CASE("standing on the prey cell does not count as the 8-neighborhood") {
  PPConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 2;
  cfg.n_preys = 1;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(43);
  env.place({{5, 5}, {4, 4}}, {{5, 5}});
  auto [reward, obs] = env.step({{0, 0}, {1, 0}});
  (void)obs;
  REQUIRE(reward == 0.0);
}

TEST_CASE("prey count stays constant and rewards stay in range") {
  PPConfig cfg;
  cfg.grid = 6;
  cfg.n_predators = 4;
  cfg.n_preys = 4;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(47);
  SeededRng rng(7);
  for (int t = 0; t < 300; ++t) {
    const int a = static_cast<int>(rng.uniform_int(4));
    const int b = (a + 1 + static_cast<int>(rng.uniform_int(3))) % 4;
    auto [reward, obs] = env.step(
        {{a, static_cast<int>(rng.uniform_int(5))}, {b, static_cast<int>(rng.uniform_int(5))}});
    REQUIRE(obs.context.size() == 4);
    REQUIRE(reward >= 0.0);
    REQUIRE(reward <= 4.0);
    REQUIRE(reward == std::floor(reward));
    for (const GridPos& p : env.predators()) {
      REQUIRE(p.x >= 0);
      REQUIRE(p.x < 6);
      REQUIRE(p.y >= 0);
      REQUIRE(p.y < 6);
    }
  }
}

TEST_CASE("grid featurization scales by the grid size") {
  PPConfig cfg;
  cfg.grid = 10;
  cfg.n_predators = 1;
  cfg.n_preys = 1;
  cfg.n_select = 1;
  PredatorPrey env(cfg);
  env.reset(53);
  env.place({{3, 7}}, {{1, 2}});
  // a stay command keeps the predator at (3, 7)
  auto [reward, obs] = env.step({{0, 0}});
  (void)reward;
  REQUIRE(obs.items[0] == std::vector<double>{0.3, 0.7});
}

TEST_CASE("predator prey rejects bad selections") {
  PPConfig cfg;
  cfg.grid = 5;
  cfg.n_predators = 3;
  cfg.n_preys = 1;
  cfg.n_select = 2;
  PredatorPrey env(cfg);
  env.reset(59);
  REQUIRE_THROWS_AS(env.step({{0, 0}, {0, 1}}), std::invalid_argument);
  REQUIRE_THROWS_AS(env.step({{0, 0}, {5, 0}}), std::invalid_argument);
  REQUIRE_THROWS_AS(env.step({{0, 9}, {1, 0}}), std::invalid_argument);
}
