#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "isq/serialize.hpp"

using namespace isq;

namespace {

NetCheckpoint sample_checkpoint(std::uint64_t seed, int n_sets) {
  NetConfig cfg;
  cfg.d_item = 3;
  cfg.n_commands = 5;
  cfg.d_context = 3;
  cfg.channels = 6;
  cfg.depth = 2;
  cfg.activation = Activation::ReLU;
  SeededRng rng(seed);
  NetCheckpoint ckpt;
  ckpt.n_phases = 4;
  ckpt.cfg = cfg;
  for (int m = 0; m < n_sets; ++m) ckpt.sets.push_back(make_shared_params(cfg, rng));
  for (int k = 0; k < 4; ++k) ckpt.phase_to_set.push_back(k % n_sets);
  return ckpt;
}

}  // namespace

TEST_CASE("checkpoint json round-trip is bit exact") {
  NetCheckpoint ckpt = sample_checkpoint(5, 2);
  const std::string text = checkpoint_to_string(ckpt);
  NetCheckpoint back = checkpoint_from_string(text);
  REQUIRE(back.n_phases == ckpt.n_phases);
  REQUIRE(back.phase_to_set == ckpt.phase_to_set);
  REQUIRE(back.sets.size() == ckpt.sets.size());
  for (std::size_t m = 0; m < ckpt.sets.size(); ++m)
    REQUIRE(flatten(back.sets[m]) == flatten(ckpt.sets[m]));
  // and the serialized form itself is stable
  REQUIRE(checkpoint_to_string(back) == text);
}

TEST_CASE("checkpoint rejects bad documents") {
  NetCheckpoint ckpt = sample_checkpoint(7, 1);
  nlohmann::json j = checkpoint_to_json(ckpt);
  SECTION("wrong version") {
    j["format_version"] = 2;
    REQUIRE_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);
  }
  SECTION("unmapped phase") {
    j["param_sets"][0]["phases"] = {0, 1, 2};
    REQUIRE_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);
  }
  SECTION("doubly mapped phase") {
    j["param_sets"][0]["phases"] = {0, 1, 2, 3, 3};
    REQUIRE_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);
  }
  SECTION("truncated scalars") {
    auto scalars = j["param_sets"][0]["scalars"].get<std::vector<double>>();
    scalars.pop_back();
    j["param_sets"][0]["scalars"] = scalars;
    REQUIRE_THROWS_AS(checkpoint_from_json(j), std::invalid_argument);
  }
}

TEST_CASE("checkpoint preserves extreme doubles") {
  NetCheckpoint ckpt = sample_checkpoint(11, 1);
  auto flat = flatten(ckpt.sets[0]);
  flat[0] = 1.0 / 3.0;
  flat[1] = 1e-300;
  flat[2] = -0.1;
  unflatten(ckpt.sets[0], flat);
  NetCheckpoint back = checkpoint_from_string(checkpoint_to_string(ckpt));
  REQUIRE(flatten(back.sets[0]) == flat);
}
