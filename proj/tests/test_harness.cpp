#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "isq/harness.hpp"

using namespace isq;

namespace {

class ZeroRewardEnv : public SMDPInterface {
 public:
  SMDPDescriptor descriptor() const override { return {3, 1, 1, 1, 0, 0}; }
  SMDPObservation reset(std::uint64_t) override { return observe(); }
  std::pair<double, SMDPObservation> step(const std::vector<std::pair<int, int>>&) override {
    return {0.0, observe()};
  }

 private:
  SMDPObservation observe() const {
    SMDPObservation obs;
    obs.items = {{0.0}, {0.0}, {0.0}};
    return obs;
  }
};

nlohmann::json tiny_config() {
  return nlohmann::json::parse(R"({
    "env": {"kind": "circle", "n": 3, "u": 1, "k": 1, "commands": 1},
    "agent": {"kind": "isq", "sharing": "I"},
    "train": {"steps": 120, "channels": 3, "depth": 1, "minibatch": 8, "buffer": 64},
    "seeds": [0, 1],
    "eval": {"interval": 60, "episodes": 2, "episode_length": 20}
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("sha1 known vectors") {
  REQUIRE(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  REQUIRE(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  REQUIRE(sha1_hex("The quick brown fox jumps over the lazy dog") ==
          "2fd4e1c67a2d28fced849ee1bb76e7391b93eb12");
}

TEST_CASE("t table and mean ci") {
  REQUIRE(t_critical_975(19) == 2.093);
  REQUIRE(t_critical_975(3) == 3.182);
  const MeanCi mc = mean_ci({1.0, 2.0, 3.0});
  REQUIRE(mc.mean == 2.0);
  REQUIRE(std::abs(mc.ci95 - 4.303 / std::sqrt(3.0)) < 1e-12);
  REQUIRE(mean_ci({5.0}).ci95 == 0.0);
}

TEST_CASE("evaluating a zero-reward environment gives zero mean and ci") {
  RandomPolicy policy(1);
  auto factory = [] { return std::make_unique<ZeroRewardEnv>(); };
  const EvalReport r = evaluate(policy, factory, 5, 10, 3);
  REQUIRE(r.mean == 0.0);
  REQUIRE(r.ci95 == 0.0);
  REQUIRE(r.episodes == 5);
}

TEST_CASE("evaluation is deterministic under a seed") {
  ExperimentConfig cfg = parse_config(tiny_config());
  auto factory = [&cfg] { return make_env(cfg); };
  RandomPolicy policy(1);
  const EvalReport a = evaluate(policy, factory, 4, 25, 11);
  const EvalReport b = evaluate(policy, factory, 4, 25, 11);
  REQUIRE(a.episode_rewards == b.episode_rewards);
}

TEST_CASE("config parsing rejects unknown keys") {
  auto j = tiny_config();
  j["surprise"] = 1;
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);
  j = tiny_config();
  j["env"]["extra"] = 2;
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);
  j = tiny_config();
  j["train"]["momentum"] = 0.9;
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);
  j = tiny_config();
  j.erase("agent");
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("single-command agent forces one command") {
  auto j = tiny_config();
  j["env"]["commands"] = 5;
  j["agent"]["kind"] = "isq1";
  const ExperimentConfig cfg = parse_config(j);
  REQUIRE(cfg.circle.n_commands == 1);
}

TEST_CASE("config hash is stable and sensitive") {
  const ExperimentConfig a = parse_config(tiny_config());
  const ExperimentConfig b = parse_config(tiny_config());
  REQUIRE(config_hash(a) == config_hash(b));
  auto j = tiny_config();
  j["train"]["steps"] = 121;
  REQUIRE(config_hash(parse_config(j)) != config_hash(a));
}

TEST_CASE("presets parse") {
  for (const std::string name : {"cs-small", "cs-medium", "pp-small"}) {
    const ExperimentConfig cfg = parse_config(preset_config(name));
    REQUIRE(!cfg.seeds.empty());
  }
  REQUIRE_THROWS_AS(preset_config("nope"), ConfigError);
}

TEST_CASE("run_experiment writes reproducible hashed outputs") {
  const ExperimentConfig cfg = parse_config(tiny_config());
  const std::string dir1 = "/tmp/isq_test_exp1";
  const std::string dir2 = "/tmp/isq_test_exp2";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  const ExperimentResult r1 = run_experiment(cfg, dir1);
  const ExperimentResult r2 = run_experiment(cfg, dir2);

  const std::string tag = r1.hash.substr(0, 8);
  for (const std::string name :
       {"curve_" + tag + "_seed0.csv", "curve_" + tag + "_seed1.csv", "summary_" + tag + ".csv",
        "manifest_" + tag + ".json"}) {
    REQUIRE(std::filesystem::exists(std::filesystem::path(dir1) / name));
    REQUIRE(slurp(std::filesystem::path(dir1) / name) ==
            slurp(std::filesystem::path(dir2) / name));
  }

  // summary rows recompute from the per-seed curves
  REQUIRE(r1.outcomes.size() == 2);
  const auto& c0 = r1.outcomes[0].curve;
  const auto& c1 = r1.outcomes[1].curve;
  REQUIRE(c0.size() == 2);
  std::ifstream summary(std::filesystem::path(dir1) / ("summary_" + tag + ".csv"));
  std::string line;
  std::getline(summary, line);
  REQUIRE(line == "step,seed,mean_reward,ci95");
  for (std::size_t i = 0; i < c0.size(); ++i) {
    REQUIRE(std::getline(summary, line));
    std::istringstream row(line);
    std::string step_s, seed_s, mean_s, ci_s;
    std::getline(row, step_s, ',');
    std::getline(row, seed_s, ',');
    std::getline(row, mean_s, ',');
    std::getline(row, ci_s, ',');
    REQUIRE(seed_s == "-1");
    const MeanCi expect = mean_ci({c0[i].mean_reward, c1[i].mean_reward});
    REQUIRE(std::abs(std::stod(mean_s) - expect.mean) < 1e-12);
    REQUIRE(std::abs(std::stod(ci_s) - expect.ci95) < 1e-12);
  }

  // the manifest lists every output and carries the full hash
  const auto manifest =
      nlohmann::json::parse(slurp(std::filesystem::path(dir1) / ("manifest_" + tag + ".json")));
  REQUIRE(manifest.at("config_hash") == r1.hash);
  for (const auto& f : r1.files)
    if (f.find("manifest") == std::string::npos)
      REQUIRE(std::find(manifest.at("outputs").begin(), manifest.at("outputs").end(),
                        nlohmann::json(f)) != manifest.at("outputs").end());
}

TEST_CASE("transfer at the training size reproduces the final evaluation") {
  const ExperimentConfig cfg = parse_config(tiny_config());
  const SeedOutcome outcome = run_seed(cfg, 0);
  const TransferReport moved = transfer_evaluate(outcome.checkpoint, cfg, 3, 0);
  REQUIRE(moved.eval.mean == outcome.final_eval.mean);
  REQUIRE(moved.params_before == moved.params_after);
  REQUIRE(moved.ei_deviation <= 1e-10);
}

TEST_CASE("transfer rebuilds the same scalars at a larger size") {
  const ExperimentConfig cfg = parse_config(tiny_config());
  const SeedOutcome outcome = run_seed(cfg, 1);
  const TransferReport moved = transfer_evaluate(outcome.checkpoint, cfg, 9, 1);
  REQUIRE(moved.params_before == moved.params_after);
  REQUIRE(moved.ei_deviation <= 1e-10);
  REQUIRE(moved.eval.episodes == cfg.eval.episodes);
}

TEST_CASE("transfer rejects dense checkpoints") {
  const ExperimentConfig cfg = parse_config(tiny_config());
  nlohmann::json dense_ckpt{{"format_version", 1},
                            {"agent", "vanilla"},
                            {"dense", {{"layers", nlohmann::json::array()}}}};
  REQUIRE_THROWS_AS(transfer_evaluate(dense_ckpt, cfg, 5, 0), std::invalid_argument);
}

TEST_CASE("rsq and eq agents run through the harness") {
  auto j = tiny_config();
  j["seeds"] = {0};
  j["env"]["commands"] = 5;
  for (const std::string kind : {"rsq", "eq", "myopic"}) {
    j["agent"]["kind"] = kind;
    const ExperimentConfig cfg = parse_config(j);
    const SeedOutcome outcome = run_seed(cfg, 0);
    REQUIRE(outcome.final_eval.episodes == 2);
  }
}

TEST_CASE("vanilla and idqn agents run through the harness") {
  auto j = tiny_config();
  j["seeds"] = {0};
  for (const std::string kind : {"vanilla", "sorting", "idqn"}) {
    j["agent"]["kind"] = kind;
    const ExperimentConfig cfg = parse_config(j);
    const SeedOutcome outcome = run_seed(cfg, 0);
    REQUIRE(outcome.final_eval.episodes == 2);
    if (kind != "idqn") REQUIRE(outcome.checkpoint.contains("dense"));
  }
}

TEST_CASE("svg plot contains a polyline") {
  LearningCurve curve{{100, 1.0, 0.2}, {200, 2.0, 0.3}};
  const std::string svg = svg_plot(curve);
  REQUIRE(svg.find("<svg") != std::string::npos);
  REQUIRE(svg.find("polyline") != std::string::npos);
  REQUIRE(svg.find("polygon") != std::string::npos);
}
