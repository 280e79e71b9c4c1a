#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "isq/checks.hpp"
#include "isq/harness.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw isq::ConfigError("cannot open " + path);
  return nlohmann::json::parse(in);
}

isq::ExperimentConfig load_config(const std::string& config_path, const std::string& preset) {
  if (!preset.empty()) return isq::parse_config(isq::preset_config(preset));
  if (config_path.empty()) throw isq::ConfigError("either --config or --preset is required");
  return isq::parse_config(load_json(config_path));
}

std::unique_ptr<isq::Policy> policy_from_checkpoint(const nlohmann::json& ckpt,
                                                    const isq::SMDPDescriptor& desc) {
  const std::string agent = ckpt.at("agent").get<std::string>();
  if (ckpt.contains("dense")) {
    isq::DenseAgent dense;
    dense.net = isq::detail::dense_from_json(ckpt.at("dense"));
    dense.target = dense.net;
    dense.desc = desc;
    dense.sorting = agent == "sorting";
    return std::make_unique<isq::DensePolicy>(std::move(dense));
  }
  isq::NetCheckpoint net = isq::checkpoint_from_json(ckpt.at("net"));
  if (agent == "idqn") return std::make_unique<isq::IDQNPolicy>(net.sets.at(0), desc);
  const isq::PolicyKind kind =
      agent == "rsq" ? isq::PolicyKind::RandomItem : isq::PolicyKind::Greedy;
  return std::make_unique<isq::CascadedPolicy>(isq::CascadedQ::from_checkpoint(net), desc, kind);
}

int run_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<isq::CheckReport> reports;
  auto want = [&suite](const char* name) { return suite == "all" || suite == name; };
  if (want("ei")) reports.push_back(isq::check_ei(1000, 1e-10, seed));
  if (want("grad")) reports.push_back(isq::check_gradients(100, 1e-4, seed));
  if (want("theorem1")) reports.push_back(isq::check_theorem1(50, 1e-8, seed));
  if (want("lemma")) reports.push_back(isq::check_loss_invariance(50, 20, 1e-10, seed));
  if (want("equiv")) reports.push_back(isq::check_equivalence(20, 1e-9, seed));
  if (want("universal")) reports.push_back(isq::check_universality(seed));
  if (reports.empty()) {
    std::cerr << "unknown suite: " << suite << "\n";
    return 2;
  }
  bool all_passed = true;
  for (const auto& r : reports) {
    std::cout << isq::check_report_to_json(r).dump() << "\n";
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

int run_bench() {
  using clock = std::chrono::steady_clock;
  nlohmann::json out;

  isq::SeededRng rng(0);
  isq::Matrix a(128, 128), b(128, 128);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-1, 1);
  auto t0 = clock::now();
  for (int i = 0; i < 50; ++i) isq::Matrix c = isq::matmul(a, b);
  out["matmul_128_per_s"] = 50.0 / std::chrono::duration<double>(clock::now() - t0).count();

  isq::NetConfig cfg;
  cfg.d_item = 3;
  cfg.n_commands = 5;
  cfg.d_context = 3;
  cfg.channels = 48;
  cfg.depth = 3;
  isq::SharedParams p = isq::make_shared_params(cfg, rng);
  isq::PhaseInput s;
  s.phase = 2;
  auto fill = [&rng](isq::Matrix& m, std::size_t r, std::size_t c) {
    m = isq::Matrix(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
  };
  fill(s.groups[isq::kSelected], 2, 8);
  fill(s.groups[isq::kUnselected], 18, 3);
  fill(s.groups[isq::kContext], 4, 3);
  t0 = clock::now();
  for (int i = 0; i < 2000; ++i) isq::QMatrix q = isq::network_forward(p, s);
  out["net_forward_per_s"] = 2000.0 / std::chrono::duration<double>(clock::now() - t0).count();

  isq::QMatrix upstream(18, 5);
  for (std::size_t i = 0; i < upstream.size(); ++i) upstream.data()[i] = rng.uniform(-1, 1);
  t0 = clock::now();
  for (int i = 0; i < 1000; ++i) auto g = isq::network_backward(p, s, upstream);
  out["net_backward_per_s"] = 1000.0 / std::chrono::duration<double>(clock::now() - t0).count();

  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterative select Q-learning framework"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir = "results", checkpoint_path, suite = "all";
  std::uint64_t seed = 0;
  int n_test = 0;
  bool parallel_seeds = false;

  CLI::App* train = app.add_subcommand("train", "train an agent and write result files");
  train->add_option("--config", config_path, "experiment config JSON");
  train->add_option("--preset", preset, "built-in preset (cs-small, cs-medium, pp-small)");
  train->add_option("--out", out_dir, "output directory");
  train->add_flag("--parallel-seeds", parallel_seeds, "fan seeds out to worker threads");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint greedily");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  eval->add_option("--config", config_path, "experiment config JSON");
  eval->add_option("--preset", preset, "built-in preset");
  eval->add_option("--seed", seed, "evaluation seed");

  CLI::App* transfer = app.add_subcommand("transfer", "re-bind tied parameters at a new N");
  transfer->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
  transfer->add_option("--n-test", n_test, "item count to rebuild at")->required();
  transfer->add_option("--config", config_path, "experiment config JSON");
  transfer->add_option("--preset", preset, "built-in preset");
  transfer->add_option("--seed", seed, "evaluation seed");

  CLI::App* verify = app.add_subcommand("verify", "run the verification suites");
  verify->add_option("--suite", suite, "ei|grad|theorem1|lemma|equiv|universal|all");
  verify->add_option("--seed", seed, "suite seed");

  CLI::App* bench = app.add_subcommand("bench", "micro benchmarks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train)) {
      const isq::ExperimentConfig cfg = load_config(config_path, preset);
      const isq::ExperimentResult result = isq::run_experiment(cfg, out_dir, parallel_seeds);
      std::cout << "config hash " << result.hash << "\n";
      for (const auto& f : result.files) std::cout << out_dir << "/" << f << "\n";
      return 0;
    }
    if (app.got_subcommand(eval)) {
      const isq::ExperimentConfig cfg = load_config(config_path, preset);
      const nlohmann::json ckpt = load_json(checkpoint_path);
      auto factory = [&cfg]() { return isq::make_env(cfg); };
      auto policy = policy_from_checkpoint(ckpt, factory()->descriptor());
      const isq::EvalReport report = isq::evaluate(*policy, factory, cfg.eval.episodes,
                                                   cfg.eval.episode_length, seed);
      std::cout << nlohmann::json{{"mean_reward", report.mean},
                                  {"ci95", report.ci95},
                                  {"episodes", report.episodes},
                                  {"episode_length", report.episode_length}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (app.got_subcommand(transfer)) {
      const isq::ExperimentConfig cfg = load_config(config_path, preset);
      const nlohmann::json ckpt = load_json(checkpoint_path);
      const isq::TransferReport report = isq::transfer_evaluate(ckpt, cfg, n_test, seed);
      std::cout << nlohmann::json{{"mean_reward", report.eval.mean},
                                  {"ci95", report.eval.ci95},
                                  {"episodes", report.eval.episodes},
                                  {"episode_length", report.eval.episode_length},
                                  {"ei_deviation", report.ei_deviation},
                                  {"params_before", report.params_before},
                                  {"params_after", report.params_after}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (app.got_subcommand(verify)) return run_verify(suite, seed);
    if (app.got_subcommand(bench)) return run_bench();
  } catch (const isq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
