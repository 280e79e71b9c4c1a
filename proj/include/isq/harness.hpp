#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "isq/baselines.hpp"
#include "isq/checks.hpp"
#include "isq/env_circle.hpp"
#include "isq/env_pp.hpp"
#include "isq/env_tabular.hpp"
#include "isq/learner.hpp"
#include "isq/serialize.hpp"

namespace isq {

// ---------------------------------------------------------------------------
// content hashing (sha1 of the canonical config dump, like a git blob id)

namespace detail {

class Sha1 {
 public:
  void update(const unsigned char* data, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      buffer_[buffered_++] = data[i];
      ++total_;
      if (buffered_ == 64) {
        process();
        buffered_ = 0;
      }
    }
  }

  std::string hex_digest() {
    const std::uint64_t bits = total_ * 8;
    unsigned char pad = 0x80;
    update(&pad, 1);
    unsigned char zero = 0;
    while (buffered_ != 56) update(&zero, 1);
    for (int i = 7; i >= 0; --i) {
      unsigned char b = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
      update(&b, 1);
    }
    std::ostringstream out;
    for (std::uint32_t word : h_) {
      for (int i = 7; i >= 0; --i) {
        static const char* digits = "0123456789abcdef";
        out << digits[(word >> (4 * i)) & 0xf];
      }
    }
    return out.str();
  }

 private:
  static std::uint32_t rol(std::uint32_t v, int k) { return (v << k) | (v >> (32 - k)); }

  void process() {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(buffer_[4 * i]) << 24) |
             (static_cast<std::uint32_t>(buffer_[4 * i + 1]) << 16) |
             (static_cast<std::uint32_t>(buffer_[4 * i + 2]) << 8) |
             static_cast<std::uint32_t>(buffer_[4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5a827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ed9eba1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8f1bbcdc;
      } else {
        f = b ^ c ^ d;
        k = 0xca62c1d6;
      }
      const std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<std::uint32_t, 5> h_{0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476, 0xc3d2e1f0};
  unsigned char buffer_[64] = {};
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace detail

inline std::string sha1_hex(const std::string& text) {
  detail::Sha1 h;
  h.update(reinterpret_cast<const unsigned char*>(text.data()), text.size());
  return h.hex_digest();
}

// two-sided 95% critical values of the t distribution; clamps above 30 dof
inline double t_critical_975(int dof) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                 2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                 2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                 2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 0.0;
  if (dof <= 30) return table[dof - 1];
  return 1.96;
}

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;
};

inline MeanCi mean_ci(const std::vector<double>& values) {
  MeanCi out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  out.ci95 = t_critical_975(static_cast<int>(values.size()) - 1) * sd /
             std::sqrt(static_cast<double>(values.size()));
  return out;
}

// ---------------------------------------------------------------------------
// evaluation protocol: greedy policy, fresh environments, fixed windows

struct EvalReport {
  double mean = 0.0;  // mean summed reward per episode
  double ci95 = 0.0;  // half-width over episodes
  int episodes = 0;
  int episode_length = 0;
  std::vector<double> episode_rewards;
};

using EnvFactory = std::function<std::unique_ptr<SMDPInterface>()>;

inline EvalReport evaluate(Policy& policy, const EnvFactory& make_env, int episodes,
                           int episode_length, std::uint64_t seed) {
  EvalReport report;
  report.episodes = episodes;
  report.episode_length = episode_length;
  for (int e = 0; e < episodes; ++e) {
    auto env = make_env();
    const SMDPDescriptor desc = env->descriptor();
    SeededRng rng(derive_seed(seed, 9000 + static_cast<std::uint64_t>(e)));
    PhaseState s = to_phase0(env->reset(derive_seed(seed, 1000 + static_cast<std::uint64_t>(e))));
    policy.begin_episode();
    double total = 0.0;
    for (int t = 0; t < episode_length; ++t)
      for (int k = 0; k < desc.n_select; ++k) {
        PhaseTransition tr = phase_step(*env, s, policy.act(s, rng));
        total += tr.reward;
        s = std::move(tr.next);
      }
    report.episode_rewards.push_back(total);
  }
  const MeanCi mc = mean_ci(report.episode_rewards);
  report.mean = mc.mean;
  report.ci95 = mc.ci95;
  return report;
}

// ---------------------------------------------------------------------------
// experiment configuration (strict schema, unknown keys rejected)

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  long interval = 0;  // 0: no curve sampling during training
  int episodes = 20;
  int episode_length = 2500;
};

struct ExperimentConfig {
  std::string env_kind;  // circle | pp | tabular
  CircleConfig circle;
  PPConfig pp;
  TabularConfig tabular;
  std::uint64_t tabular_build_seed = 0;

  BaselineKind agent = BaselineKind::ISQ;
  SharingVariant sharing = SharingVariant::Intra;
  std::vector<long> splits;  // explicit progressive schedule; empty = default

  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  EvalConfig eval;
  bool plot = false;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& key : allowed)
      if (it.key() == key) ok = true;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  detail::reject_unknown(
      j, {"format_version", "env", "agent", "train", "seeds", "eval", "plot"}, "config");
  if (detail::get_or<int>(j, "format_version", 1) != 1)
    throw ConfigError("unsupported config format_version");
  if (!j.contains("env") || !j.contains("agent")) throw ConfigError("env and agent are required");

  ExperimentConfig cfg;
  const auto& env = j.at("env");
  cfg.env_kind = env.at("kind").get<std::string>();
  if (cfg.env_kind == "circle") {
    detail::reject_unknown(env, {"kind", "n", "u", "k", "commands", "move_distance"}, "env");
    cfg.circle.n_selectable = env.at("n").get<int>();
    cfg.circle.n_context = detail::get_or<int>(env, "u", 0);
    cfg.circle.n_select = env.at("k").get<int>();
    cfg.circle.n_commands = detail::get_or<int>(env, "commands", 5);
    cfg.circle.move_distance = detail::get_or<double>(env, "move_distance", 0.1);
  } else if (cfg.env_kind == "pp") {
    detail::reject_unknown(env, {"kind", "grid", "n", "u", "k", "commands"}, "env");
    cfg.pp.grid = detail::get_or<int>(env, "grid", 10);
    cfg.pp.n_predators = env.at("n").get<int>();
    cfg.pp.n_preys = detail::get_or<int>(env, "u", 4);
    cfg.pp.n_select = env.at("k").get<int>();
    cfg.pp.n_commands = detail::get_or<int>(env, "commands", 5);
  } else if (cfg.env_kind == "tabular") {
    detail::reject_unknown(env, {"kind", "n", "alphabet", "commands", "k", "build_seed"}, "env");
    cfg.tabular.n_items = env.at("n").get<int>();
    cfg.tabular.alphabet = detail::get_or<int>(env, "alphabet", 2);
    cfg.tabular.n_commands = detail::get_or<int>(env, "commands", 1);
    cfg.tabular.n_select = env.at("k").get<int>();
    cfg.tabular_build_seed = detail::get_or<std::uint64_t>(env, "build_seed", 0);
  } else {
    throw ConfigError("unknown env kind: " + cfg.env_kind);
  }

  const auto& agent = j.at("agent");
  detail::reject_unknown(agent, {"kind", "sharing", "splits"}, "agent");
  cfg.agent = baseline_from_string(agent.at("kind").get<std::string>());
  cfg.sharing = sharing_from_string(detail::get_or<std::string>(agent, "sharing", "I"));
  cfg.splits = detail::get_or<std::vector<long>>(agent, "splits", {});

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t,
                           {"steps", "gamma", "lr", "minibatch", "target_update", "eps_initial",
                            "eps_final", "eps_decay_fraction", "depth", "channels", "buffer",
                            "activation"},
                           "train");
    cfg.train.total_steps = detail::get_or<long>(t, "steps", cfg.train.total_steps);
    cfg.train.gamma = detail::get_or<double>(t, "gamma", cfg.train.gamma);
    cfg.train.lr = detail::get_or<double>(t, "lr", cfg.train.lr);
    cfg.train.minibatch = detail::get_or<int>(t, "minibatch", cfg.train.minibatch);
    cfg.train.target_update = detail::get_or<long>(t, "target_update", cfg.train.target_update);
    cfg.train.eps_initial = detail::get_or<double>(t, "eps_initial", cfg.train.eps_initial);
    cfg.train.eps_final = detail::get_or<double>(t, "eps_final", cfg.train.eps_final);
    cfg.train.eps_decay_fraction =
        detail::get_or<double>(t, "eps_decay_fraction", cfg.train.eps_decay_fraction);
    cfg.train.depth = detail::get_or<int>(t, "depth", cfg.train.depth);
    cfg.train.channels = detail::get_or<int>(t, "channels", cfg.train.channels);
    cfg.train.buffer_capacity = detail::get_or<std::size_t>(t, "buffer", cfg.train.buffer_capacity);
    cfg.train.activation = activation_from_string(
        detail::get_or<std::string>(t, "activation", activation_to_string(cfg.train.activation)));
  }

  cfg.seeds = detail::get_or<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::reject_unknown(e, {"interval", "episodes", "episode_length"}, "eval");
    cfg.eval.interval = detail::get_or<long>(e, "interval", cfg.eval.interval);
    cfg.eval.episodes = detail::get_or<int>(e, "episodes", cfg.eval.episodes);
    cfg.eval.episode_length = detail::get_or<int>(e, "episode_length", cfg.eval.episode_length);
  }
  cfg.plot = detail::get_or<bool>(j, "plot", false);

  // single-command study runs the same machinery with C forced to 1
  if (cfg.agent == BaselineKind::ISQ1) {
    if (cfg.env_kind == "circle") cfg.circle.n_commands = 1;
    if (cfg.env_kind == "pp") cfg.pp.n_commands = 1;
    if (cfg.env_kind == "tabular") cfg.tabular.n_commands = 1;
  }
  cfg.train.eval_interval = cfg.eval.interval;
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json env;
  if (cfg.env_kind == "circle")
    env = {{"kind", "circle"},       {"n", cfg.circle.n_selectable}, {"u", cfg.circle.n_context},
           {"k", cfg.circle.n_select}, {"commands", cfg.circle.n_commands},
           {"move_distance", cfg.circle.move_distance}};
  else if (cfg.env_kind == "pp")
    env = {{"kind", "pp"}, {"grid", cfg.pp.grid},        {"n", cfg.pp.n_predators},
           {"u", cfg.pp.n_preys}, {"k", cfg.pp.n_select}, {"commands", cfg.pp.n_commands}};
  else
    env = {{"kind", "tabular"},          {"n", cfg.tabular.n_items},
           {"alphabet", cfg.tabular.alphabet}, {"commands", cfg.tabular.n_commands},
           {"k", cfg.tabular.n_select},  {"build_seed", cfg.tabular_build_seed}};

  std::string agent_kind;
  switch (cfg.agent) {
    case BaselineKind::ISQ: agent_kind = "isq"; break;
    case BaselineKind::ISQ1: agent_kind = "isq1"; break;
    case BaselineKind::Vanilla: agent_kind = "vanilla"; break;
    case BaselineKind::Sorting: agent_kind = "sorting"; break;
    case BaselineKind::Myopic: agent_kind = "myopic"; break;
    case BaselineKind::IDQN: agent_kind = "idqn"; break;
    case BaselineKind::RSQ: agent_kind = "rsq"; break;
    case BaselineKind::EQ: agent_kind = "eq"; break;
  }
  std::string sharing;
  switch (cfg.sharing) {
    case SharingVariant::Intra: sharing = "I"; break;
    case SharingVariant::Unified: sharing = "U"; break;
    case SharingVariant::Progressive: sharing = "P"; break;
  }

  return nlohmann::json{
      {"format_version", 1},
      {"env", env},
      {"agent", {{"kind", agent_kind}, {"sharing", sharing}, {"splits", cfg.splits}}},
      {"train",
       {{"steps", cfg.train.total_steps},
        {"gamma", cfg.train.gamma},
        {"lr", cfg.train.lr},
        {"minibatch", cfg.train.minibatch},
        {"target_update", cfg.train.target_update},
        {"eps_initial", cfg.train.eps_initial},
        {"eps_final", cfg.train.eps_final},
        {"eps_decay_fraction", cfg.train.eps_decay_fraction},
        {"depth", cfg.train.depth},
        {"channels", cfg.train.channels},
        {"buffer", cfg.train.buffer_capacity},
        {"activation", activation_to_string(cfg.train.activation)}}},
      {"seeds", cfg.seeds},
      {"eval",
       {{"interval", cfg.eval.interval},
        {"episodes", cfg.eval.episodes},
        {"episode_length", cfg.eval.episode_length}}},
      {"plot", cfg.plot}};
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  return sha1_hex(config_to_json(cfg).dump());
}

// environment factory; n_override rebuilds the task at a different item count
// (transfer evaluation)
inline std::unique_ptr<SMDPInterface> make_env(const ExperimentConfig& cfg, int n_override = -1) {
  if (cfg.env_kind == "circle") {
    CircleConfig c = cfg.circle;
    if (n_override > 0) c.n_selectable = n_override;
    return std::make_unique<CircleSelection>(c);
  }
  if (cfg.env_kind == "pp") {
    PPConfig c = cfg.pp;
    if (n_override > 0) c.n_predators = n_override;
    return std::make_unique<PredatorPrey>(c);
  }
  TabularConfig c = cfg.tabular;
  if (n_override > 0) c.n_items = n_override;
  return std::make_unique<TabularSMDP>(c, cfg.tabular_build_seed);
}

// built-in desk-scale presets
inline nlohmann::json preset_config(const std::string& name) {
  if (name == "cs-small")
    return nlohmann::json::parse(R"({
      "env": {"kind": "circle", "n": 5, "u": 1, "k": 1, "commands": 1},
      "agent": {"kind": "isq", "sharing": "I"},
      "train": {"steps": 200000, "channels": 16, "depth": 3},
      "seeds": [0, 1, 2, 3],
      "eval": {"interval": 40000, "episodes": 20, "episode_length": 2500}
    })");
  if (name == "cs-medium")
    return nlohmann::json::parse(R"({
      "env": {"kind": "circle", "n": 20, "u": 2, "k": 3, "commands": 5},
      "agent": {"kind": "isq", "sharing": "P"},
      "train": {"steps": 400000, "channels": 32, "depth": 3},
      "seeds": [0, 1, 2, 3],
      "eval": {"interval": 80000, "episodes": 20, "episode_length": 2500}
    })");
  if (name == "pp-small")
    return nlohmann::json::parse(R"({
      "env": {"kind": "pp", "grid": 6, "n": 4, "u": 4, "k": 2, "commands": 5},
      "agent": {"kind": "isq", "sharing": "P"},
      "train": {"steps": 100000, "channels": 16, "depth": 3},
      "seeds": [0, 1, 2, 3],
      "eval": {"interval": 20000, "episodes": 20, "episode_length": 175}
    })");
  throw ConfigError("unknown preset: " + name);
}

// ---------------------------------------------------------------------------
// running experiments and writing result files

namespace detail {

inline nlohmann::json dense_to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : net.layers) {
    layers.push_back({{"rows", L.w.rows()},
                      {"cols", L.w.cols()},
                      {"act", activation_to_string(L.act)},
                      {"in_counts", L.in_counts},
                      {"in_width", L.in_width},
                      {"out_counts", L.out_counts},
                      {"out_width", L.out_width},
                      {"w", std::vector<double>(L.w.data(), L.w.data() + L.w.size())},
                      {"b", L.b}});
  }
  return {{"layers", layers}};
}

inline DenseNet dense_from_json(const nlohmann::json& j) {
  DenseNet net;
  for (const auto& lj : j.at("layers")) {
    DenseLayer L;
    L.act = activation_from_string(lj.at("act").get<std::string>());
    L.in_counts = lj.at("in_counts").get<std::array<int, kGroupCount>>();
    L.in_width = lj.at("in_width").get<std::array<int, kGroupCount>>();
    L.out_counts = lj.at("out_counts").get<std::array<int, kGroupCount>>();
    L.out_width = lj.at("out_width").get<int>();
    L.w = Matrix(lj.at("rows").get<std::size_t>(), lj.at("cols").get<std::size_t>());
    const auto w = lj.at("w").get<std::vector<double>>();
    if (w.size() != L.w.size()) throw ConfigError("dense checkpoint: bad weight size");
    for (std::size_t i = 0; i < w.size(); ++i) L.w.data()[i] = w[i];
    L.b = lj.at("b").get<std::vector<double>>();
    net.layers.push_back(std::move(L));
  }
  return net;
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace detail

struct SeedOutcome {
  std::uint64_t seed = 0;
  LearningCurve curve;
  EvalReport final_eval;
  nlohmann::json checkpoint;
};

// trains one seed of the configured agent and evaluates it greedily
inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome outcome;
  outcome.seed = seed;
  const std::string hash = config_hash(cfg);
  auto factory = [&cfg]() { return make_env(cfg); };
  const SMDPDescriptor desc = make_env(cfg)->descriptor();

  auto finish_cascaded = [&](CascadedQ nets, LearningCurve curve) {
    CascadedPolicy policy(nets, desc,
                          cfg.agent == BaselineKind::RSQ ? PolicyKind::RandomItem
                                                         : PolicyKind::Greedy);
    outcome.final_eval = evaluate(policy, factory, cfg.eval.episodes, cfg.eval.episode_length,
                                  derive_seed(seed, 31337));
    outcome.curve = std::move(curve);
    outcome.checkpoint = {{"format_version", 1},
                          {"config_hash", hash},
                          {"agent", config_to_json(cfg).at("agent").at("kind")},
                          {"net", checkpoint_to_json(nets.checkpoint())}};
  };

  switch (cfg.agent) {
    case BaselineKind::Vanilla:
    case BaselineKind::Sorting: {
      auto env = make_env(cfg);
      const bool sorting = cfg.agent == BaselineKind::Sorting;
      DenseEvalHook hook = [&](const DenseAgent& agent, long step) {
        DensePolicy policy(agent);
        const EvalReport r = evaluate(policy, factory, cfg.eval.episodes,
                                      cfg.eval.episode_length, derive_seed(seed, 500));
        return CurvePoint{step, r.mean, r.ci95};
      };
      DenseTrainResult r = train_dense(cfg.train, *env, sorting, seed,
                                       cfg.eval.interval > 0 ? hook : DenseEvalHook{});
      DensePolicy policy(r.agent);
      outcome.final_eval = evaluate(policy, factory, cfg.eval.episodes, cfg.eval.episode_length,
                                    derive_seed(seed, 31337));
      outcome.curve = std::move(r.curve);
      outcome.checkpoint = {{"format_version", 1},
                            {"config_hash", hash},
                            {"agent", sorting ? "sorting" : "vanilla"},
                            {"dense", detail::dense_to_json(r.agent.net)}};
      break;
    }
    case BaselineKind::IDQN: {
      auto env = make_env(cfg);
      IDQNEvalHook hook = [&](const IDQNAgent& agent, long step) {
        IDQNPolicy policy(agent.net, desc);
        const EvalReport r = evaluate(policy, factory, cfg.eval.episodes,
                                      cfg.eval.episode_length, derive_seed(seed, 500));
        return CurvePoint{step, r.mean, r.ci95};
      };
      IDQNTrainResult r =
          train_idqn(cfg.train, *env, seed, cfg.eval.interval > 0 ? hook : IDQNEvalHook{});
      IDQNPolicy policy(r.agent.net, desc);
      outcome.final_eval = evaluate(policy, factory, cfg.eval.episodes, cfg.eval.episode_length,
                                    derive_seed(seed, 31337));
      outcome.curve = std::move(r.curve);
      NetCheckpoint ckpt{desc.n_select, r.agent.cfg, {r.agent.net},
                         std::vector<int>(static_cast<std::size_t>(desc.n_select), 0)};
      outcome.checkpoint = {{"format_version", 1},
                            {"config_hash", hash},
                            {"agent", "idqn"},
                            {"net", checkpoint_to_json(ckpt)}};
      break;
    }
    default: {
      auto env = make_env(cfg);
      const AgentVariant variant = variant_for(cfg.agent);
      SharingMode mode{cfg.sharing, cfg.splits};
      if (mode.variant == SharingVariant::Progressive && mode.split_steps.empty())
        mode.split_steps = default_split_schedule(cfg.train.total_steps, desc.n_select);
      TrainOptions opts;
      opts.loss = variant.loss;
      opts.policy = variant.policy;
      TrainConfig train_cfg = cfg.train;
      train_cfg.pooled = variant.pooled;
      opts.eval = [&](const CascadedQ& nets, long step) {
        CascadedPolicy policy(nets, desc, variant.policy);
        const EvalReport r = evaluate(policy, factory, cfg.eval.episodes,
                                      cfg.eval.episode_length, derive_seed(seed, 500));
        return CurvePoint{step, r.mean, r.ci95};
      };
      if (cfg.eval.interval <= 0) opts.eval = nullptr;
      TrainResult r = train(train_cfg, *env, mode, seed, opts);
      finish_cascaded(std::move(r.nets), std::move(r.curve));
      break;
    }
  }
  return outcome;
}

struct ExperimentResult {
  std::string hash;
  std::vector<SeedOutcome> outcomes;
  std::vector<std::string> files;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string curve_csv(const LearningCurve& curve, long long seed_column) {
  std::ostringstream out;
  out << "step,seed,mean_reward,ci95\n";
  for (const CurvePoint& p : curve)
    out << p.step << "," << seed_column << "," << detail::format_double(p.mean_reward) << ","
        << detail::format_double(p.ci95) << "\n";
  return out.str();
}

inline std::string svg_plot(const LearningCurve& summary) {
  const double width = 640, height = 360, margin = 48;
  double lo = 0, hi = 1, step_hi = 1;
  if (!summary.empty()) {
    lo = summary[0].mean_reward - summary[0].ci95;
    hi = summary[0].mean_reward + summary[0].ci95;
    for (const auto& p : summary) {
      lo = std::min(lo, p.mean_reward - p.ci95);
      hi = std::max(hi, p.mean_reward + p.ci95);
      step_hi = std::max(step_hi, static_cast<double>(p.step));
    }
    if (hi == lo) hi = lo + 1;
  }
  auto x_of = [&](double step) { return margin + (width - 2 * margin) * step / step_hi; };
  auto y_of = [&](double v) { return height - margin - (height - 2 * margin) * (v - lo) / (hi - lo); };
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  if (!summary.empty()) {
    out << "<polygon fill='#add8e6' opacity='0.5' points='";
    for (const auto& p : summary)
      out << x_of(static_cast<double>(p.step)) << "," << y_of(p.mean_reward + p.ci95) << " ";
    for (auto it = summary.rbegin(); it != summary.rend(); ++it)
      out << x_of(static_cast<double>(it->step)) << "," << y_of(it->mean_reward - it->ci95) << " ";
    out << "'/>\n<polyline fill='none' stroke='#1f77b4' stroke-width='2' points='";
    for (const auto& p : summary)
      out << x_of(static_cast<double>(p.step)) << "," << y_of(p.mean_reward) << " ";
    out << "'/>\n";
  }
  out << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
      << "' y2='" << height - margin << "' stroke='black'/>\n<line x1='" << margin << "' y1='"
      << margin << "' x2='" << margin << "' y2='" << height - margin << "' stroke='black'/>\n"
      << "</svg>\n";
  return out.str();
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                       bool parallel_seeds = false) {
  ExperimentResult result;
  result.hash = config_hash(cfg);
  const std::string tag = result.hash.substr(0, 8);
  std::filesystem::create_directories(out_dir);

  if (parallel_seeds) {
    std::vector<std::future<SeedOutcome>> futures;
    for (std::uint64_t seed : cfg.seeds)
      futures.push_back(
          std::async(std::launch::async, [&cfg, seed] { return run_seed(cfg, seed); }));
    for (auto& f : futures) result.outcomes.push_back(f.get());
  } else {
    for (std::uint64_t seed : cfg.seeds) result.outcomes.push_back(run_seed(cfg, seed));
  }

  const std::filesystem::path dir(out_dir);
  for (const SeedOutcome& o : result.outcomes) {
    const std::string curve_name = "curve_" + tag + "_seed" + std::to_string(o.seed) + ".csv";
    write_text(dir / curve_name, curve_csv(o.curve, static_cast<long long>(o.seed)));
    result.files.push_back(curve_name);
    const std::string ckpt_name = "checkpoint_" + tag + "_seed" + std::to_string(o.seed) + ".json";
    write_text(dir / ckpt_name, o.checkpoint.dump(2));
    result.files.push_back(ckpt_name);
  }

  // merged summary: cross-seed mean and CI at every sampled step
  LearningCurve summary;
  if (!result.outcomes.empty() && !result.outcomes[0].curve.empty()) {
    const std::size_t points = result.outcomes[0].curve.size();
    for (std::size_t i = 0; i < points; ++i) {
      std::vector<double> means;
      for (const SeedOutcome& o : result.outcomes)
        if (i < o.curve.size()) means.push_back(o.curve[i].mean_reward);
      const MeanCi mc = mean_ci(means);
      summary.push_back({result.outcomes[0].curve[i].step, mc.mean, mc.ci95});
    }
  }
  const std::string summary_name = "summary_" + tag + ".csv";
  write_text(dir / summary_name, curve_csv(summary, -1));
  result.files.push_back(summary_name);

  if (cfg.plot) {
    const std::string plot_name = "plot_" + tag + ".svg";
    write_text(dir / plot_name, svg_plot(summary));
    result.files.push_back(plot_name);
  }

  std::vector<double> final_means;
  nlohmann::json finals = nlohmann::json::array();
  for (const SeedOutcome& o : result.outcomes) {
    final_means.push_back(o.final_eval.mean);
    finals.push_back({{"seed", o.seed},
                      {"mean_reward", o.final_eval.mean},
                      {"ci95", o.final_eval.ci95},
                      {"episodes", o.final_eval.episodes},
                      {"episode_length", o.final_eval.episode_length}});
  }
  const MeanCi overall = mean_ci(final_means);
  nlohmann::json manifest{{"format_version", 1},
                          {"config", config_to_json(cfg)},
                          {"config_hash", result.hash},
                          {"outputs", result.files},
                          {"final_per_seed", finals},
                          {"final_mean", overall.mean},
                          {"final_ci95", overall.ci95}};
  write_text(dir / ("manifest_" + tag + ".json"), manifest.dump(2));
  result.files.push_back("manifest_" + tag + ".json");
  return result;
}

// ---------------------------------------------------------------------------
// transfer: rebuild tied parameters at a different item count

struct TransferReport {
  EvalReport eval;
  double ei_deviation = 0.0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
};

inline TransferReport transfer_evaluate(const nlohmann::json& checkpoint,
                                        const ExperimentConfig& cfg, int n_test,
                                        std::uint64_t seed) {
  if (checkpoint.contains("dense"))
    throw std::invalid_argument("transfer: dense parameters are bound to a fixed N");
  NetCheckpoint ckpt = checkpoint_from_json(checkpoint.at("net"));
  TransferReport report;
  report.params_before = param_count(ckpt.sets.at(0));

  ExperimentConfig test_cfg = cfg;
  auto factory = [&test_cfg, n_test]() { return make_env(test_cfg, n_test); };
  const SMDPDescriptor desc = factory()->descriptor();
  if (desc.n_select > n_test) throw std::invalid_argument("transfer: K exceeds the new N");

  // the tied scalars are shape-agnostic; "rebuilding" is re-binding shapes
  CascadedQ nets = CascadedQ::from_checkpoint(ckpt);
  report.params_after = param_count(nets.sets.at(0));

  SeededRng rng(derive_seed(seed, 777));
  for (int t = 0; t < 200; ++t) {
    const int k = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(std::min(desc.n_select, 3))));
    const int n_unsel = n_test - k;
    const int n_ctx = desc.n_context;
    PhaseInput s = detail::random_state(rng, nets.cfg, k, n_unsel, n_ctx);
    Permutation perm = Permutation::random(rng, static_cast<std::size_t>(k),
                                           static_cast<std::size_t>(n_unsel),
                                           static_cast<std::size_t>(n_ctx));
    const QMatrix lhs = network_forward(nets.main_for(k), apply_permutation(perm, s));
    const QMatrix rhs =
        permute_rows(perm.sigma[kUnselected], network_forward(nets.main_for(k), s));
    report.ei_deviation = std::max(report.ei_deviation, detail::max_abs(lhs, rhs));
  }

  CascadedPolicy policy(nets, desc);
  report.eval = evaluate(policy, factory, cfg.eval.episodes, cfg.eval.episode_length,
                         derive_seed(seed, 31337));
  return report;
}

}  // namespace isq
