#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "isq/adam.hpp"
#include "isq/ismdp.hpp"
#include "isq/net.hpp"
#include "isq/replay.hpp"
#include "isq/rng.hpp"
#include "isq/serialize.hpp"

namespace isq {

enum class SharingVariant { Intra, Unified, Progressive };

inline SharingVariant sharing_from_string(const std::string& s) {
  if (s == "I" || s == "intra") return SharingVariant::Intra;
  if (s == "U" || s == "unified") return SharingVariant::Unified;
  if (s == "P" || s == "progressive") return SharingVariant::Progressive;
  throw std::invalid_argument("unknown sharing variant: " + s);
}

struct SharingMode {
  SharingVariant variant = SharingVariant::Intra;
  std::vector<long> split_steps;  // progressive only, strictly increasing

  static SharingMode intra() { return {SharingVariant::Intra, {}}; }
  static SharingMode unified() { return {SharingVariant::Unified, {}}; }
  static SharingMode progressive(std::vector<long> splits) {
    return {SharingVariant::Progressive, std::move(splits)};
  }
};

// Default progressive schedule: ceil(log2 K) splits at equal fractions of the
// training budget, so the set count doubles until it reaches K.
inline std::vector<long> default_split_schedule(long total_steps, int n_phases) {
  std::vector<long> splits;
  int doublings = 0;
  while ((1 << doublings) < n_phases) ++doublings;
  for (int j = 1; j <= doublings; ++j)
    splits.push_back(total_steps * j / (doublings + 1));
  return splits;
}

// Phase-to-set assignment at a given training step. Progressive sharing uses
// contiguous blocks that halve at each passed split threshold.
inline std::vector<int> sharing_groups(const SharingMode& mode, long step, int n_phases) {
  std::vector<int> map(static_cast<std::size_t>(n_phases), 0);
  switch (mode.variant) {
    case SharingVariant::Intra:
      for (int k = 0; k < n_phases; ++k) map[static_cast<std::size_t>(k)] = k;
      break;
    case SharingVariant::Unified:
      break;
    case SharingVariant::Progressive: {
      int passed = 0;
      for (long t : mode.split_steps)
        if (step >= t) ++passed;
      long sets = 1;
      for (int i = 0; i < passed && sets < n_phases; ++i) sets *= 2;
      if (sets > n_phases) sets = n_phases;
      for (int k = 0; k < n_phases; ++k)
        map[static_cast<std::size_t>(k)] =
            static_cast<int>(static_cast<long>(k) * sets / n_phases);
      break;
    }
  }
  return map;
}

// Exploration schedule: linear decay across the first decay_fraction of the
// budget, then the final value.
struct TrainConfig {
  long total_steps = 200000;
  double gamma = 0.99;
  double lr = 1e-3;
  int minibatch = 64;
  long target_update = 1000;
  double eps_initial = 1.0;
  double eps_final = 0.1;
  double eps_decay_fraction = 0.1;
  int depth = 3;
  int channels = 48;
  std::size_t buffer_capacity = 50000;
  long eval_interval = 0;  // 0 disables curve sampling
  Activation activation = Activation::ReLU;
  bool pooled = true;  // false: local-only kernel (cross weights zeroed)
};

inline double epsilon(long step, const TrainConfig& cfg) {
  const double window = cfg.eps_decay_fraction * static_cast<double>(cfg.total_steps);
  if (window <= 0 || static_cast<double>(step) >= window) return cfg.eps_final;
  const double frac = static_cast<double>(step) / window;
  return cfg.eps_initial + (cfg.eps_final - cfg.eps_initial) * frac;
}

// The K cascaded Q-networks: a phase-to-set map over distinct parameter sets,
// their stale target copies, and one Adam state per set.
struct CascadedQ {
  NetConfig cfg;
  int n_phases = 1;
  std::vector<int> phase_to_set;
  std::vector<SharedParams> sets;
  std::vector<SharedParams> targets;
  std::vector<AdamState> adam;

  const SharedParams& main_for(int phase) const {
    return sets[static_cast<std::size_t>(phase_to_set[static_cast<std::size_t>(phase)])];
  }
  const SharedParams& target_for(int phase) const {
    return targets[static_cast<std::size_t>(phase_to_set[static_cast<std::size_t>(phase)])];
  }

  NetCheckpoint checkpoint() const { return {n_phases, cfg, sets, phase_to_set}; }

  static CascadedQ from_checkpoint(const NetCheckpoint& ckpt, double lr = 1e-3) {
    CascadedQ q;
    q.cfg = ckpt.cfg;
    q.n_phases = ckpt.n_phases;
    q.phase_to_set = ckpt.phase_to_set;
    q.sets = ckpt.sets;
    q.targets = ckpt.sets;
    for (const auto& s : q.sets) q.adam.emplace_back(param_count(s), lr);
    return q;
  }
};

inline CascadedQ make_cascaded(const NetConfig& cfg, int n_phases,
                               const std::vector<int>& phase_to_set, double lr,
                               SeededRng& rng) {
  CascadedQ q;
  q.cfg = cfg;
  q.n_phases = n_phases;
  q.phase_to_set = phase_to_set;
  int n_sets = 0;
  for (int m : phase_to_set) n_sets = std::max(n_sets, m + 1);
  for (int m = 0; m < n_sets; ++m) q.sets.push_back(make_shared_params(cfg, rng));
  q.targets = q.sets;
  for (const auto& s : q.sets) q.adam.emplace_back(param_count(s), lr);
  return q;
}

// Greedy argmax with lexicographic (row, column) tie-break.
inline PhaseAction argmax_action(const QMatrix& q) {
  PhaseAction best{0, 0};
  double best_v = q(0, 0);
  for (std::size_t n = 0; n < q.rows(); ++n)
    for (std::size_t c = 0; c < q.cols(); ++c)
      if (q(n, c) > best_v) {
        best_v = q(n, c);
        best = {static_cast<int>(n), static_cast<int>(c)};
      }
  return best;
}

enum class PolicyKind { Greedy, RandomItem };

inline PhaseAction select_action(const CascadedQ& nets, const PhaseState& s,
                                 const SMDPDescriptor& desc, double eps, SeededRng& rng,
                                 PolicyKind policy = PolicyKind::Greedy) {
  const int n_unsel = static_cast<int>(s.unselected.size());
  if (n_unsel == 0) throw std::invalid_argument("select_action: no feasible action");
  if (policy == PolicyKind::RandomItem) {
    // random-select agents always pick the item uniformly; only the command
    // comes from the Q row
    const int item = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_unsel)));
    if (rng.uniform() < eps)
      return {item, static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(desc.n_commands)))};
    const QMatrix q = network_forward(nets.main_for(s.phase), to_input(s, desc));
    int best_c = 0;
    for (int c = 1; c < desc.n_commands; ++c)
      if (q(static_cast<std::size_t>(item), static_cast<std::size_t>(c)) >
          q(static_cast<std::size_t>(item), static_cast<std::size_t>(best_c)))
        best_c = c;
    return {item, best_c};
  }
  if (rng.uniform() < eps) {
    const auto idx = rng.uniform_int(static_cast<std::uint64_t>(n_unsel) *
                                     static_cast<std::uint64_t>(desc.n_commands));
    return {static_cast<int>(idx / static_cast<std::uint64_t>(desc.n_commands)),
            static_cast<int>(idx % static_cast<std::uint64_t>(desc.n_commands))};
  }
  return argmax_action(network_forward(nets.main_for(s.phase), to_input(s, desc)));
}

enum class LossKind { Standard, Myopic, RandomSelect };

struct LossAccumulator {
  std::vector<std::vector<double>> set_grads;  // per parameter set, flat layout
  std::vector<double> phase_losses;            // per phase, summed over chains
  int chains = 0;

  explicit LossAccumulator(const CascadedQ& nets) {
    for (const auto& s : nets.sets) set_grads.emplace_back(param_count(s), 0.0);
    phase_losses.assign(static_cast<std::size_t>(nets.n_phases), 0.0);
  }
};

// max over the full grid for value-based agents; random-select agents cannot
// steer the item, so they bootstrap with the item-averaged best command.
inline double bootstrap_value(const QMatrix& q, LossKind kind) {
  if (kind == LossKind::RandomSelect) {
    double acc = 0.0;
    for (std::size_t n = 0; n < q.rows(); ++n) {
      double best = q(n, 0);
      for (std::size_t c = 1; c < q.cols(); ++c) best = std::max(best, q(n, c));
      acc += best;
    }
    return acc / static_cast<double>(q.rows());
  }
  double best = q(0, 0);
  for (std::size_t i = 0; i < q.size(); ++i) best = std::max(best, q.data()[i]);
  return best;
}

// Per-phase squared Bellman errors of one chain. Intermediate phases bootstrap
// undiscounted from the next phase's target network; the final phase earns the
// macro reward plus gamma times the next phase-0 target value. Gradients flow
// only into the main set of the phase that produced the prediction.
inline void phase_loss(const ReplayChain& chain, const CascadedQ& nets, double gamma,
                       LossKind kind, const SMDPDescriptor& desc, LossAccumulator& acc) {
  const int K = nets.n_phases;
  if (static_cast<int>(chain.states.size()) != K ||
      static_cast<int>(chain.actions.size()) != K)
    throw std::invalid_argument("phase_loss: incomplete chain");
  for (int k = 0; k < K; ++k) {
    const PhaseInput in = to_input(chain.states[static_cast<std::size_t>(k)], desc);
    ForwardTrace trace;
    const QMatrix q = network_forward(nets.main_for(k), in, &trace);
    const PhaseAction a = chain.actions[static_cast<std::size_t>(k)];
    const double pred = q(static_cast<std::size_t>(a.item), static_cast<std::size_t>(a.command));

    double target = 0.0;
    if (k < K - 1) {
      const QMatrix tq = network_forward(nets.target_for(k + 1),
                                         to_input(chain.states[static_cast<std::size_t>(k + 1)],
                                                  desc));
      target = bootstrap_value(tq, kind);
    } else {
      target = chain.reward;
      if (kind != LossKind::Myopic) {
        const QMatrix tq = network_forward(nets.target_for(0), to_input(chain.next0, desc));
        target += gamma * bootstrap_value(tq, kind);
      }
    }

    const double diff = pred - target;
    acc.phase_losses[static_cast<std::size_t>(k)] += diff * diff;
    QMatrix upstream(q.rows(), q.cols());
    upstream(static_cast<std::size_t>(a.item), static_cast<std::size_t>(a.command)) = 2.0 * diff;
    auto& dst = acc.set_grads[static_cast<std::size_t>(
        nets.phase_to_set[static_cast<std::size_t>(k)])];
    network_backward_into(nets.main_for(k), trace, upstream, 1.0, dst);
  }
  acc.chains += 1;
}


struct CurvePoint {
  long step = 0;
  double mean_reward = 0.0;
  double ci95 = 0.0;
};
using LearningCurve = std::vector<CurvePoint>;

struct TrainResult {
  CascadedQ nets;
  LearningCurve curve;
  long splits_applied = 0;
};

using EvalHook = std::function<CurvePoint(const CascadedQ&, long step)>;
using SplitHook = std::function<void(const CascadedQ&, long step)>;

struct TrainOptions {
  LossKind loss = LossKind::Standard;
  PolicyKind policy = PolicyKind::Greedy;
  EvalHook eval;         // invoked every cfg.eval_interval steps when set
  SplitHook on_split;    // invoked right after a progressive split
};

namespace detail {

inline void apply_split(CascadedQ& nets, const std::vector<int>& new_map) {
  const int n_new = *std::max_element(new_map.begin(), new_map.end()) + 1;
  std::vector<SharedParams> sets, targets;
  std::vector<AdamState> adam;
  for (int m = 0; m < n_new; ++m) {
    // parent: the old set of the first phase now owned by m
    int parent = 0;
    for (std::size_t k = 0; k < new_map.size(); ++k)
      if (new_map[k] == m) {
        parent = nets.phase_to_set[k];
        break;
      }
    sets.push_back(nets.sets[static_cast<std::size_t>(parent)]);
    targets.push_back(nets.targets[static_cast<std::size_t>(parent)]);
    adam.push_back(nets.adam[static_cast<std::size_t>(parent)]);
  }
  nets.sets = std::move(sets);
  nets.targets = std::move(targets);
  nets.adam = std::move(adam);
  nets.phase_to_set = new_map;
}

}  // namespace detail

// The ISQ training loop: act K phases with epsilon-greedy, push the chain,
// sample a minibatch, accumulate gradients per parameter set, step Adam, and
// hard-copy the targets on the update period.
inline TrainResult train(const TrainConfig& cfg, SMDPInterface& env, const SharingMode& mode,
                         std::uint64_t seed, const TrainOptions& opts = {}) {
  const SMDPDescriptor desc = env.descriptor();
  const int K = desc.n_select;

  NetConfig net_cfg;
  net_cfg.d_item = desc.d_item;
  net_cfg.n_commands = desc.n_commands;
  net_cfg.d_context = desc.d_context;
  net_cfg.channels = cfg.channels;
  net_cfg.depth = cfg.depth;
  net_cfg.activation = cfg.activation;
  net_cfg.pooled = cfg.pooled;

  SeededRng init_rng(derive_seed(seed, 1));
  SeededRng action_rng(derive_seed(seed, 2));
  SeededRng replay_rng(derive_seed(seed, 3));

  TrainResult result;
  result.nets = make_cascaded(net_cfg, K, sharing_groups(mode, 0, K), cfg.lr, init_rng);
  CascadedQ& nets = result.nets;
  ReplayBuffer buffer(cfg.buffer_capacity);

  PhaseState state = to_phase0(env.reset(derive_seed(seed, 4)));
  for (long step = 0; step < cfg.total_steps; ++step) {
    const std::vector<int> map = sharing_groups(mode, step, K);
    if (map != nets.phase_to_set) {
      detail::apply_split(nets, map);
      ++result.splits_applied;
      if (opts.on_split) opts.on_split(nets, step);
    }

    const double eps = epsilon(step, cfg);
    ReplayChain chain;
    for (int k = 0; k < K; ++k) {
      const PhaseAction a = select_action(nets, state, desc, eps, action_rng, opts.policy);
      PhaseTransition tr = phase_step(env, state, a);
      chain.states.push_back(std::move(tr.state));
      chain.actions.push_back(a);
      if (tr.is_final_phase) {
        chain.reward = tr.reward;
        chain.next0 = tr.next;
      }
      state = std::move(tr.next);
    }
    buffer.push(std::move(chain));

    if (buffer.size() >= static_cast<std::size_t>(cfg.minibatch)) {
      LossAccumulator acc(nets);
      for (int i = 0; i < cfg.minibatch; ++i)
        phase_loss(buffer.sample(replay_rng), nets, cfg.gamma, opts.loss, desc, acc);
      for (double l : acc.phase_losses)
        if (!std::isfinite(l))
          throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      for (std::size_t m = 0; m < nets.sets.size(); ++m) {
        auto& grads = acc.set_grads[m];
        for (double& g : grads) g /= static_cast<double>(cfg.minibatch);
        std::vector<double> flat = flatten(nets.sets[m]);
        adam_step(flat, grads, nets.adam[m]);
        unflatten(nets.sets[m], flat);
      }
    }

    if ((step + 1) % cfg.target_update == 0) nets.targets = nets.sets;

    if (opts.eval && cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0)
      result.curve.push_back(opts.eval(nets, step + 1));
  }
  return result;
}

}  // namespace isq
