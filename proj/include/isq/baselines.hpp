#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "isq/dense.hpp"
#include "isq/learner.hpp"

namespace isq {

enum class BaselineKind { ISQ, ISQ1, Vanilla, Sorting, Myopic, IDQN, RSQ, EQ };

inline BaselineKind baseline_from_string(const std::string& s) {
  if (s == "isq") return BaselineKind::ISQ;
  if (s == "isq1") return BaselineKind::ISQ1;
  if (s == "vanilla") return BaselineKind::Vanilla;
  if (s == "sorting") return BaselineKind::Sorting;
  if (s == "myopic") return BaselineKind::Myopic;
  if (s == "idqn") return BaselineKind::IDQN;
  if (s == "rsq") return BaselineKind::RSQ;
  if (s == "eq") return BaselineKind::EQ;
  throw std::invalid_argument("unknown agent kind: " + s);
}

// Loss/policy/kernel knobs for the cascade-based agents. Vanilla, Sorting and
// IDQN have their own training loops below.
struct AgentVariant {
  LossKind loss = LossKind::Standard;
  PolicyKind policy = PolicyKind::Greedy;
  bool pooled = true;
};

inline AgentVariant variant_for(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Myopic: return {LossKind::Myopic, PolicyKind::Greedy, true};
    case BaselineKind::RSQ: return {LossKind::RandomSelect, PolicyKind::RandomItem, true};
    case BaselineKind::EQ: return {LossKind::Standard, PolicyKind::Greedy, false};
    default: return {};
  }
}

// Sorting-DQN preprocessing: circle items ordered by radius, largest first.
// Returns the stable ordering so actions can be mapped back.
inline std::vector<std::size_t> sort_order(const std::vector<std::vector<double>>& items) {
  for (const auto& f : items)
    if (f.size() != 3)
      throw std::invalid_argument("sort_items: expected (pos_x, pos_y, rad) features");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a][2] > items[b][2]; });
  return order;
}

inline std::vector<std::vector<double>> sort_items(const std::vector<std::vector<double>>& items) {
  std::vector<std::vector<double>> out;
  out.reserve(items.size());
  for (std::size_t i : sort_order(items)) out.push_back(items[i]);
  return out;
}

// Flat fully connected agent over the concatenated features. Shapes are bound
// to a fixed N at construction; it only supports the single-selection study.
struct DenseAgent {
  DenseNet net;
  DenseNet target;
  AdamState adam;
  SMDPDescriptor desc;
  bool sorting = false;
};

inline DenseAgent make_dense_agent(const TrainConfig& cfg, const SMDPDescriptor& desc,
                                   std::uint64_t init_seed, bool sorting) {
  if (desc.n_select != 1)
    throw std::invalid_argument("dense agents only support K = 1");
  NetConfig net_cfg;
  net_cfg.d_item = desc.d_item;
  net_cfg.n_commands = desc.n_commands;
  net_cfg.d_context = desc.d_context;
  net_cfg.channels = cfg.channels;
  net_cfg.depth = cfg.depth;
  net_cfg.activation = cfg.activation;
  SeededRng rng(init_seed);
  DenseAgent agent;
  agent.desc = desc;
  agent.sorting = sorting;
  agent.net = make_dense_like(make_shared_shape(net_cfg), 0, desc.n_items,
                              desc.n_context, rng);
  agent.target = agent.net;
  agent.adam = AdamState(dense_flatten(agent.net).size(), cfg.lr);
  return agent;
}

inline QMatrix vanilla_forward(const DenseAgent& agent, const DenseNet& net,
                               const PhaseState& s) {
  if (static_cast<int>(s.unselected.size()) != agent.desc.n_items || s.phase != 0)
    throw std::invalid_argument("vanilla_forward: built for phase 0 with fixed N");
  std::vector<std::size_t> order;
  PhaseState view = s;
  if (agent.sorting) {
    order = sort_order(s.unselected);
    std::vector<std::vector<double>> sorted;
    for (std::size_t i : order) sorted.push_back(s.unselected[i]);
    view.unselected = std::move(sorted);
  }
  const std::vector<double> out =
      dense_forward(net, concat_input(to_input(view, agent.desc)));
  QMatrix q(static_cast<std::size_t>(agent.desc.n_items),
            static_cast<std::size_t>(agent.desc.n_commands));
  for (std::size_t j = 0; j < q.rows(); ++j) {
    const std::size_t row = agent.sorting ? order[j] : j;
    for (std::size_t c = 0; c < q.cols(); ++c)
      q(row, c) = out[j * q.cols() + c];
  }
  return q;
}

inline QMatrix vanilla_forward(const DenseAgent& agent, const PhaseState& s) {
  return vanilla_forward(agent, agent.net, s);
}

struct DenseTrainResult {
  DenseAgent agent;
  LearningCurve curve;
};

using DenseEvalHook = std::function<CurvePoint(const DenseAgent&, long step)>;

// Standard DQN on the flat network; the IS-MDP view collapses to plain
// one-step Q-learning because K = 1.
inline DenseTrainResult train_dense(const TrainConfig& cfg, SMDPInterface& env, bool sorting,
                                    std::uint64_t seed, const DenseEvalHook& eval = nullptr) {
  const SMDPDescriptor desc = env.descriptor();
  DenseTrainResult result{make_dense_agent(cfg, desc, derive_seed(seed, 1), sorting), {}};
  DenseAgent& agent = result.agent;
  SeededRng action_rng(derive_seed(seed, 2));
  SeededRng replay_rng(derive_seed(seed, 3));
  ReplayBuffer buffer(cfg.buffer_capacity);

  PhaseState state = to_phase0(env.reset(derive_seed(seed, 4)));
  for (long step = 0; step < cfg.total_steps; ++step) {
    const double eps = epsilon(step, cfg);
    PhaseAction a{0, 0};
    if (action_rng.uniform() < eps) {
      const auto idx = action_rng.uniform_int(
          static_cast<std::uint64_t>(desc.n_items) * static_cast<std::uint64_t>(desc.n_commands));
      a = {static_cast<int>(idx / static_cast<std::uint64_t>(desc.n_commands)),
           static_cast<int>(idx % static_cast<std::uint64_t>(desc.n_commands))};
    } else {
      a = argmax_action(vanilla_forward(agent, state));
    }
    PhaseTransition tr = phase_step(env, state, a);
    ReplayChain chain;
    chain.states.push_back(std::move(tr.state));
    chain.actions.push_back(a);
    chain.reward = tr.reward;
    chain.next0 = tr.next;
    state = std::move(tr.next);
    buffer.push(std::move(chain));

    if (buffer.size() >= static_cast<std::size_t>(cfg.minibatch)) {
      DenseGrads grads(agent.net);
      double total_loss = 0.0;
      for (int i = 0; i < cfg.minibatch; ++i) {
        const ReplayChain& chain_i = buffer.sample(replay_rng);
        const PhaseState& s0 = chain_i.states[0];
        const QMatrix q = vanilla_forward(agent, s0);
        const PhaseAction act = chain_i.actions[0];
        const QMatrix tq = vanilla_forward(agent, agent.target, chain_i.next0);
        double best = tq(0, 0);
        for (std::size_t j = 0; j < tq.size(); ++j) best = std::max(best, tq.data()[j]);
        const double diff = q(static_cast<std::size_t>(act.item),
                              static_cast<std::size_t>(act.command)) -
                            (chain_i.reward + cfg.gamma * best);
        total_loss += diff * diff;

        // upstream in the network's own (possibly sorted) row order
        std::vector<std::size_t> order;
        PhaseState view = s0;
        if (agent.sorting) {
          order = sort_order(s0.unselected);
          std::vector<std::vector<double>> sorted;
          for (std::size_t j : order) sorted.push_back(s0.unselected[j]);
          view.unselected = std::move(sorted);
        }
        std::vector<double> upstream(q.size(), 0.0);
        std::size_t net_row = static_cast<std::size_t>(act.item);
        if (agent.sorting) {
          for (std::size_t j = 0; j < order.size(); ++j)
            if (order[j] == static_cast<std::size_t>(act.item)) {
              net_row = j;
              break;
            }
        }
        upstream[net_row * static_cast<std::size_t>(desc.n_commands) +
                 static_cast<std::size_t>(act.command)] = 2.0 * diff;
        grads.accumulate(
            dense_backward(agent.net, concat_input(to_input(view, desc)), upstream));
      }
      if (!std::isfinite(total_loss))
        throw std::runtime_error("train_dense: non-finite loss at step " + std::to_string(step));
      std::vector<double> flat_grads = dense_flatten(grads);
      for (double& g : flat_grads) g /= static_cast<double>(cfg.minibatch);
      std::vector<double> flat = dense_flatten(agent.net);
      adam_step(flat, flat_grads, agent.adam);
      dense_unflatten(agent.net, flat);
    }

    if ((step + 1) % cfg.target_update == 0) agent.target = agent.net;
    if (eval && cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0)
      result.curve.push_back(eval(agent, step + 1));
  }
  return result;
}

// IDQN: every item owns the same weight-shared Q-function over commands and
// all K selections happen at phase 0, ranked by the best command value.
inline std::vector<std::pair<int, int>> idqn_policy(const SharedParams& net,
                                                    const PhaseState& s0,
                                                    const SMDPDescriptor& desc) {
  const QMatrix q = network_forward(net, to_input(s0, desc));
  std::vector<int> ranked(q.rows());
  std::iota(ranked.begin(), ranked.end(), 0);
  std::vector<double> score(q.rows());
  std::vector<int> best_cmd(q.rows(), 0);
  for (std::size_t n = 0; n < q.rows(); ++n) {
    score[n] = q(n, 0);
    for (std::size_t c = 1; c < q.cols(); ++c)
      if (q(n, c) > score[n]) {
        score[n] = q(n, c);
        best_cmd[n] = static_cast<int>(c);
      }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  std::vector<std::pair<int, int>> picks;
  for (int i = 0; i < desc.n_select; ++i) {
    const int n = ranked[static_cast<std::size_t>(i)];
    picks.emplace_back(s0.unselected_ids[static_cast<std::size_t>(n)],
                       best_cmd[static_cast<std::size_t>(n)]);
  }
  return picks;
}

struct IDQNAgent {
  SharedParams net;
  SharedParams target;
  AdamState adam;
  NetConfig cfg;
  SMDPDescriptor desc;
};

struct IDQNTrainResult {
  IDQNAgent agent;
  LearningCurve curve;
};

using IDQNEvalHook = std::function<CurvePoint(const IDQNAgent&, long step)>;

inline IDQNTrainResult train_idqn(const TrainConfig& cfg, SMDPInterface& env,
                                  std::uint64_t seed, const IDQNEvalHook& eval = nullptr) {
  const SMDPDescriptor desc = env.descriptor();
  NetConfig net_cfg;
  net_cfg.d_item = desc.d_item;
  net_cfg.n_commands = desc.n_commands;
  net_cfg.d_context = desc.d_context;
  net_cfg.channels = cfg.channels;
  // each item's net is the output layer alone: its self path is the local
  // pathway, its mean-pooled terms are the read-only view of the whole state
  net_cfg.depth = 0;
  net_cfg.activation = cfg.activation;

  SeededRng init_rng(derive_seed(seed, 1));
  SeededRng action_rng(derive_seed(seed, 2));
  SeededRng replay_rng(derive_seed(seed, 3));

  IDQNTrainResult result;
  result.agent.cfg = net_cfg;
  result.agent.desc = desc;
  result.agent.net = make_shared_params(net_cfg, init_rng);
  result.agent.target = result.agent.net;
  result.agent.adam = AdamState(param_count(result.agent.net), cfg.lr);
  IDQNAgent& agent = result.agent;
  ReplayBuffer buffer(cfg.buffer_capacity);

  PhaseState state = to_phase0(env.reset(derive_seed(seed, 4)));
  for (long step = 0; step < cfg.total_steps; ++step) {
    const double eps = epsilon(step, cfg);
    std::vector<std::pair<int, int>> picks;
    if (action_rng.uniform() < eps) {
      const auto order = action_rng.permutation(static_cast<std::size_t>(desc.n_items));
      for (int i = 0; i < desc.n_select; ++i)
        picks.emplace_back(static_cast<int>(order[static_cast<std::size_t>(i)]),
                           static_cast<int>(action_rng.uniform_int(
                               static_cast<std::uint64_t>(desc.n_commands))));
    } else {
      picks = idqn_policy(agent.net, state, desc);
    }
    auto [reward, obs] = env.step(picks);
    ReplayChain chain;
    chain.states.push_back(state);
    for (auto [slot, cmd] : picks) chain.actions.push_back({slot, cmd});
    chain.reward = reward;
    chain.next0 = to_phase0(obs);
    state = chain.next0;
    buffer.push(std::move(chain));

    if (buffer.size() >= static_cast<std::size_t>(cfg.minibatch)) {
      std::vector<double> grads(param_count(agent.net), 0.0);
      double total_loss = 0.0;
      for (int i = 0; i < cfg.minibatch; ++i) {
        const ReplayChain& chain_i = buffer.sample(replay_rng);
        const PhaseInput in = to_input(chain_i.states[0], desc);
        ForwardTrace trace;
        const QMatrix q = network_forward(agent.net, in, &trace);
        const QMatrix tq = network_forward(agent.target, to_input(chain_i.next0, desc));
        QMatrix upstream(q.rows(), q.cols());
        for (const PhaseAction& a : chain_i.actions) {
          // phase-0 item indices are the original slots; rows persist
          double best = tq(static_cast<std::size_t>(a.item), 0);
          for (std::size_t c = 1; c < tq.cols(); ++c)
            best = std::max(best, tq(static_cast<std::size_t>(a.item), c));
          const double diff = q(static_cast<std::size_t>(a.item),
                                static_cast<std::size_t>(a.command)) -
                              (chain_i.reward + cfg.gamma * best);
          total_loss += diff * diff;
          upstream(static_cast<std::size_t>(a.item), static_cast<std::size_t>(a.command)) =
              2.0 * diff;
        }
        network_backward_into(agent.net, trace, upstream, 1.0, grads);
      }
      if (!std::isfinite(total_loss))
        throw std::runtime_error("train_idqn: non-finite loss at step " + std::to_string(step));
      for (double& g : grads) g /= static_cast<double>(cfg.minibatch);
      std::vector<double> flat = flatten(agent.net);
      adam_step(flat, grads, agent.adam);
      unflatten(agent.net, flat);
    }
    if ((step + 1) % cfg.target_update == 0) agent.target = agent.net;
    if (eval && cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0)
      result.curve.push_back(eval(agent, step + 1));
  }
  return result;
}

// Uniform evaluation interface over all agent families.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode() {}
  virtual PhaseAction act(const PhaseState& s, SeededRng& rng) = 0;
};

class CascadedPolicy : public Policy {
 public:
  CascadedPolicy(CascadedQ nets, SMDPDescriptor desc, PolicyKind kind = PolicyKind::Greedy)
      : nets_(std::move(nets)), desc_(desc), kind_(kind) {}

  PhaseAction act(const PhaseState& s, SeededRng& rng) override {
    return select_action(nets_, s, desc_, 0.0, rng, kind_);
  }

  const CascadedQ& nets() const { return nets_; }

 private:
  CascadedQ nets_;
  SMDPDescriptor desc_;
  PolicyKind kind_;
};

class DensePolicy : public Policy {
 public:
  explicit DensePolicy(DenseAgent agent) : agent_(std::move(agent)) {}

  PhaseAction act(const PhaseState& s, SeededRng&) override {
    return argmax_action(vanilla_forward(agent_, s));
  }

 private:
  DenseAgent agent_;
};

class IDQNPolicy : public Policy {
 public:
  IDQNPolicy(SharedParams net, SMDPDescriptor desc) : net_(std::move(net)), desc_(desc) {}

  void begin_episode() override { pending_.clear(); }

  PhaseAction act(const PhaseState& s, SeededRng&) override {
    if (s.phase == 0) pending_ = idqn_policy(net_, s, desc_);
    if (pending_.empty()) throw std::runtime_error("IDQNPolicy: no pending selection");
    auto [slot, cmd] = pending_.front();
    pending_.erase(pending_.begin());
    for (std::size_t n = 0; n < s.unselected_ids.size(); ++n)
      if (s.unselected_ids[n] == slot) return {static_cast<int>(n), cmd};
    throw std::runtime_error("IDQNPolicy: selected slot vanished");
  }

 private:
  SharedParams net_;
  SMDPDescriptor desc_;
  std::vector<std::pair<int, int>> pending_;
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(int n_commands) : n_commands_(n_commands) {}

  PhaseAction act(const PhaseState& s, SeededRng& rng) override {
    const auto idx = rng.uniform_int(static_cast<std::uint64_t>(s.unselected.size()) *
                                     static_cast<std::uint64_t>(n_commands_));
    return {static_cast<int>(idx / static_cast<std::uint64_t>(n_commands_)),
            static_cast<int>(idx % static_cast<std::uint64_t>(n_commands_))};
  }

 private:
  int n_commands_;
};

}  // namespace isq
