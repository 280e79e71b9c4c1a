#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "isq/env_tabular.hpp"

namespace isq {

// Enumerated MDP with a per-transition discount. The IS-form of a Select-MDP
// discounts only the final-phase transition, so the discount lives on the
// edge rather than on the MDP.
struct EnumTransition {
  double prob = 1.0;
  double reward = 0.0;
  int next = 0;
  double discount = 1.0;
};

struct EnumMDP {
  int n_states = 0;
  std::vector<std::vector<std::vector<EnumTransition>>> trans;  // [state][action]
};

struct QTable {
  std::vector<std::vector<double>> q;  // [state][action]
  double residual = 0.0;
  int sweeps = 0;

  double state_value(int s) const {
    const auto& row = q[static_cast<std::size_t>(s)];
    double best = row.empty() ? 0.0 : row[0];
    for (double v : row) best = std::max(best, v);
    return best;
  }

  int greedy_action(int s) const {
    const auto& row = q[static_cast<std::size_t>(s)];
    int best = 0;
    for (std::size_t a = 1; a < row.size(); ++a)
      if (row[a] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
    return best;
  }
};

inline QTable value_iteration(const EnumMDP& mdp, double tol, int max_sweeps = 200000) {
  if (tol <= 0) throw std::invalid_argument("value_iteration: tol must be positive");
  QTable table;
  table.q.resize(static_cast<std::size_t>(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s)
    table.q[static_cast<std::size_t>(s)].assign(mdp.trans[static_cast<std::size_t>(s)].size(),
                                                0.0);
  std::vector<double> value(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double residual = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      const auto& actions = mdp.trans[static_cast<std::size_t>(s)];
      for (std::size_t a = 0; a < actions.size(); ++a) {
        double acc = 0.0;
        for (const EnumTransition& t : actions[a])
          acc += t.prob * (t.reward + t.discount * value[static_cast<std::size_t>(t.next)]);
        residual = std::max(residual,
                            std::abs(acc - table.q[static_cast<std::size_t>(s)][a]));
        table.q[static_cast<std::size_t>(s)][a] = acc;
      }
    }
    for (int s = 0; s < mdp.n_states; ++s) value[static_cast<std::size_t>(s)] =
        table.state_value(s);
    table.sweeps = sweep + 1;
    table.residual = residual;
    if (residual <= tol) return table;
  }
  throw std::runtime_error("value_iteration: did not converge");
}

// Finite-horizon optimal Q-values by exhaustive backward rollout, an
// independent check of value_iteration.
inline QTable finite_horizon_values(const EnumMDP& mdp, int horizon) {
  QTable table;
  table.q.resize(static_cast<std::size_t>(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s)
    table.q[static_cast<std::size_t>(s)].assign(mdp.trans[static_cast<std::size_t>(s)].size(),
                                                0.0);
  std::vector<double> value(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (int h = 0; h < horizon; ++h) {
    for (int s = 0; s < mdp.n_states; ++s) {
      const auto& actions = mdp.trans[static_cast<std::size_t>(s)];
      for (std::size_t a = 0; a < actions.size(); ++a) {
        double acc = 0.0;
        for (const EnumTransition& t : actions[a])
          acc += t.prob * (t.reward + t.discount * value[static_cast<std::size_t>(t.next)]);
        table.q[static_cast<std::size_t>(s)][a] = acc;
      }
    }
    for (int s = 0; s < mdp.n_states; ++s)
      value[static_cast<std::size_t>(s)] = table.state_value(s);
  }
  table.sweeps = horizon;
  return table;
}

inline EnumMDP enumerate_smdp(const TabularSMDP& tab, double gamma) {
  EnumMDP mdp;
  mdp.n_states = tab.n_states();
  mdp.trans.resize(static_cast<std::size_t>(mdp.n_states));
  for (int s = 0; s < mdp.n_states; ++s) {
    auto& actions = mdp.trans[static_cast<std::size_t>(s)];
    actions.resize(static_cast<std::size_t>(tab.n_actions()));
    for (int a = 0; a < tab.n_actions(); ++a) {
      const auto& row = tab.transition_row(s, a);
      for (int s2 = 0; s2 < mdp.n_states; ++s2)
        if (row[static_cast<std::size_t>(s2)] > 0)
          actions[static_cast<std::size_t>(a)].push_back(
              {row[static_cast<std::size_t>(s2)], tab.reward(s, a), s2, gamma});
    }
  }
  return mdp;
}

// IS-form of a tabular Select-MDP. Phase states are (underlying state, picks
// so far); intermediate transitions are deterministic with zero reward and no
// discounting, the final phase plays the joint action with discount gamma.
// The first n_states() indices are the phase-0 states in base-state order.
struct ISEnum {
  EnumMDP mdp;
  struct StateDesc {
    int base = 0;
    std::vector<std::pair<int, int>> picks;
    std::vector<int> remaining;  // selectable slots, ascending
  };
  std::vector<StateDesc> states;
  int n_commands = 1;

  // actions are (remaining-slot index, command) in lexicographic order
  std::pair<int, int> decode_action(int state, int action) const {
    const auto& d = states[static_cast<std::size_t>(state)];
    return {d.remaining[static_cast<std::size_t>(action / n_commands)], action % n_commands};
  }
};

inline ISEnum enumerate_ismdp(const TabularSMDP& tab, double gamma) {
  const TabularConfig& cfg = tab.config();
  ISEnum out;
  out.n_commands = cfg.n_commands;

  std::map<std::pair<int, std::vector<std::pair<int, int>>>, int> index;
  auto intern = [&](int base, const std::vector<std::pair<int, int>>& picks) {
    auto key = std::make_pair(base, picks);
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(out.states.size());
    index.emplace(key, id);
    ISEnum::StateDesc desc;
    desc.base = base;
    desc.picks = picks;
    std::vector<bool> used(static_cast<std::size_t>(cfg.n_items), false);
    for (auto [slot, cmd] : picks) used[static_cast<std::size_t>(slot)] = true;
    for (int n = 0; n < cfg.n_items; ++n)
      if (!used[static_cast<std::size_t>(n)]) desc.remaining.push_back(n);
    out.states.push_back(std::move(desc));
    return id;
  };

  for (int s = 0; s < tab.n_states(); ++s) intern(s, {});

  // expand breadth-first; states vector grows while iterating
  for (std::size_t id = 0; id < out.states.size(); ++id) {
    const auto desc = out.states[id];  // copy: intern() may reallocate
    const int k = static_cast<int>(desc.picks.size());
    out.mdp.trans.resize(std::max(out.mdp.trans.size(), out.states.size()));
    auto& actions = out.mdp.trans[id];
    actions.resize(desc.remaining.size() * static_cast<std::size_t>(cfg.n_commands));
    for (std::size_t ri = 0; ri < desc.remaining.size(); ++ri) {
      for (int c = 0; c < cfg.n_commands; ++c) {
        auto& edge = actions[ri * static_cast<std::size_t>(cfg.n_commands) +
                             static_cast<std::size_t>(c)];
        std::vector<std::pair<int, int>> picks = desc.picks;
        picks.emplace_back(desc.remaining[ri], c);
        if (k + 1 < cfg.n_select) {
          edge.push_back({1.0, 0.0, intern(desc.base, picks), 1.0});
        } else {
          const int a = tab.encode_action(picks);
          const auto& row = tab.transition_row(desc.base, a);
          for (int s2 = 0; s2 < tab.n_states(); ++s2)
            if (row[static_cast<std::size_t>(s2)] > 0)
              edge.push_back({row[static_cast<std::size_t>(s2)], tab.reward(desc.base, a),
                              intern(s2, {}), gamma});
        }
      }
    }
  }
  out.mdp.n_states = static_cast<int>(out.states.size());
  out.mdp.trans.resize(out.states.size());
  return out;
}

}  // namespace isq
