#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "isq/ismdp.hpp"
#include "isq/rng.hpp"

namespace isq {

struct TabularConfig {
  int n_items = 3;    // N
  int alphabet = 2;   // per-item info values
  int n_commands = 1;
  int n_select = 2;   // K
};

namespace detail {

inline std::uint64_t mix_hash(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

}  // namespace detail

// Enumerable random S-MDP used as a brute-force oracle. Transitions factorize
// per slot: the next info of slot n depends on the slot's own (info, selected,
// command) key and on the sorted multiset of all keys. Slots with identical
// keys therefore get identical conditionals, which makes every table invariant
// under relabeling of identical items by construction.
class TabularSMDP : public SMDPInterface {
 public:
  TabularSMDP(const TabularConfig& cfg, std::uint64_t build_seed)
      : cfg_(cfg), build_seed_(build_seed), rng_(0) {
    if (cfg.n_select < 1 || cfg.n_select > cfg.n_items || cfg.alphabet < 1 ||
        cfg.n_commands < 1)
      throw std::invalid_argument("TabularSMDP: bad config");
    n_states_ = 1;
    for (int i = 0; i < cfg.n_items; ++i) {
      n_states_ *= cfg.alphabet;
      if (n_states_ > 100000) throw std::invalid_argument("TabularSMDP: state space too large");
    }
    enumerate_actions();
    if (static_cast<long>(n_states_) * static_cast<long>(actions_.size()) > 100000)
      throw std::invalid_argument("TabularSMDP: state-action space too large");
    if (static_cast<long>(n_states_) * static_cast<long>(actions_.size()) *
            static_cast<long>(n_states_) >
        4000000)
      throw std::invalid_argument("TabularSMDP: transition table too large");
    build_tables();
  }

  // Hand-specified instance: rewards and transition rows indexed by
  // state * n_actions + action, actions in the canonical enumeration order.
  TabularSMDP(const TabularConfig& cfg, std::vector<double> rewards,
              std::vector<std::vector<double>> transitions)
      : cfg_(cfg), build_seed_(0), rng_(0) {
    n_states_ = 1;
    for (int i = 0; i < cfg.n_items; ++i) n_states_ *= cfg.alphabet;
    enumerate_actions();
    const std::size_t cells = static_cast<std::size_t>(n_states_) * actions_.size();
    if (rewards.size() != cells || transitions.size() != cells)
      throw std::invalid_argument("TabularSMDP: table size mismatch");
    for (const auto& row : transitions) {
      if (row.size() != static_cast<std::size_t>(n_states_))
        throw std::invalid_argument("TabularSMDP: bad transition row length");
      double total = 0.0;
      for (double p : row) total += p;
      if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("TabularSMDP: transition row does not sum to 1");
    }
    rewards_ = std::move(rewards);
    trans_ = std::move(transitions);
  }

  // --- enumeration interface (oracle side) ---

  int n_states() const { return n_states_; }
  int n_actions() const { return static_cast<int>(actions_.size()); }

  const std::vector<std::pair<int, int>>& action(int a) const {
    return actions_[static_cast<std::size_t>(a)];
  }

  double reward(int s, int a) const {
    return rewards_[static_cast<std::size_t>(s * n_actions() + a)];
  }

  const std::vector<double>& transition_row(int s, int a) const {
    return trans_[static_cast<std::size_t>(s * n_actions() + a)];
  }

  std::vector<int> decode_state(int s) const {
    std::vector<int> infos(static_cast<std::size_t>(cfg_.n_items));
    for (int n = 0; n < cfg_.n_items; ++n) {
      infos[static_cast<std::size_t>(n)] = s % cfg_.alphabet;
      s /= cfg_.alphabet;
    }
    return infos;
  }

  int encode_state(const std::vector<int>& infos) const {
    int s = 0;
    for (int n = cfg_.n_items - 1; n >= 0; --n)
      s = s * cfg_.alphabet + infos[static_cast<std::size_t>(n)];
    return s;
  }

  // index of a joint action given (slot, command) pairs in any order
  int encode_action(std::vector<std::pair<int, int>> picks) const {
    std::sort(picks.begin(), picks.end());
    for (std::size_t a = 0; a < actions_.size(); ++a)
      if (actions_[a] == picks) return static_cast<int>(a);
    throw std::invalid_argument("TabularSMDP: no such action");
  }

  const TabularConfig& config() const { return cfg_; }

  // --- SMDPInterface (environment side) ---

  SMDPDescriptor descriptor() const override {
    return {cfg_.n_items, cfg_.n_select, cfg_.n_commands, cfg_.alphabet, 0, 0};
  }

  SMDPObservation reset(std::uint64_t seed) override {
    rng_ = SeededRng(seed);
    state_ = static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(n_states_)));
    return observe();
  }

  std::pair<double, SMDPObservation> step(
      const std::vector<std::pair<int, int>>& selection) override {
    const int a = encode_action(selection);
    const double r = reward(state_, a);
    const auto& row = transition_row(state_, a);
    double u = rng_.uniform();
    int next = n_states_ - 1;
    for (int s2 = 0; s2 < n_states_; ++s2) {
      u -= row[static_cast<std::size_t>(s2)];
      if (u < 0) {
        next = s2;
        break;
      }
    }
    state_ = next;
    return {r, observe()};
  }

  int current_state() const { return state_; }
  void set_state(int s) { state_ = s; }

 private:
  // per-slot key: info, selected flag, command (0 when unselected)
  struct Key {
    int info, sel, cmd;
    bool operator<(const Key& o) const {
      return std::tie(info, sel, cmd) < std::tie(o.info, o.sel, o.cmd);
    }
    bool operator==(const Key&) const = default;
  };

  void enumerate_actions() {
    std::vector<int> slots(static_cast<std::size_t>(cfg_.n_select));
    enumerate_combinations(0, 0, slots);
  }

  void enumerate_combinations(int start, int depth, std::vector<int>& slots) {
    if (depth == cfg_.n_select) {
      std::vector<int> cmds(static_cast<std::size_t>(cfg_.n_select), 0);
      for (;;) {
        std::vector<std::pair<int, int>> picks;
        for (int i = 0; i < cfg_.n_select; ++i)
          picks.emplace_back(slots[static_cast<std::size_t>(i)],
                             cmds[static_cast<std::size_t>(i)]);
        actions_.push_back(std::move(picks));
        int i = cfg_.n_select - 1;
        while (i >= 0 && ++cmds[static_cast<std::size_t>(i)] == cfg_.n_commands)
          cmds[static_cast<std::size_t>(i--)] = 0;
        if (i < 0) break;
      }
      return;
    }
    for (int s = start; s <= cfg_.n_items - (cfg_.n_select - depth); ++s) {
      slots[static_cast<std::size_t>(depth)] = s;
      enumerate_combinations(s + 1, depth + 1, slots);
    }
  }

  std::uint64_t signature_hash(const std::vector<Key>& keys) const {
    std::vector<Key> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = detail::mix_hash(build_seed_, 0x5157ULL);
    for (const Key& k : sorted) {
      h = detail::mix_hash(h, static_cast<std::uint64_t>(k.info));
      h = detail::mix_hash(h, static_cast<std::uint64_t>(k.sel));
      h = detail::mix_hash(h, static_cast<std::uint64_t>(k.cmd));
    }
    return h;
  }

  void build_tables() {
    const int na = n_actions();
    rewards_.assign(static_cast<std::size_t>(n_states_ * na), 0.0);
    trans_.assign(static_cast<std::size_t>(n_states_ * na), {});
    for (int s = 0; s < n_states_; ++s) {
      const std::vector<int> infos = decode_state(s);
      for (int a = 0; a < na; ++a) {
        std::vector<Key> keys(static_cast<std::size_t>(cfg_.n_items));
        for (int n = 0; n < cfg_.n_items; ++n)
          keys[static_cast<std::size_t>(n)] = {infos[static_cast<std::size_t>(n)], 0, 0};
        for (auto [slot, cmd] : actions_[static_cast<std::size_t>(a)]) {
          keys[static_cast<std::size_t>(slot)].sel = 1;
          keys[static_cast<std::size_t>(slot)].cmd = cmd;
        }
        const std::uint64_t sig = signature_hash(keys);
        rewards_[static_cast<std::size_t>(s * na + a)] = SeededRng(sig).uniform(-1.0, 1.0);

        // per-slot conditional distributions over the next info value
        std::vector<std::vector<double>> cond(static_cast<std::size_t>(cfg_.n_items));
        for (int n = 0; n < cfg_.n_items; ++n) {
          const Key& k = keys[static_cast<std::size_t>(n)];
          std::uint64_t h = detail::mix_hash(sig, 0x7452ULL);
          h = detail::mix_hash(h, static_cast<std::uint64_t>(k.info));
          h = detail::mix_hash(h, static_cast<std::uint64_t>(k.sel));
          h = detail::mix_hash(h, static_cast<std::uint64_t>(k.cmd));
          SeededRng crng(h);
          std::vector<double> w(static_cast<std::size_t>(cfg_.alphabet));
          double total = 0.0;
          for (double& v : w) {
            v = crng.uniform(0.1, 1.1);
            total += v;
          }
          for (double& v : w) v /= total;
          cond[static_cast<std::size_t>(n)] = std::move(w);
        }

        std::vector<double>& row = trans_[static_cast<std::size_t>(s * na + a)];
        row.assign(static_cast<std::size_t>(n_states_), 1.0);
        for (int s2 = 0; s2 < n_states_; ++s2) {
          const std::vector<int> next = decode_state(s2);
          for (int n = 0; n < cfg_.n_items; ++n)
            row[static_cast<std::size_t>(s2)] *=
                cond[static_cast<std::size_t>(n)][static_cast<std::size_t>(
                    next[static_cast<std::size_t>(n)])];
        }
      }
    }
  }

  SMDPObservation observe() const {
    SMDPObservation obs;
    const std::vector<int> infos = decode_state(state_);
    for (int n = 0; n < cfg_.n_items; ++n) {
      std::vector<double> onehot(static_cast<std::size_t>(cfg_.alphabet), 0.0);
      onehot[static_cast<std::size_t>(infos[static_cast<std::size_t>(n)])] = 1.0;
      obs.items.push_back(std::move(onehot));
    }
    return obs;
  }

  TabularConfig cfg_;
  std::uint64_t build_seed_;
  SeededRng rng_;
  int n_states_ = 0;
  int state_ = 0;
  std::vector<std::vector<std::pair<int, int>>> actions_;
  std::vector<double> rewards_;
  std::vector<std::vector<double>> trans_;
};

inline TabularSMDP tabular_random(std::uint64_t seed, int n_items, int alphabet, int n_commands,
                                  int n_select) {
  return TabularSMDP({n_items, alphabet, n_commands, n_select}, seed);
}

}  // namespace isq
