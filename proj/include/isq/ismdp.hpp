#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "isq/groups.hpp"
#include "isq/matrix.hpp"

namespace isq {

struct SMDPDescriptor {
  int n_items = 0;     // N
  int n_select = 0;    // K
  int n_commands = 0;  // C
  int d_item = 0;
  int d_context = 0;   // 0 when the task has no context items
  int n_context = 0;   // context item count (constant per task)
};

struct SMDPObservation {
  std::vector<std::vector<double>> items;    // N rows of d_item features
  std::vector<std::vector<double>> context;  // rows of d_context features
};

// Behavioral contract of a Select-MDP: one macro step consumes a joint
// selection of K distinct item indices with a command each.
class SMDPInterface {
 public:
  virtual ~SMDPInterface() = default;
  virtual SMDPDescriptor descriptor() const = 0;
  virtual SMDPObservation reset(std::uint64_t seed) = 0;
  virtual std::pair<double, SMDPObservation> step(
      const std::vector<std::pair<int, int>>& selection) = 0;
};

struct PhaseAction {
  int item = 0;     // index into the unselected list
  int command = 0;

  bool operator==(const PhaseAction&) const = default;
};

// IS-MDP state at phase k: the (info, command) pairs chosen so far, the
// unselected item infos, and the context items. Original item slots are
// tracked so the final phase can hand the joint selection back to the S-MDP.
struct PhaseState {
  int phase = 0;
  std::vector<std::vector<double>> selected;
  std::vector<std::vector<double>> unselected;
  std::vector<std::vector<double>> context;
  std::vector<int> unselected_ids;
  std::vector<std::pair<int, int>> picks;  // (original slot, command) so far
};

struct PhaseTransition {
  PhaseState state;
  PhaseAction action;
  double reward = 0.0;  // zero unless is_final_phase
  PhaseState next;
  bool is_final_phase = false;
};

inline PhaseState to_phase0(const SMDPObservation& obs) {
  PhaseState s;
  s.phase = 0;
  s.unselected = obs.items;
  s.context = obs.context;
  s.unselected_ids.resize(obs.items.size());
  for (std::size_t i = 0; i < obs.items.size(); ++i) s.unselected_ids[i] = static_cast<int>(i);
  return s;
}

// All (N-k)*C feasible actions in lexicographic (item, command) order.
inline std::vector<PhaseAction> feasible_actions(const PhaseState& s, int n_commands) {
  std::vector<PhaseAction> out;
  out.reserve(s.unselected.size() * static_cast<std::size_t>(n_commands));
  for (int n = 0; n < static_cast<int>(s.unselected.size()); ++n)
    for (int c = 0; c < n_commands; ++c) out.push_back({n, c});
  return out;
}

inline PhaseTransition phase_step(SMDPInterface& env, const PhaseState& s, PhaseAction a) {
  const SMDPDescriptor d = env.descriptor();
  if (a.item < 0 || a.item >= static_cast<int>(s.unselected.size()) || a.command < 0 ||
      a.command >= d.n_commands)
    throw std::invalid_argument("phase_step: infeasible action");

  PhaseTransition tr;
  tr.state = s;
  tr.action = a;
  tr.is_final_phase = s.phase == d.n_select - 1;

  PhaseState next = s;
  next.phase = s.phase + 1;
  std::vector<double> pair = s.unselected[static_cast<std::size_t>(a.item)];
  pair.resize(pair.size() + static_cast<std::size_t>(d.n_commands), 0.0);
  pair[static_cast<std::size_t>(d.d_item + a.command)] = 1.0;
  next.selected.push_back(std::move(pair));
  next.unselected.erase(next.unselected.begin() + a.item);
  next.picks.emplace_back(s.unselected_ids[static_cast<std::size_t>(a.item)], a.command);
  next.unselected_ids.erase(next.unselected_ids.begin() + a.item);

  if (!tr.is_final_phase) {
    tr.reward = 0.0;
    tr.next = std::move(next);
  } else {
    auto [reward, obs] = env.step(next.picks);
    tr.reward = reward;
    tr.next = to_phase0(obs);
  }
  return tr;
}

// Network-input view of a phase state.
inline PhaseInput to_input(const PhaseState& s, int d_item, int n_commands, int d_context) {
  PhaseInput in;
  in.phase = s.phase;
  auto fill = [](Matrix& m, const std::vector<std::vector<double>>& rows, int width) {
    m = Matrix(rows.size(), static_cast<std::size_t>(width));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[j].size() != static_cast<std::size_t>(width))
        throw std::invalid_argument("to_input: feature width mismatch");
      for (std::size_t c = 0; c < rows[j].size(); ++c) m(j, c) = rows[j][c];
    }
  };
  fill(in.groups[kSelected], s.selected, d_item + n_commands);
  fill(in.groups[kUnselected], s.unselected, d_item);
  fill(in.groups[kContext], s.context, d_context);
  return in;
}

inline PhaseInput to_input(const PhaseState& s, const SMDPDescriptor& d) {
  return to_input(s, d.d_item, d.n_commands, d.d_context);
}

}  // namespace isq
