#pragma once

#include <cstdlib>
#include <set>
#include <stdexcept>
#include <vector>

#include "isq/ismdp.hpp"
#include "isq/rng.hpp"

namespace isq {

struct PPConfig {
  int grid = 10;        // G x G world
  int n_predators = 10;  // N, the selectable items
  int n_preys = 4;       // U, context items
  int n_select = 4;      // K
  int n_commands = 5;    // stay/up/down/left/right
};

struct GridPos {
  int x = 0;
  int y = 0;
};

// Selected predators move by command; a prey is caught when at least two
// selected predators end up in its 8-neighborhood. Caught preys respawn, then
// every prey takes a uniform random move.
class PredatorPrey : public SMDPInterface {
 public:
  explicit PredatorPrey(const PPConfig& cfg) : cfg_(cfg), rng_(0) {
    if (cfg.n_select > cfg.n_predators || cfg.n_select < 1)
      throw std::invalid_argument("PredatorPrey: K must be in [1, N]");
  }

  SMDPDescriptor descriptor() const override {
    return {cfg_.n_predators, cfg_.n_select, cfg_.n_commands, 2,
            cfg_.n_preys > 0 ? 2 : 0, cfg_.n_preys};
  }

  SMDPObservation reset(std::uint64_t seed) override {
    rng_ = SeededRng(seed);
    predators_.clear();
    preys_.clear();
    for (int i = 0; i < cfg_.n_predators; ++i) predators_.push_back(random_pos());
    for (int i = 0; i < cfg_.n_preys; ++i) preys_.push_back(random_pos());
    return observe();
  }

  std::pair<double, SMDPObservation> step(
      const std::vector<std::pair<int, int>>& selection) override {
    if (static_cast<int>(selection.size()) != cfg_.n_select)
      throw std::invalid_argument("PredatorPrey: selection size != K");
    std::set<int> selected;
    for (auto [idx, cmd] : selection) {
      if (idx < 0 || idx >= cfg_.n_predators || cmd < 0 || cmd >= cfg_.n_commands)
        throw std::invalid_argument("PredatorPrey: bad selection");
      if (!selected.insert(idx).second)
        throw std::invalid_argument("PredatorPrey: duplicate index");
      move(predators_[static_cast<std::size_t>(idx)], cmd);
    }

    double reward = 0.0;
    std::vector<bool> caught(preys_.size(), false);
    for (std::size_t p = 0; p < preys_.size(); ++p) {
      int hunters = 0;
      for (int idx : selected)
        if (adjacent(predators_[static_cast<std::size_t>(idx)], preys_[p])) ++hunters;
      if (hunters >= 2) {
        caught[p] = true;
        reward += 1.0;
      }
    }
    for (std::size_t p = 0; p < preys_.size(); ++p)
      if (caught[p]) preys_[p] = random_pos();
    for (auto& prey : preys_) move(prey, static_cast<int>(rng_.uniform_int(5)));

    return {reward, observe()};
  }

  const std::vector<GridPos>& predators() const { return predators_; }
  const std::vector<GridPos>& preys() const { return preys_; }

  // test hook: place entities deterministically
  void place(const std::vector<GridPos>& predators, const std::vector<GridPos>& preys) {
    predators_ = predators;
    preys_ = preys;
  }

 private:
  GridPos random_pos() {
    return {static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(cfg_.grid))),
            static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(cfg_.grid)))};
  }

  // off-grid moves become stay
  void move(GridPos& p, int cmd) {
    int nx = p.x, ny = p.y;
    switch (cmd) {
      case 0: break;
      case 1: ny += 1; break;
      case 2: ny -= 1; break;
      case 3: nx -= 1; break;
      case 4: nx += 1; break;
      default: throw std::invalid_argument("PredatorPrey: bad command");
    }
    if (nx >= 0 && nx < cfg_.grid && ny >= 0 && ny < cfg_.grid) {
      p.x = nx;
      p.y = ny;
    }
  }

  static bool adjacent(const GridPos& a, const GridPos& b) {
    const int dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y);
    return std::max(dx, dy) == 1;  // the 8 surrounding cells
  }

  SMDPObservation observe() const {
    SMDPObservation obs;
    const double g = static_cast<double>(cfg_.grid);
    for (const GridPos& p : predators_)
      obs.items.push_back({static_cast<double>(p.x) / g, static_cast<double>(p.y) / g});
    for (const GridPos& p : preys_)
      obs.context.push_back({static_cast<double>(p.x) / g, static_cast<double>(p.y) / g});
    return obs;
  }

  PPConfig cfg_;
  SeededRng rng_;
  std::vector<GridPos> predators_;
  std::vector<GridPos> preys_;
};

}  // namespace isq
