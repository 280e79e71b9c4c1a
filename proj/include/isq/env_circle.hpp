#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "isq/ismdp.hpp"
#include "isq/rng.hpp"

namespace isq {

struct Circle {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;
  bool selectable = true;
};

struct CircleConfig {
  int n_selectable = 5;  // N
  int n_context = 1;     // U, unselectable circles
  int n_select = 1;      // K
  int n_commands = 5;    // 1 = stay only, 5 = stay/up/down/left/right
  double move_distance = 0.1;
  double init_radius = 0.01;
  double growth_lo = 0.045;
  double growth_hi = 0.055;
  double jitter = 0.01;
  double max_radius = 0.45;
};

inline bool circles_collide(const Circle& a, const Circle& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  const double rr = a.r + b.r;
  return dx * dx + dy * dy < rr * rr;  // tangency is not a collision
}

// Per-circle reward cases, in precedence order: overlap with any unselectable
// circle costs the area, overlap with another selected circle only is worth
// nothing, an isolated circle earns its area.
inline double cs_reward(const std::vector<Circle>& circles, const std::vector<int>& selected) {
  std::set<int> seen;
  for (int idx : selected) {
    if (idx < 0 || idx >= static_cast<int>(circles.size()) ||
        !circles[static_cast<std::size_t>(idx)].selectable)
      throw std::invalid_argument("cs_reward: bad selection index");
    if (!seen.insert(idx).second) throw std::invalid_argument("cs_reward: duplicate index");
  }
  double total = 0.0;
  for (int idx : selected) {
    const Circle& c = circles[static_cast<std::size_t>(idx)];
    const double area = M_PI * c.r * c.r;
    bool hits_unselectable = false;
    for (const Circle& other : circles)
      if (!other.selectable && circles_collide(c, other)) {
        hits_unselectable = true;
        break;
      }
    if (hits_unselectable) {
      total -= area;
      continue;
    }
    bool hits_selected = false;
    for (int other : selected)
      if (other != idx && circles_collide(c, circles[static_cast<std::size_t>(other)])) {
        hits_selected = true;
        break;
      }
    if (!hits_selected) total += area;
  }
  return total;
}

class CircleSelection : public SMDPInterface {
 public:
  explicit CircleSelection(const CircleConfig& cfg) : cfg_(cfg), rng_(0) {
    if (cfg.n_select > cfg.n_selectable || cfg.n_select < 1)
      throw std::invalid_argument("CircleSelection: K must be in [1, N]");
    if (cfg.n_commands != 1 && cfg.n_commands != 5)
      throw std::invalid_argument("CircleSelection: command count must be 1 or 5");
  }

  SMDPDescriptor descriptor() const override {
    return {cfg_.n_selectable, cfg_.n_select, cfg_.n_commands, 3,
            cfg_.n_context > 0 ? 3 : 0, cfg_.n_context};
  }

  SMDPObservation reset(std::uint64_t seed) override {
    rng_ = SeededRng(seed);
    circles_.clear();
    for (int i = 0; i < cfg_.n_selectable + cfg_.n_context; ++i) {
      Circle c;
      c.x = rng_.uniform(-0.5, 0.5);
      c.y = rng_.uniform(-0.5, 0.5);
      c.r = cfg_.max_radius * (1.0 - rng_.uniform());  // in (0, max_radius]
      c.selectable = i < cfg_.n_selectable;
      circles_.push_back(c);
    }
    return observe();
  }

  std::pair<double, SMDPObservation> step(
      const std::vector<std::pair<int, int>>& selection) override {
    if (static_cast<int>(selection.size()) != cfg_.n_select)
      throw std::invalid_argument("CircleSelection: selection size != K");
    std::vector<int> selected;
    for (auto [idx, cmd] : selection) {
      if (cmd < 0 || cmd >= cfg_.n_commands)
        throw std::invalid_argument("CircleSelection: bad command");
      selected.push_back(idx);
    }

    // 1. commands move the selected circles
    for (auto [idx, cmd] : selection) move(circles_.at(static_cast<std::size_t>(idx)), cmd);

    // 2. reward on the post-move configuration
    const double reward = cs_reward(circles_, selected);

    // 3. selected circles and unselectable circles colliding with them respawn
    std::vector<bool> replace(circles_.size(), false);
    for (int idx : selected) replace[static_cast<std::size_t>(idx)] = true;
    for (std::size_t i = 0; i < circles_.size(); ++i) {
      if (circles_[i].selectable) continue;
      for (int idx : selected)
        if (circles_collide(circles_[i], circles_[static_cast<std::size_t>(idx)])) {
          replace[i] = true;
          break;
        }
    }
    for (std::size_t i = 0; i < circles_.size(); ++i) {
      if (!replace[i]) continue;
      circles_[i].x = rng_.uniform(-0.5, 0.5);
      circles_[i].y = rng_.uniform(-0.5, 0.5);
      circles_[i].r = cfg_.init_radius;
    }

    // 4. the remaining circles grow and drift
    for (std::size_t i = 0; i < circles_.size(); ++i) {
      if (replace[i]) continue;
      Circle& c = circles_[i];
      c.r = std::min(cfg_.max_radius, c.r + rng_.uniform(cfg_.growth_lo, cfg_.growth_hi));
      c.x = clamp_pos(c.x + rng_.uniform(-cfg_.jitter, cfg_.jitter));
      c.y = clamp_pos(c.y + rng_.uniform(-cfg_.jitter, cfg_.jitter));
    }
    return {reward, observe()};
  }

  const std::vector<Circle>& circles() const { return circles_; }
  const CircleConfig& config() const { return cfg_; }

 private:
  static double clamp_pos(double v) { return std::clamp(v, -0.5, 0.5); }

  void move(Circle& c, int cmd) {
    switch (cmd) {
      case 0: break;  // stay
      case 1: c.y = clamp_pos(c.y + cfg_.move_distance); break;
      case 2: c.y = clamp_pos(c.y - cfg_.move_distance); break;
      case 3: c.x = clamp_pos(c.x - cfg_.move_distance); break;
      case 4: c.x = clamp_pos(c.x + cfg_.move_distance); break;
      default: throw std::invalid_argument("CircleSelection: bad command");
    }
  }

  SMDPObservation observe() const {
    SMDPObservation obs;
    for (const Circle& c : circles_) {
      std::vector<double> f{c.x, c.y, c.r};
      if (c.selectable) obs.items.push_back(std::move(f));
      else obs.context.push_back(std::move(f));
    }
    return obs;
  }

  CircleConfig cfg_;
  SeededRng rng_;
  std::vector<Circle> circles_;
};

}  // namespace isq
