#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "isq/net.hpp"

namespace isq {

// Checkpoint of the cascaded networks: K phases mapped onto one or more
// distinct tied parameter sets. Scalars are stored in the canonical flatten
// order (see for_each_scalar in net.hpp); doubles survive a dump/parse
// round-trip bit-exactly.
struct NetCheckpoint {
  int n_phases = 1;
  NetConfig cfg;
  std::vector<SharedParams> sets;
  std::vector<int> phase_to_set;
};

inline nlohmann::json checkpoint_to_json(const NetCheckpoint& ckpt) {
  nlohmann::json groups = nlohmann::json::array();
  groups.push_back({{"id", "selected"}, {"d", ckpt.cfg.d_item + ckpt.cfg.n_commands}});
  groups.push_back({{"id", "unselected"}, {"d", ckpt.cfg.d_item}});
  if (ckpt.cfg.d_context > 0) groups.push_back({{"id", "context"}, {"d", ckpt.cfg.d_context}});

  nlohmann::json sets = nlohmann::json::array();
  for (std::size_t m = 0; m < ckpt.sets.size(); ++m) {
    nlohmann::json phases = nlohmann::json::array();
    for (int k = 0; k < ckpt.n_phases; ++k)
      if (ckpt.phase_to_set[static_cast<std::size_t>(k)] == static_cast<int>(m))
        phases.push_back(k);
    sets.push_back({{"phases", phases}, {"scalars", flatten(ckpt.sets[m])}});
  }

  return nlohmann::json{{"format_version", 1},
                        {"K", ckpt.n_phases},
                        {"D", ckpt.cfg.depth},
                        {"channels", ckpt.cfg.channels},
                        {"groups", groups},
                        {"activation", activation_to_string(ckpt.cfg.activation)},
                        {"pooled", ckpt.cfg.pooled},
                        {"param_sets", sets}};
}

inline NetCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("checkpoint: unsupported format_version");
  NetCheckpoint ckpt;
  ckpt.n_phases = j.at("K").get<int>();
  ckpt.cfg.depth = j.at("D").get<int>();
  ckpt.cfg.channels = j.at("channels").get<int>();
  ckpt.cfg.activation = activation_from_string(j.at("activation").get<std::string>());
  ckpt.cfg.pooled = j.value("pooled", true);
  int d_selected = -1;
  ckpt.cfg.d_context = 0;
  for (const auto& g : j.at("groups")) {
    const std::string id = g.at("id").get<std::string>();
    const int d = g.at("d").get<int>();
    if (id == "selected") d_selected = d;
    else if (id == "unselected") ckpt.cfg.d_item = d;
    else if (id == "context") ckpt.cfg.d_context = d;
    else throw std::invalid_argument("checkpoint: unknown group id " + id);
  }
  if (d_selected < 0) throw std::invalid_argument("checkpoint: missing selected group");
  ckpt.cfg.n_commands = d_selected - ckpt.cfg.d_item;
  if (ckpt.cfg.n_commands < 1) throw std::invalid_argument("checkpoint: bad group widths");

  ckpt.phase_to_set.assign(static_cast<std::size_t>(ckpt.n_phases), -1);
  for (const auto& set_json : j.at("param_sets")) {
    SharedParams p = make_shared_shape(ckpt.cfg);
    unflatten(p, set_json.at("scalars").get<std::vector<double>>());
    const int set_idx = static_cast<int>(ckpt.sets.size());
    ckpt.sets.push_back(std::move(p));
    for (int k : set_json.at("phases").get<std::vector<int>>()) {
      if (k < 0 || k >= ckpt.n_phases || ckpt.phase_to_set[static_cast<std::size_t>(k)] != -1)
        throw std::invalid_argument("checkpoint: bad phase mapping");
      ckpt.phase_to_set[static_cast<std::size_t>(k)] = set_idx;
    }
  }
  for (int m : ckpt.phase_to_set)
    if (m < 0) throw std::invalid_argument("checkpoint: unmapped phase");
  return ckpt;
}

inline std::string checkpoint_to_string(const NetCheckpoint& ckpt) {
  return checkpoint_to_json(ckpt).dump(2);
}

inline NetCheckpoint checkpoint_from_string(const std::string& text) {
  return checkpoint_from_json(nlohmann::json::parse(text));
}

}  // namespace isq
