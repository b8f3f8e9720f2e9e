#pragma once

// Smart-warehouse benchmark generator: grid-world robots that fetch a rack,
// carry it to the feed station and return it. Robots occupy a W x H grid with
// a heading and a carrying flag; movement is noisy (slip probability) and
// every action costs one step. Tasks are three-phase replenishment formulas
// over one rack each. Instances are deterministic in the seed.

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "morap/common.hpp"
#include "morap/instance.hpp"
#include "morap/logic.hpp"
#include "morap/model.hpp"

namespace morap {

struct WarehouseConfig {
  int width = 0;
  int height = 0;
  int agents = 1;
  double slip = 0.05;
  std::vector<std::array<int, 2>> racks;
  std::array<int, 2> feed{0, 0};
  uint64_t seed = 0;
  // Steps allowed before a task is considered failed. -1 sizes the bound from
  // the grid, 0 disables it (such instances never pass the reward-finiteness
  // check because a robot can rotate in place forever).
  int deadline = -1;
};

inline void validateWarehouseConfig(const WarehouseConfig& cfg) {
  if (cfg.width < 1 || cfg.height < 1) fail(Errc::InvalidConfig, "grid must be at least 1x1");
  if (cfg.agents < 1) fail(Errc::InvalidConfig, "need at least one agent");
  if (!(cfg.slip >= 0.0 && cfg.slip < 1.0)) fail(Errc::InvalidConfig, "slip must lie in [0,1)");
  auto inGrid = [&](const std::array<int, 2>& c) {
    return c[0] >= 0 && c[0] < cfg.width && c[1] >= 0 && c[1] < cfg.height;
  };
  if (cfg.racks.empty()) fail(Errc::InvalidConfig, "need at least one rack");
  for (const auto& r : cfg.racks)
    if (!inGrid(r)) fail(Errc::InvalidConfig, "rack cell outside the grid");
  if (!inGrid(cfg.feed)) fail(Errc::InvalidConfig, "feed cell outside the grid");
  if (cfg.deadline < -1) fail(Errc::InvalidConfig, "deadline must be -1 (auto), 0 (off) or positive");
  if (static_cast<size_t>(cfg.agents) > cfg.racks.size())
    fail(Errc::InvalidConfig, "need one rack per agent");
}

// Travel budget for the three legs of a replenishment trip, sized so an
// unlucky but sensible route still finishes in time on an empty grid.
inline int autoDeadline(const WarehouseConfig& cfg) { return 3 * (cfg.width + cfg.height); }

namespace warehousedetail {

// Headings are N, E, S, W in that order; N points to increasing y.
inline constexpr int kDx[4] = {0, 1, 0, -1};
inline constexpr int kDy[4] = {1, 0, -1, 0};

inline int stateIndex(const WarehouseConfig& cfg, int x, int y, int heading, int carrying) {
  return ((y * cfg.width + x) * 4 + heading) * 2 + carrying;
}

// Seeded starting poses, one per agent, on pairwise distinct cells.
inline std::vector<std::array<int, 3>> startPoses(const WarehouseConfig& cfg) {
  const int cells = cfg.width * cfg.height;
  if (cfg.agents > cells) fail(Errc::InvalidConfig, "more agents than grid cells");
  std::vector<int> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::array<int, 3>> poses;
  poses.reserve(cfg.agents);
  for (int i = 0; i < cfg.agents; ++i) {
    int cell = order[i];
    int heading = static_cast<int>(rng() % 4);
    poses.push_back({cell % cfg.width, cell / cfg.width, heading});
  }
  return poses;
}

}  // namespace warehousedetail

inline std::pair<Mdp, RewardStructure> generateAgent(const WarehouseConfig& cfg, int agentIndex) {
  validateWarehouseConfig(cfg);
  if (agentIndex < 0 || agentIndex >= cfg.agents)
    fail(Errc::InvalidConfig, "agent index out of range");

  using warehousedetail::kDx;
  using warehousedetail::kDy;
  using warehousedetail::stateIndex;

  Mdp m;
  m.numStates = cfg.width * cfg.height * 4 * 2;
  m.labels.resize(m.numStates);
  m.trnOffset.push_back(0);
  RewardStructure cost;

  auto addRow = [&](const std::string& name, std::vector<std::pair<int, double>> to) {
    for (auto& [s, p] : to) {
      m.succ.push_back(s);
      m.prob.push_back(p);
    }
    m.trnOffset.push_back(static_cast<int>(m.succ.size()));
    m.actionName.push_back(name);
    cost.push_back(-1.0);
  };

  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      int rack = -1;
      for (size_t k = 0; k < cfg.racks.size(); ++k)
        if (cfg.racks[k][0] == x && cfg.racks[k][1] == y) rack = static_cast<int>(k);
      const bool atFeed = cfg.feed[0] == x && cfg.feed[1] == y;
      for (int h = 0; h < 4; ++h)
        for (int c = 0; c < 2; ++c) {
          const int s = stateIndex(cfg, x, y, h, c);
          m.rowOffset.push_back(m.numActions());

          addRow("rotateL", {{stateIndex(cfg, x, y, (h + 3) % 4, c), 1.0}});
          addRow("rotateR", {{stateIndex(cfg, x, y, (h + 1) % 4, c), 1.0}});

          const int nx = x + kDx[h], ny = y + kDy[h];
          if (nx < 0 || nx >= cfg.width || ny < 0 || ny >= cfg.height) {
            addRow("forward", {{s, 1.0}});
          } else if (cfg.slip == 0.0) {
            addRow("forward", {{stateIndex(cfg, nx, ny, h, c), 1.0}});
          } else {
            addRow("forward", {{stateIndex(cfg, nx, ny, h, c), 1.0 - cfg.slip}, {s, cfg.slip}});
          }

          if (rack >= 0 && c == 0) addRow("load", {{stateIndex(cfg, x, y, h, 1), 1.0}});
          if (rack >= 0 && c == 1) addRow("unload", {{stateIndex(cfg, x, y, h, 0), 1.0}});

          auto& lab = m.labels[s];
          if (rack >= 0) lab.push_back("at_rack_" + std::to_string(rack));
          if (atFeed) lab.push_back("at_feed");
          if (c == 1) lab.push_back("carrying");
          std::sort(lab.begin(), lab.end());
        }
    }
  m.rowOffset.push_back(m.numActions());

  const auto poses = warehousedetail::startPoses(cfg);
  const auto& p = poses[agentIndex];
  m.initial = stateIndex(cfg, p[0], p[1], p[2], 0);

  validateMdp(m);
  return {std::move(m), std::move(cost)};
}

// Reach rack k while carrying it, bring it to the feed still loaded, then
// return and set it down at the rack.
inline Formula generateTask(const WarehouseConfig& cfg, int rackIndex) {
  validateWarehouseConfig(cfg);
  if (rackIndex < 0 || static_cast<size_t>(rackIndex) >= cfg.racks.size())
    fail(Errc::InvalidConfig, "rack index out of range");
  const std::string rack = "at_rack_" + std::to_string(rackIndex);
  return parseCoSafe("F (" + rack + " & carrying & F (at_feed & carrying & F (" + rack +
                     " & !carrying)))");
}

// Task automaton as fed to the product construction: deadline-bounded (unless
// disabled) and with the acceptance-delay step inserted.
inline Dfa taskAutomaton(const WarehouseConfig& cfg, int rackIndex) {
  Dfa d = formulaToDfa(generateTask(cfg, rackIndex));
  const int k = cfg.deadline < 0 ? autoDeadline(cfg) : cfg.deadline;
  if (k > 0) d = withDeadline(d, k);
  return insertPreSinks(d);
}

inline MorapInstance generateInstance(const WarehouseConfig& cfg) {
  validateWarehouseConfig(cfg);
  WarehouseConfig attempt = cfg;
  for (int tries = 0; tries < 10; ++tries, ++attempt.seed) {
    std::vector<Mdp> agents;
    std::vector<RewardStructure> costs;
    std::vector<Dfa> tasks;
    for (int i = 0; i < cfg.agents; ++i) {
      auto [mdp, cost] = generateAgent(attempt, i);
      agents.push_back(std::move(mdp));
      costs.push_back(std::move(cost));
    }
    for (int j = 0; j < cfg.agents; ++j) tasks.push_back(taskAutomaton(attempt, j));
    try {
      return buildInstance(std::move(agents), std::move(costs), std::move(tasks));
    } catch (const Error& e) {
      if (e.code() != Errc::NotRewardFinite) throw;
    }
  }
  fail(Errc::GenerationFailure,
       "no reward-finite instance in 10 seeded attempts; a disabled deadline "
       "(deadline = 0) cannot succeed because robots may idle forever");
}

inline WarehouseConfig warehouseConfigFromJson(const Json& j) {
  WarehouseConfig cfg;
  try {
    cfg.width = j.at("W").get<int>();
    cfg.height = j.at("H").get<int>();
    cfg.agents = j.value("n", 1);
    cfg.slip = j.value("slip", 0.05);
    for (const auto& r : j.at("racks")) cfg.racks.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    cfg.feed = {j.at("feed").at(0).get<int>(), j.at("feed").at(1).get<int>()};
    cfg.seed = j.value("seed", 0);
    cfg.deadline = j.value("deadline", -1);
  } catch (const Json::exception& e) {
    fail(Errc::InvalidConfig, std::string("bad warehouse config: ") + e.what());
  }
  validateWarehouseConfig(cfg);
  return cfg;
}

inline Json warehouseConfigToJson(const WarehouseConfig& cfg) {
  Json racks = Json::array();
  for (const auto& r : cfg.racks) racks.push_back({r[0], r[1]});
  return Json{{"W", cfg.width},          {"H", cfg.height}, {"n", cfg.agents},
              {"slip", cfg.slip},        {"racks", racks},  {"feed", {cfg.feed[0], cfg.feed[1]}},
              {"seed", cfg.seed},        {"deadline", cfg.deadline}};
}

}  // namespace morap
