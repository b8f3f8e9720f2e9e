#pragma once

// Centralised formulation: one MDP whose runs interleave an assignment phase
// with agent moves. States are (agent block (i, j), product state, assigned
// set); control actions assign the current task (b1), forward it to the next
// free agent (b2) or advance to the next task once the current one ended
// (b3). Feasibility on this model matches the decentralised formulation, at
// the price of a state space that grows far too quickly to be practical;
// it serves as a reference baseline and cross-check.

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "morap/common.hpp"
#include "morap/instance.hpp"
#include "morap/model.hpp"
#include "morap/numerics.hpp"
#include "morap/solver.hpp"

namespace morap {

struct CentralisedMdp {
  Mdp mdp;
  int n = 0;
  int realTasks = 0;
  // Rule-level "done" label: the current task's location is accepting or a
  // trap. The model-checking target is the stricter `done` below, which
  // additionally requires the last task; earlier completions continue via b3.
  std::vector<char> taskEnded;
  std::vector<char> done;
  std::vector<RewardStructure> rewards;  // n agent costs, then n task successes
  bool rewardFinite = false;
  // Decoded state tuples.
  std::vector<int> agentIdx;
  std::vector<int> taskIdx;
  std::vector<int> productState;
  std::vector<uint32_t> assigned;  // bitmask over agents
};

namespace centraliseddetail {

inline uint64_t key(int i, int j, int p, uint32_t mask) {
  return (static_cast<uint64_t>(i) << 60) | (static_cast<uint64_t>(j) << 56) |
         (static_cast<uint64_t>(mask) << 40) | static_cast<uint64_t>(p);
}

}  // namespace centraliseddetail

inline CentralisedMdp buildCentralised(const MorapInstance& inst, long stateGuard = 10000000) {
  const int n = inst.n;
  if (n > 16) fail(Errc::SizeGuard, "centralised construction supports at most 16 agents");
  if (stateGuard < 1) fail(Errc::InvalidConfig, "state guard must be positive");

  CentralisedMdp c;
  c.n = n;
  c.realTasks = inst.realTasks;

  auto productOf = [&](int i, int j) -> const ProductMdp& {
    return *inst.products[static_cast<size_t>(i)][static_cast<size_t>(j)];
  };

  std::unordered_map<uint64_t, int> index;
  std::deque<int> work;
  auto discover = [&](int i, int j, int p, uint32_t mask) {
    uint64_t k = centraliseddetail::key(i, j, p, mask);
    auto it = index.find(k);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(c.agentIdx.size());
    if (id >= stateGuard)
      fail(Errc::SizeGuard, "centralised reachable states exceed the guard of " +
                                std::to_string(stateGuard));
    index.emplace(k, id);
    c.agentIdx.push_back(i);
    c.taskIdx.push_back(j);
    c.productState.push_back(p);
    c.assigned.push_back(mask);
    work.push_back(id);
    return id;
  };

  discover(0, 0, productOf(0, 0).mdp.initial, 0);

  Mdp& m = c.mdp;
  m.trnOffset.push_back(0);
  auto addRow = [&](const std::string& name, std::vector<std::pair<int, double>> to) {
    for (auto& [s, pr] : to) {
      m.succ.push_back(s);
      m.prob.push_back(pr);
    }
    m.trnOffset.push_back(static_cast<int>(m.succ.size()));
    m.actionName.push_back(name);
    return static_cast<int>(m.actionName.size()) - 1;
  };

  std::vector<double> rowCost, rowSuccess;  // per action row, for the owning block
  std::vector<int> rowAgent, rowTask;

  while (!work.empty()) {
    int id = work.front();
    work.pop_front();
    const int i = c.agentIdx[static_cast<size_t>(id)];
    const int j = c.taskIdx[static_cast<size_t>(id)];
    const int p = c.productState[static_cast<size_t>(id)];
    const uint32_t mask = c.assigned[static_cast<size_t>(id)];
    const ProductMdp& prod = productOf(i, j);
    const bool ended = prod.done[static_cast<size_t>(p)] != 0;
    const bool lastTask = j == n - 1;
    const bool mine = (mask >> i) & 1u;

    m.rowOffset.push_back(m.numActions());
    c.taskEnded.push_back(ended ? 1 : 0);
    c.done.push_back(ended && lastTask ? 1 : 0);

    auto plainRow = [&](int row) {
      rowCost.push_back(0.0);
      rowSuccess.push_back(0.0);
      rowAgent.push_back(-1);
      rowTask.push_back(-1);
      (void)row;
    };

    if (mine && ended && lastTask) {
      plainRow(addRow("!halt", {{id, 1.0}}));
    } else if (mine && ended) {
      int next = -1;
      for (int k = 0; k < n; ++k)
        if (!((mask >> k) & 1u)) {
          next = k;
          break;
        }
      // One b1 per started task keeps at least one agent free before the
      // last task ends, so the advance target always exists.
      plainRow(addRow("b3", {{discover(next, j + 1, productOf(next, j + 1).mdp.initial, mask), 1.0}}));
    } else if (mine) {
      for (int r = prod.mdp.actionsBegin(p); r < prod.mdp.actionsEnd(p); ++r) {
        std::vector<std::pair<int, double>> to;
        for (int k = prod.mdp.trnBegin(r); k < prod.mdp.trnEnd(r); ++k)
          to.push_back({discover(i, j, prod.mdp.succ[k], mask), prod.mdp.prob[k]});
        addRow(prod.mdp.actionName[r], std::move(to));
        rowCost.push_back(prod.cost[static_cast<size_t>(r)]);
        rowSuccess.push_back(prod.success[static_cast<size_t>(r)]);
        rowAgent.push_back(i);
        rowTask.push_back(j);
      }
    } else {
      plainRow(addRow("b1", {{discover(i, j, p, mask | (1u << i)), 1.0}}));
      for (int k = i + 1; k < n; ++k)
        if (!((mask >> k) & 1u)) {
          plainRow(addRow("b2", {{discover(k, j, productOf(k, j).mdp.initial, mask), 1.0}}));
          break;
        }
    }
  }
  m.numStates = static_cast<int>(c.agentIdx.size());
  m.rowOffset.push_back(m.numActions());
  m.initial = 0;
  m.labels.resize(static_cast<size_t>(m.numStates));
  for (int s = 0; s < m.numStates; ++s)
    if (c.taskEnded[static_cast<size_t>(s)]) m.labels[static_cast<size_t>(s)] = {"done"};
  validateMdp(m);

  c.rewards.assign(static_cast<size_t>(2 * n), RewardStructure(m.numActions(), 0.0));
  for (int r = 0; r < m.numActions(); ++r) {
    if (rowAgent[static_cast<size_t>(r)] >= 0)
      c.rewards[static_cast<size_t>(rowAgent[static_cast<size_t>(r)])][static_cast<size_t>(r)] =
          rowCost[static_cast<size_t>(r)];
    if (rowTask[static_cast<size_t>(r)] >= 0)
      c.rewards[static_cast<size_t>(n + rowTask[static_cast<size_t>(r)])][static_cast<size_t>(r)] =
          rowSuccess[static_cast<size_t>(r)];
  }

  c.rewardFinite = checkRewardFinite(m, c.done);
  return c;
}

namespace centraliseddetail {

inline Vec expand(const CentralisedMdp& c, const Vec& user) {
  if (static_cast<int>(user.size()) != c.n + c.realTasks)
    fail(Errc::DimensionMismatch, "expected " + std::to_string(c.n + c.realTasks) +
                                      " thresholds (costs first, then task probabilities)");
  Vec t(static_cast<size_t>(2 * c.n), 0.0);
  for (int i = 0; i < c.n; ++i) t[static_cast<size_t>(i)] = user[static_cast<size_t>(i)];
  for (int j = 0; j < c.realTasks; ++j)
    t[static_cast<size_t>(c.n + j)] = user[static_cast<size_t>(c.n + j)];
  return t;
}

}  // namespace centraliseddetail

// Single supporting-hyperplane query on the centralised model: one optimal
// scheduler for the weighted reward, then one evaluation per objective.
inline SupportingPoint centralisedSupportingPoint(const CentralisedMdp& c, const Vec& w,
                                                  double valueEps = 1e-6) {
  if (w.size() != c.rewards.size())
    fail(Errc::DimensionMismatch, "weight vector must have one entry per objective");
  std::vector<const RewardStructure*> parts;
  for (const auto& rho : c.rewards) parts.push_back(&rho);
  OptimizeResult opt =
      optimalSchedulerOn(c.mdp, c.done, c.rewardFinite, weightedReward(parts, w), valueEps);
  SupportingPoint out;
  out.schedulers.push_back(opt.policy);
  out.r.reserve(c.rewards.size());
  for (const auto& rho : c.rewards)
    out.r.push_back(evaluateSchedulerOn(c.mdp, c.done, opt.policy, rho, valueEps).value);
  return out;
}

// Same sandwich iteration as the decentralised solver, with the Hungarian
// supporting-point query replaced by the single-model one above.
inline ParetoResult centralisedParetoPoint(const CentralisedMdp& c, const Vec& thresholds,
                                           const NormMatrix& norm, double eps,
                                           int iterationCap = 500) {
  return solverdetail::runParetoCore(
      centraliseddetail::expand(c, thresholds), norm, eps, iterationCap, false, nullptr,
      [&](const Vec& w) { return centralisedSupportingPoint(c, w); });
}

}  // namespace morap
