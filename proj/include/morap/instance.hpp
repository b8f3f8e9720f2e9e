#pragma once

// Problem instance: n agent MDPs with cost rewards and n co-safe task
// automata. Fewer tasks than agents is allowed; the task list is padded with
// an immediately-satisfied dummy task so the assignment matrix stays square.
// All n*n products are built eagerly and deduplicated by structure, so
// identical agent/task combinations share one model.

#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "morap/common.hpp"
#include "morap/logic.hpp"
#include "morap/model.hpp"

namespace morap {

struct MorapInstance {
  std::vector<Mdp> agents;
  std::vector<RewardStructure> costs;
  std::vector<Dfa> tasks;  // padded to n entries
  int n = 0;               // agents == padded tasks
  int realTasks = 0;       // tasks supplied by the caller
  std::vector<std::vector<std::shared_ptr<const ProductMdp>>> products;  // [agent][task]
  int distinctProducts = 0;
};

namespace detail {

inline bool structurallyEqual(const ProductMdp& a, const ProductMdp& b) {
  return a.mdp.numStates == b.mdp.numStates && a.mdp.initial == b.mdp.initial &&
         a.mdp.rowOffset == b.mdp.rowOffset && a.mdp.trnOffset == b.mdp.trnOffset &&
         a.mdp.succ == b.mdp.succ && a.mdp.prob == b.mdp.prob &&
         a.mdp.actionName == b.mdp.actionName && a.cost == b.cost && a.success == b.success &&
         a.done == b.done && a.accept == b.accept && a.preSink == b.preSink;
}

}  // namespace detail

inline MorapInstance buildInstance(std::vector<Mdp> agents, std::vector<RewardStructure> costs,
                                   std::vector<Dfa> tasks) {
  if (agents.empty()) fail(Errc::InvalidModel, "instance needs at least one agent");
  if (agents.size() != costs.size())
    fail(Errc::DimensionMismatch, "one cost structure per agent required");
  if (tasks.size() > agents.size())
    fail(Errc::InvalidModel, "more tasks than agents; drop tasks or add agents");

  MorapInstance inst;
  inst.n = static_cast<int>(agents.size());
  inst.realTasks = static_cast<int>(tasks.size());
  inst.agents = std::move(agents);
  inst.costs = std::move(costs);
  inst.tasks = std::move(tasks);
  for (int i = 0; i < inst.n; ++i) {
    validateMdp(inst.agents[i]);
    if (static_cast<int>(inst.costs[i].size()) != inst.agents[i].numActions())
      fail(Errc::DimensionMismatch, "cost structure does not match agent action rows");
  }
  if (inst.realTasks < inst.n) {
    Dfa dummy = insertPreSinks(formulaToDfa(fTrue()));
    inst.tasks.resize(static_cast<size_t>(inst.n), dummy);
  }

  std::unordered_map<uint64_t, std::vector<std::shared_ptr<const ProductMdp>>> pool;
  inst.products.assign(static_cast<size_t>(inst.n), {});
  for (int i = 0; i < inst.n; ++i) {
    inst.products[i].resize(static_cast<size_t>(inst.n));
    for (int j = 0; j < inst.n; ++j) {
      ProductMdp p = buildProduct(inst.agents[i], inst.costs[i], inst.tasks[j], i, j);
      if (!p.rewardFinite)
        fail(Errc::NotRewardFinite, "product of agent " + std::to_string(i) + " and task " +
                                        std::to_string(j) + " can cycle without finishing");
      std::shared_ptr<const ProductMdp> share;
      auto& bucket = pool[p.structuralHash];
      for (const auto& cand : bucket)
        if (detail::structurallyEqual(*cand, p)) {
          share = cand;
          break;
        }
      if (!share) {
        share = std::make_shared<const ProductMdp>(std::move(p));
        bucket.push_back(share);
        ++inst.distinctProducts;
      }
      inst.products[i][j] = share;
    }
  }
  return inst;
}

// User-facing thresholds list the n cost bounds then one probability bound
// per supplied task; dummy tasks get probability bound 0.
inline Vec expandThresholds(const MorapInstance& inst, const Vec& user) {
  if (static_cast<int>(user.size()) != inst.n + inst.realTasks)
    fail(Errc::DimensionMismatch, "expected " + std::to_string(inst.n + inst.realTasks) +
                                      " thresholds (costs first, then task probabilities)");
  Vec t(static_cast<size_t>(2 * inst.n), 0.0);
  for (int i = 0; i < inst.n; ++i) {
    if (!std::isfinite(user[i])) fail(Errc::InvalidModel, "cost threshold must be finite");
    t[i] = user[i];
  }
  for (int j = 0; j < inst.realTasks; ++j) {
    double p = user[inst.n + j];
    if (!(p >= 0.0 && p <= 1.0))
      fail(Errc::InvalidModel, "probability threshold outside [0,1]");
    t[inst.n + j] = p;
  }
  return t;
}

}  // namespace morap
