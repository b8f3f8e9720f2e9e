#pragma once

#include <functional>
#include <vector>

#include "morap/common.hpp"
#include "morap/model.hpp"

namespace morap {

// Per-state distribution over that state's action rows. Deterministic
// schedulers carry a single entry with probability 1.
struct Scheduler {
  std::vector<std::vector<std::pair<int, double>>> choice;
};

inline Scheduler makeDeterministic(std::vector<int> rows) {
  Scheduler mu;
  mu.choice.reserve(rows.size());
  for (int r : rows) mu.choice.push_back({{r, 1.0}});
  return mu;
}

struct SweepStats {
  int sweeps = 0;
  double residual = 0.0;
};

struct OptimizeResult {
  Vec values;
  Scheduler policy;
  SweepStats stats;
  double value = 0.0;  // at the initial state
};

struct EvaluateResult {
  Vec values;
  SweepStats stats;
  double value = 0.0;
};

using SweepObserver = std::function<void(const Vec&)>;

namespace detail {

inline void checkReward(const Mdp& m, const RewardStructure& rho) {
  if (static_cast<int>(rho.size()) != m.numActions())
    fail(Errc::DimensionMismatch, "reward structure does not match action rows");
}

inline void checkScheduler(const Mdp& m, const std::vector<char>& done, const Scheduler& mu) {
  if (static_cast<int>(mu.choice.size()) != m.numStates)
    fail(Errc::InvalidModel, "scheduler does not cover every state");
  for (int s = 0; s < m.numStates; ++s) {
    if (done[s]) continue;
    double sum = 0.0;
    for (auto [r, pr] : mu.choice[s]) {
      if (r < m.actionsBegin(s) || r >= m.actionsEnd(s))
        fail(Errc::InvalidModel, "scheduler picks a foreign action row");
      if (pr < 0.0) fail(Errc::InvalidModel, "negative scheduler probability");
      sum += pr;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      fail(Errc::InvalidModel, "scheduler row does not sum to 1");
  }
}

}  // namespace detail

// Greedy synchronous sweeps for the maximal expected total reward until done.
// Values at done states are pinned to 0. Runs at least one sweep and stops
// once no state moved by more than eps; ties in the argmax go to the lowest
// action row.
inline OptimizeResult optimalSchedulerOn(const Mdp& m, const std::vector<char>& done,
                                         bool rewardFinite, const RewardStructure& rho,
                                         double eps = 1e-6, int sweepCap = 100000,
                                         const SweepObserver& onSweep = {}) {
  detail::checkReward(m, rho);
  if (!rewardFinite)
    fail(Errc::NotRewardFinite, "some scheduler avoids the objective with positive probability");
  Vec x(m.numStates, 0.0), y(m.numStates, 0.0);
  std::vector<int> pol(m.numStates, -1);
  SweepStats stats;
  for (;;) {
    double delta = 0.0;
    for (int s = 0; s < m.numStates; ++s) {
      if (done[s]) {
        y[s] = 0.0;
        continue;
      }
      double best = 0.0;
      int bestRow = -1;
      for (int r = m.actionsBegin(s); r < m.actionsEnd(s); ++r) {
        double v = rho[r];
        for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) v += m.prob[k] * x[m.succ[k]];
        if (bestRow == -1 || v > best) {
          best = v;
          bestRow = r;
        }
      }
      y[s] = best;
      pol[s] = bestRow;
      delta = std::max(delta, std::fabs(y[s] - x[s]));
    }
    x.swap(y);
    ++stats.sweeps;
    stats.residual = delta;
    if (onSweep) onSweep(x);
    if (delta <= eps) break;
    if (stats.sweeps >= sweepCap)
      fail(Errc::NonConvergence, "value iteration still moving " + std::to_string(delta) + " after " +
                                     std::to_string(stats.sweeps) + " sweeps");
  }
  for (int s = 0; s < m.numStates; ++s)
    if (done[s]) pol[s] = m.actionsBegin(s);
  OptimizeResult res;
  res.values = std::move(x);
  res.policy = makeDeterministic(std::move(pol));
  res.stats = stats;
  res.value = res.values[m.initial];
  return res;
}

inline OptimizeResult optimalScheduler(const ProductMdp& p, const RewardStructure& rho,
                                       double eps = 1e-6, int sweepCap = 100000,
                                       const SweepObserver& onSweep = {}) {
  return optimalSchedulerOn(p.mdp, p.done, p.rewardFinite, rho, eps, sweepCap, onSweep);
}

inline EvaluateResult evaluateSchedulerOn(const Mdp& m, const std::vector<char>& done,
                                          const Scheduler& mu, const RewardStructure& rho,
                                          double eps = 1e-6, int sweepCap = 100000,
                                          const SweepObserver& onSweep = {}) {
  detail::checkReward(m, rho);
  detail::checkScheduler(m, done, mu);
  Vec x(m.numStates, 0.0), y(m.numStates, 0.0);
  SweepStats stats;
  for (;;) {
    double delta = 0.0;
    for (int s = 0; s < m.numStates; ++s) {
      if (done[s]) {
        y[s] = 0.0;
        continue;
      }
      double v = 0.0;
      for (auto [r, pr] : mu.choice[s]) {
        double a = rho[r];
        for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) a += m.prob[k] * x[m.succ[k]];
        v += pr * a;
      }
      y[s] = v;
      delta = std::max(delta, std::fabs(y[s] - x[s]));
    }
    x.swap(y);
    ++stats.sweeps;
    stats.residual = delta;
    if (onSweep) onSweep(x);
    if (delta <= eps) break;
    if (stats.sweeps >= sweepCap)
      fail(Errc::NonConvergence, "policy evaluation still moving " + std::to_string(delta) + " after " +
                                     std::to_string(stats.sweeps) + " sweeps");
  }
  EvaluateResult res;
  res.values = std::move(x);
  res.stats = stats;
  res.value = res.values[m.initial];
  return res;
}

inline EvaluateResult evaluateScheduler(const ProductMdp& p, const Scheduler& mu,
                                        const RewardStructure& rho, double eps = 1e-6,
                                        int sweepCap = 100000, const SweepObserver& onSweep = {}) {
  return evaluateSchedulerOn(p.mdp, p.done, mu, rho, eps, sweepCap, onSweep);
}

// Exact expected total reward of a fixed scheduler: solves the linear system
// (I - P_mu) x = rho_mu over the non-done states reachable under mu. The
// induced chain must reach done with probability 1, otherwise the system is
// (numerically) singular.
inline double exactEvaluateOn(const Mdp& m, const std::vector<char>& done, const Scheduler& mu,
                              const RewardStructure& rho) {
  detail::checkReward(m, rho);
  detail::checkScheduler(m, done, mu);
  if (done[m.initial]) return 0.0;

  std::vector<int> idx(m.numStates, -1);
  std::vector<int> order;
  idx[m.initial] = 0;
  order.push_back(m.initial);
  for (size_t head = 0; head < order.size(); ++head) {
    int s = order[head];
    for (auto [r, pr] : mu.choice[s]) {
      if (pr <= 0.0) continue;
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) {
        int s2 = m.succ[k];
        if (done[s2] || idx[s2] != -1) continue;
        idx[s2] = static_cast<int>(order.size());
        order.push_back(s2);
      }
    }
  }
  const int n = static_cast<int>(order.size());
  Mat A(n, n, 0.0);
  Vec b(n, 0.0);
  for (int i = 0; i < n; ++i) {
    int s = order[i];
    A(i, i) += 1.0;
    for (auto [r, pr] : mu.choice[s]) {
      if (pr <= 0.0) continue;
      b[i] += pr * rho[r];
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k)
        if (!done[m.succ[k]]) A(i, idx[m.succ[k]]) -= pr * m.prob[k];
    }
  }
  Vec x = solveDense(std::move(A), std::move(b));
  return x[0];
}

inline double exactEvaluate(const ProductMdp& p, const Scheduler& mu, const RewardStructure& rho) {
  return exactEvaluateOn(p.mdp, p.done, mu, rho);
}

// Pointwise linear combination of reward structures.
inline RewardStructure weightedReward(const std::vector<const RewardStructure*>& parts, const Vec& w) {
  if (parts.size() != w.size()) fail(Errc::DimensionMismatch, "one weight per reward structure");
  if (parts.empty()) fail(Errc::DimensionMismatch, "no reward structures");
  RewardStructure out(parts[0]->size(), 0.0);
  for (size_t k = 0; k < parts.size(); ++k) {
    if (parts[k]->size() != out.size())
      fail(Errc::DimensionMismatch, "reward structures differ in length");
    for (size_t r = 0; r < out.size(); ++r) out[r] += w[k] * (*parts[k])[r];
  }
  return out;
}

}  // namespace morap
