#pragma once

#include <algorithm>
#include <iterator>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "morap/geometry.hpp"
#include "morap/instance.hpp"
#include "morap/logic.hpp"
#include "morap/model.hpp"
#include "morap/numerics.hpp"
#include "morap/oracle.hpp"

// Checks that `expr` throws morap::Error with the given code. Usable from any
// Catch2 test case.
#define CHECK_ERRC(expr, wanted)                              \
  do {                                                        \
    bool thrown_ = false;                                     \
    try {                                                     \
      (void)(expr);                                           \
    } catch (const morap::Error& e_) {                        \
      thrown_ = true;                                         \
      CHECK(e_.code() == (wanted));                           \
    }                                                         \
    CHECK(thrown_);                                           \
  } while (0)

namespace testutil {

using Rng = std::mt19937_64;

inline int pick(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double pickReal(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Random formula in the reachability fragment over the first `numAtoms` of
// {x, y, z}. Negation appears only on atoms, mirroring the parser output.
inline morap::Formula randomFormula(Rng& rng, int depth, int numAtoms) {
  using namespace morap;
  static const std::vector<std::string> pool{"x", "y", "z"};
  if (depth <= 0) {
    switch (pick(rng, 0, 5)) {
      case 0: return fTrue();
      case 1: return fFalse();
      default: {
        std::string a = pool[pick(rng, 0, numAtoms - 1)];
        return pick(rng, 0, 1) ? fAtom(a) : fNotAtom(a);
      }
    }
  }
  switch (pick(rng, 0, 5)) {
    case 0: return fAnd({randomFormula(rng, depth - 1, numAtoms), randomFormula(rng, depth - 1, numAtoms)});
    case 1: return fOr({randomFormula(rng, depth - 1, numAtoms), randomFormula(rng, depth - 1, numAtoms)});
    case 2: return fNext(randomFormula(rng, depth - 1, numAtoms));
    case 3: return fUntil(randomFormula(rng, depth - 1, numAtoms), randomFormula(rng, depth - 1, numAtoms));
    case 4: return fEventually(randomFormula(rng, depth - 1, numAtoms));
    default: return randomFormula(rng, 0, numAtoms);
  }
}

using SatMemo = std::map<std::pair<const morap::Formula*, size_t>, bool>;

inline bool strongSatMemo(const morap::Formula& f, const std::vector<uint32_t>& word, size_t pos,
                          const std::vector<std::string>& atoms, SatMemo& memo) {
  using morap::FKind;
  auto it = memo.find({&f, pos});
  if (it != memo.end()) return it->second;
  auto holds = [&](const std::string& a, size_t i) {
    auto at = std::lower_bound(atoms.begin(), atoms.end(), a);
    if (at == atoms.end() || *at != a) return false;
    return ((word[i] >> static_cast<uint32_t>(at - atoms.begin())) & 1u) != 0;
  };
  bool r = false;
  switch (f.kind) {
    case FKind::True: r = true; break;
    case FKind::False: r = false; break;
    case FKind::Atom: r = pos < word.size() && holds(f.atom, pos); break;
    case FKind::NotAtom: r = pos < word.size() && !holds(f.atom, pos); break;
    case FKind::And:
      r = true;
      for (const auto& k : f.kids)
        if (!strongSatMemo(k, word, pos, atoms, memo)) { r = false; break; }
      break;
    case FKind::Or:
      r = false;
      for (const auto& k : f.kids)
        if (strongSatMemo(k, word, pos, atoms, memo)) { r = true; break; }
      break;
    case FKind::Next: r = strongSatMemo(f.kids[0], word, pos + 1, atoms, memo); break;
    case FKind::Until:
      r = pos <= word.size() &&
          (strongSatMemo(f.kids[1], word, pos, atoms, memo) ||
           (strongSatMemo(f.kids[0], word, pos, atoms, memo) &&
            strongSatMemo(f, word, pos + 1, atoms, memo)));
      break;
    case FKind::Eventually:
      r = pos <= word.size() &&
          (strongSatMemo(f.kids[0], word, pos, atoms, memo) ||
           strongSatMemo(f, word, pos + 1, atoms, memo));
      break;
  }
  memo[{&f, pos}] = r;
  return r;
}

// Finite-word semantics: true iff every infinite extension of the word
// satisfies the formula. Recursive evaluation, independent of progression.
inline bool strongSat(const morap::Formula& f, const std::vector<uint32_t>& word, size_t pos,
                      const std::vector<std::string>& atoms) {
  SatMemo memo;
  return strongSatMemo(f, word, pos, atoms, memo);
}

inline std::vector<uint32_t> randomWord(Rng& rng, int maxLen, int alphabetBits) {
  int len = pick(rng, 0, maxLen);
  std::vector<uint32_t> w(len);
  for (auto& x : w) x = static_cast<uint32_t>(pick(rng, 0, (1 << alphabetBits) - 1));
  return w;
}

// Four-state agent: two choices at the start, then deterministic tails.
// Labels: state 1 carries x, state 3 carries y. Every action costs 1.
inline std::pair<morap::Mdp, morap::RewardStructure> fig2Agent() {
  morap::Json j = morap::Json::parse(R"({
    "states": 4,
    "initial": 0,
    "labels": {"1": ["x"], "3": ["y"]},
    "actions": [
      {"state": 0, "name": "a", "to": [{"s": 0, "p": 0.3}, {"s": 1, "p": 0.2}, {"s": 2, "p": 0.5}], "reward": -1},
      {"state": 0, "name": "b", "to": [{"s": 1, "p": 0.9}, {"s": 3, "p": 0.1}], "reward": -1},
      {"state": 1, "name": "a", "to": [{"s": 1, "p": 1.0}], "reward": -1},
      {"state": 2, "name": "a", "to": [{"s": 3, "p": 1.0}], "reward": -1},
      {"state": 3, "name": "a", "to": [{"s": 3, "p": 1.0}], "reward": -1}
    ]
  })");
  return morap::mdpFromJson(j);
}

inline morap::Dfa fig2Task() {
  return morap::insertPreSinks(morap::formulaToDfa(morap::parseCoSafe("!x U y")));
}

// Random model with explicit done states. Every action routes at least
// `minEscape` probability straight to a done state, so the objective is
// reached geometrically fast under every scheduler and value iteration has a
// contraction factor of at most 1 - minEscape.
inline morap::ProductMdp randomDoneModel(Rng& rng, int maxStates, double minEscape = 0.08,
                                         int maxActions = 3, bool nonpositiveRewards = false) {
  using namespace morap;
  ProductMdp p;
  Mdp& m = p.mdp;
  int nonDone = pick(rng, 1, std::max(1, maxStates - 1));
  int nDone = pick(rng, 1, 2);
  m.numStates = nonDone + nDone;
  m.initial = 0;
  m.trnOffset.push_back(0);
  for (int s = 0; s < m.numStates; ++s) {
    m.rowOffset.push_back(m.numActions());
    bool isDone = s >= nonDone;
    int acts = isDone ? 1 : pick(rng, 1, maxActions);
    for (int a = 0; a < acts; ++a) {
      if (isDone) {
        m.succ.push_back(s);
        m.prob.push_back(1.0);
        p.cost.push_back(0.0);
      } else {
        int fan = pick(rng, 1, 3);
        double escape = minEscape + pickReal(rng, 0.0, 0.4);
        std::vector<double> raw(fan);
        double sum = 0.0;
        for (auto& x : raw) sum += (x = pickReal(rng, 0.05, 1.0));
        for (int k = 0; k < fan; ++k) {
          m.succ.push_back(pick(rng, 0, m.numStates - 1));
          m.prob.push_back((1.0 - escape) * raw[k] / sum);
        }
        m.succ.push_back(nonDone + pick(rng, 0, nDone - 1));
        m.prob.push_back(escape);
        p.cost.push_back(nonpositiveRewards ? pickReal(rng, -2.0, 0.0) : pickReal(rng, -2.0, 1.0));
      }
      m.trnOffset.push_back(static_cast<int>(m.succ.size()));
      m.actionName.push_back("a" + std::to_string(a));
      p.success.push_back(0.0);
    }
  }
  m.rowOffset.push_back(m.numActions());
  m.labels.assign(m.numStates, {});
  p.agentState.assign(m.numStates, 0);
  p.dfaLocation.assign(m.numStates, 0);
  p.done.assign(m.numStates, 0);
  for (int s = nonDone; s < m.numStates; ++s) p.done[s] = 1;
  p.accept = p.done;
  p.preSink.assign(m.numStates, 0);
  p.rewardFinite = checkRewardFinite(p);
  p.structuralHash = productHash(p);
  return p;
}

// Small random agent over atoms {x, y} with negative action costs.
inline std::pair<morap::Mdp, morap::RewardStructure> randomAgentMdp(Rng& rng, int maxStates,
                                                                    int maxActions = 2) {
  morap::Mdp m;
  m.numStates = pick(rng, 2, maxStates);
  m.initial = 0;
  m.labels.assign(m.numStates, {});
  m.rowOffset.push_back(0);
  m.trnOffset.push_back(0);
  morap::RewardStructure cost;
  for (int s = 0; s < m.numStates; ++s) {
    if (pick(rng, 0, 2) == 0) m.labels[s].push_back("x");
    if (pick(rng, 0, 2) == 0) m.labels[s].push_back("y");
    int acts = pick(rng, 1, maxActions);
    for (int a = 0; a < acts; ++a) {
      std::set<int> tos;
      int fan = pick(rng, 1, 2);
      while (static_cast<int>(tos.size()) < fan) tos.insert(pick(rng, 0, m.numStates - 1));
      std::vector<double> w;
      double total = 0.0;
      for (size_t k = 0; k < tos.size(); ++k) {
        w.push_back(pickReal(rng, 0.2, 1.0));
        total += w.back();
      }
      size_t k = 0;
      for (int to : tos) {
        m.succ.push_back(to);
        m.prob.push_back(w[k++] / total);
      }
      m.trnOffset.push_back(static_cast<int>(m.succ.size()));
      m.actionName.push_back("a" + std::to_string(a));
      cost.push_back(pickReal(rng, -2.0, 0.0));
    }
    m.rowOffset.push_back(static_cast<int>(m.trnOffset.size()) - 1);
  }
  morap::validateMdp(m);
  return {m, cost};
}

// Random instance where every product is reward-finite, found by rejection.
inline morap::MorapInstance randomTinyInstance(Rng& rng, int maxAgents = 2, int maxStates = 4) {
  static const char* pool[] = {"F x",         "F y",       "x U y",     "y U x",
                               "F (x & F y)", "F (x & y)", "X x",       "true",
                               "F x | F y",   "F x & F y", "!x U y"};
  for (int attempt = 0; attempt < 400; ++attempt) {
    int n = pick(rng, 1, maxAgents);
    std::vector<morap::Mdp> agents;
    std::vector<morap::RewardStructure> costs;
    for (int i = 0; i < n; ++i) {
      auto [m, c] = randomAgentMdp(rng, maxStates);
      agents.push_back(std::move(m));
      costs.push_back(std::move(c));
    }
    std::vector<morap::Dfa> tasks;
    int numTasks = pick(rng, 1, n);
    for (int j = 0; j < numTasks; ++j) {
      const char* f = pool[pick(rng, 0, static_cast<int>(std::size(pool)) - 1)];
      tasks.push_back(morap::insertPreSinks(morap::formulaToDfa(morap::parseCoSafe(f))));
    }
    try {
      return morap::buildInstance(std::move(agents), std::move(costs), std::move(tasks));
    } catch (const morap::Error& e) {
      if (e.code() != morap::Errc::NotRewardFinite) throw;
    }
  }
  throw std::runtime_error("randomTinyInstance: no reward-finite draw in 400 attempts");
}

inline morap::MorapInstance fig2Instance() {
  auto [agent, cost] = fig2Agent();
  return morap::buildInstance({agent}, {cost}, {fig2Task()});
}

// Samples a threshold vector with an unambiguous verdict: either at least
// `margin` outside the achievable hull, or `margin`-deep inside it. Returns
// false when the draw landed too close to the boundary.
inline bool clearThreshold(Rng& rng, const morap::AchievableHull& hull, double margin,
                           morap::Vec& out) {
  const size_t dim = hull.vertices.front().size();
  morap::Vec lo = hull.vertices.front(), hi = lo;
  for (const auto& v : hull.vertices)
    for (size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  morap::Vec t(dim, 0.0);
  for (size_t k = 0; k < dim; ++k) {
    t[k] = pickReal(rng, lo[k] - 0.4, hi[k] + 0.4);
    if (k >= dim / 2) t[k] = std::min(1.0, std::max(0.0, t[k]));
  }
  morap::NormMatrix norm = morap::NormMatrix::identity(static_cast<int>(dim));
  morap::LowerApprox phi{hull.vertices};
  if (morap::projectToLowerApprox(t, phi, norm).distance > margin) {
    out = t;
    return true;
  }
  morap::Vec up = t;
  for (double& v : up) v += margin;
  if (morap::projectToLowerApprox(up, phi, norm).distance <= 1e-9) {
    out = t;
    return true;
  }
  return false;
}

inline morap::Scheduler randomScheduler(Rng& rng, const morap::Mdp& m) {
  std::vector<int> rows(m.numStates);
  for (int s = 0; s < m.numStates; ++s) rows[s] = pick(rng, m.actionsBegin(s), m.actionsEnd(s) - 1);
  return morap::makeDeterministic(std::move(rows));
}

}  // namespace testutil
