#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "morap/common.hpp"
#include "morap/logic.hpp"

namespace morap {

// MDP in compressed sparse rows: states own contiguous action rows, action
// rows own contiguous (successor, probability) entries. Probabilities are
// normalized on load so each row sums to 1 within 1e-12.
struct Mdp {
  int numStates = 0;
  int initial = 0;
  std::vector<int> rowOffset;   // numStates + 1; action rows of state s
  std::vector<int> trnOffset;   // numActions + 1; transitions of action row r
  std::vector<int> succ;
  std::vector<double> prob;
  std::vector<std::string> actionName;             // per action row
  std::vector<std::vector<std::string>> labels;    // per state, sorted

  int numActions() const { return static_cast<int>(trnOffset.size()) - 1; }
  int actionsBegin(int s) const { return rowOffset[s]; }
  int actionsEnd(int s) const { return rowOffset[s + 1]; }
  int trnBegin(int r) const { return trnOffset[r]; }
  int trnEnd(int r) const { return trnOffset[r + 1]; }
};

// One scalar per action row.
using RewardStructure = Vec;

inline void validateMdp(const Mdp& m, double rowSumTol = 1e-9) {
  if (m.numStates <= 0) fail(Errc::InvalidModel, "model has no states");
  if (m.initial < 0 || m.initial >= m.numStates) fail(Errc::InvalidModel, "initial state out of range");
  for (int s = 0; s < m.numStates; ++s)
    if (m.actionsBegin(s) >= m.actionsEnd(s))
      fail(Errc::InvalidModel, "deadlock: state " + std::to_string(s) + " has no action");
  for (int r = 0; r < m.numActions(); ++r) {
    double sum = 0.0;
    for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) {
      if (m.prob[k] < 0.0) fail(Errc::InvalidModel, "negative transition probability");
      if (m.succ[k] < 0 || m.succ[k] >= m.numStates) fail(Errc::InvalidModel, "successor out of range");
      sum += m.prob[k];
    }
    if (std::fabs(sum - 1.0) > rowSumTol)
      fail(Errc::InvalidModel, "action row " + std::to_string(r) + " sums to " + std::to_string(sum));
  }
}

inline void renormalizeRows(Mdp& m) {
  for (int r = 0; r < m.numActions(); ++r) {
    double sum = 0.0;
    for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) sum += m.prob[k];
    if (sum > 0.0)
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) m.prob[k] /= sum;
  }
}

// Schema: {"states": int, "initial": int, "labels": {"<state>": [atom...]},
//          "actions": [{"state": s, "name": str, "to": [{"s": int, "p": num}...],
//                       "reward": num}...]}
inline std::pair<Mdp, RewardStructure> mdpFromJson(const Json& j) {
  if (!j.is_object() || !j.contains("states") || !j.contains("actions"))
    fail(Errc::InvalidModel, "model JSON must carry states and actions");
  Mdp m;
  m.numStates = j.at("states").get<int>();
  m.initial = j.value("initial", 0);
  if (m.numStates <= 0) fail(Errc::InvalidModel, "model has no states");

  m.labels.assign(m.numStates, {});
  if (j.contains("labels")) {
    for (auto it = j.at("labels").begin(); it != j.at("labels").end(); ++it) {
      int s = std::stoi(it.key());
      if (s < 0 || s >= m.numStates) fail(Errc::InvalidModel, "label for unknown state " + it.key());
      for (const auto& a : it.value()) m.labels[s].push_back(a.get<std::string>());
      std::sort(m.labels[s].begin(), m.labels[s].end());
      m.labels[s].erase(std::unique(m.labels[s].begin(), m.labels[s].end()), m.labels[s].end());
    }
  }

  // Group action rows by state, keeping file order within a state.
  std::vector<std::vector<const Json*>> byState(m.numStates);
  for (const auto& a : j.at("actions")) {
    int s = a.at("state").get<int>();
    if (s < 0 || s >= m.numStates) fail(Errc::InvalidModel, "action at unknown state");
    byState[s].push_back(&a);
  }
  RewardStructure reward;
  m.rowOffset.assign(m.numStates + 1, 0);
  m.trnOffset.push_back(0);
  for (int s = 0; s < m.numStates; ++s) {
    m.rowOffset[s] = static_cast<int>(reward.size());
    for (const Json* a : byState[s]) {
      for (const auto& t : a->at("to")) {
        m.succ.push_back(t.at("s").get<int>());
        m.prob.push_back(t.at("p").get<double>());
      }
      m.trnOffset.push_back(static_cast<int>(m.succ.size()));
      m.actionName.push_back(a->value("name", ""));
      reward.push_back(a->value("reward", 0.0));
    }
  }
  m.rowOffset[m.numStates] = static_cast<int>(reward.size());

  validateMdp(m);       // reject row sums off by more than 1e-9 ...
  renormalizeRows(m);   // ... then make them exact
  return {std::move(m), std::move(reward)};
}

inline Json mdpToJson(const Mdp& m, const RewardStructure& reward) {
  Json j;
  j["states"] = m.numStates;
  j["initial"] = m.initial;
  Json labels = Json::object();
  for (int s = 0; s < m.numStates; ++s)
    if (!m.labels[s].empty()) labels[std::to_string(s)] = m.labels[s];
  j["labels"] = labels;
  Json actions = Json::array();
  for (int s = 0; s < m.numStates; ++s)
    for (int r = m.actionsBegin(s); r < m.actionsEnd(s); ++r) {
      Json to = Json::array();
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k)
        to.push_back({{"s", m.succ[k]}, {"p", m.prob[k]}});
      actions.push_back({{"state", s},
                         {"name", m.actionName[r]},
                         {"to", to},
                         {"reward", reward[r]}});
    }
  j["actions"] = actions;
  return j;
}

// Product of an agent MDP with a task automaton. States are reachable
// (state, location) pairs; at pre-sink locations the agent's actions are
// replaced by a single internal step that pays the success reward.
struct ProductMdp {
  Mdp mdp;
  std::vector<int> agentState;   // product state -> s
  std::vector<int> dfaLocation;  // product state -> q
  std::vector<char> done;        // q in Q_F or Q_R
  std::vector<char> accept;      // q in Q_F
  std::vector<char> preSink;     // q is a pre-sink
  RewardStructure cost;
  RewardStructure success;
  bool rewardFinite = false;     // done reached w.p. 1 under every scheduler
  std::vector<std::string> droppedAtoms;  // agent labels outside the alphabet
  int agentId = -1;
  int taskId = -1;
  uint64_t structuralHash = 0;
};

inline const std::string kInternalAction = "!advance";

// Largest set V of non-done states in which some action can stay forever;
// the model is reward-finite exactly when V is empty.
inline std::vector<int> maximalAvoidSet(const Mdp& m, const std::vector<char>& done) {
  const int R = m.numActions();
  std::vector<int> owner(R);
  for (int s = 0; s < m.numStates; ++s)
    for (int r = m.actionsBegin(s); r < m.actionsEnd(s); ++r) owner[r] = s;

  std::vector<char> inV(m.numStates, 0);
  for (int s = 0; s < m.numStates; ++s) inV[s] = done[s] ? 0 : 1;

  // outCount[r]: successors outside V; safeCount[s]: actions with outCount 0.
  std::vector<int> outCount(R, 0), safeCount(m.numStates, 0);
  std::vector<std::vector<int>> rowsInto(m.numStates);
  for (int r = 0; r < R; ++r) {
    if (!inV[owner[r]]) continue;
    for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) {
      if (!inV[m.succ[k]]) ++outCount[r];
      rowsInto[m.succ[k]].push_back(r);
    }
    if (outCount[r] == 0) ++safeCount[owner[r]];
  }
  std::deque<int> dead;
  for (int s = 0; s < m.numStates; ++s)
    if (inV[s] && safeCount[s] == 0) dead.push_back(s);
  while (!dead.empty()) {
    int s = dead.front();
    dead.pop_front();
    if (!inV[s]) continue;
    inV[s] = 0;
    for (int r : rowsInto[s]) {
      if (!inV[owner[r]]) continue;
      if (outCount[r]++ == 0 && --safeCount[owner[r]] == 0) dead.push_back(owner[r]);
    }
  }
  std::vector<int> v;
  for (int s = 0; s < m.numStates; ++s)
    if (inV[s]) v.push_back(s);
  return v;
}

inline bool checkRewardFinite(const Mdp& m, const std::vector<char>& done) {
  return maximalAvoidSet(m, done).empty();
}

inline bool checkRewardFinite(const ProductMdp& p) { return checkRewardFinite(p.mdp, p.done); }

inline uint64_t productHash(const ProductMdp& p) {
  uint64_t h = kHashSeed;
  h = hashCombine(h, static_cast<uint64_t>(p.mdp.numStates));
  h = hashCombine(h, static_cast<uint64_t>(p.mdp.initial));
  for (int x : p.mdp.rowOffset) h = hashCombine(h, static_cast<uint64_t>(x));
  for (int x : p.mdp.trnOffset) h = hashCombine(h, static_cast<uint64_t>(x));
  for (int x : p.mdp.succ) h = hashCombine(h, static_cast<uint64_t>(x));
  for (double x : p.mdp.prob) h = hashDouble(h, x);
  for (double x : p.cost) h = hashDouble(h, x);
  for (double x : p.success) h = hashDouble(h, x);
  for (char c : p.done) h = hashCombine(h, static_cast<uint64_t>(c));
  for (char c : p.accept) h = hashCombine(h, static_cast<uint64_t>(c));
  return h;
}

// The initial location consumes the initial state's label unless it is a
// pre-sink; pre-sink initials keep their dedicated success step.
inline int productInitialLocation(const Dfa& d, const Mdp& m) {
  if (d.preSink[d.initial]) return d.initial;
  return d.step(d.initial, static_cast<int>(letterMaskFor(d, m.labels[m.initial])));
}

inline ProductMdp buildProduct(const Mdp& agent, const RewardStructure& agentCost, const Dfa& task,
                               int agentId = -1, int taskId = -1) {
  if (static_cast<int>(agentCost.size()) != agent.numActions())
    fail(Errc::DimensionMismatch, "cost structure does not match the model's action rows");
  // Acceptance must always be preceded by a pre-sink step, otherwise the
  // success reward could not be placed on a unique action.
  if (task.accepting[task.initial])
    fail(Errc::InvalidDfa, "task automaton lacks pre-sinks: initial location is accepting");
  for (int q = 0; q < task.numLocations; ++q) {
    if (task.accepting[q] || task.preSink[q]) continue;
    for (int w = 0; w < task.numLetters(); ++w)
      if (task.accepting[task.step(q, w)])
        fail(Errc::InvalidDfa, "task automaton lacks pre-sinks: acceptance without a pre-sink step");
  }

  ProductMdp p;
  p.agentId = agentId;
  p.taskId = taskId;

  std::set<std::string> alphabet(task.atoms.begin(), task.atoms.end());
  std::set<std::string> dropped;
  std::vector<uint32_t> letterOf(agent.numStates);
  for (int s = 0; s < agent.numStates; ++s) {
    letterOf[s] = letterMaskFor(task, agent.labels[s]);
    for (const auto& a : agent.labels[s])
      if (!alphabet.count(a)) dropped.insert(a);
  }
  p.droppedAtoms.assign(dropped.begin(), dropped.end());

  auto key = [&](int s, int q) { return static_cast<long long>(s) * task.numLocations + q; };
  std::unordered_map<long long, int> index;
  std::vector<std::pair<int, int>> states;
  auto intern = [&](int s, int q) {
    long long k = key(s, q);
    auto it = index.find(k);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(states.size());
    index.emplace(k, id);
    states.emplace_back(s, q);
    return id;
  };

  Mdp& prod = p.mdp;
  prod.initial = intern(agent.initial, productInitialLocation(task, agent));
  prod.trnOffset.push_back(0);
  for (size_t head = 0; head < states.size(); ++head) {
    auto [s, q] = states[head];
    prod.rowOffset.push_back(prod.numActions());
    if (task.preSink[q]) {
      int q2 = task.step(q, static_cast<int>(letterOf[s]));
      prod.succ.push_back(intern(s, q2));
      prod.prob.push_back(1.0);
      prod.trnOffset.push_back(static_cast<int>(prod.succ.size()));
      prod.actionName.push_back(kInternalAction);
      p.cost.push_back(0.0);
      p.success.push_back(1.0);
    } else {
      for (int r = agent.actionsBegin(s); r < agent.actionsEnd(s); ++r) {
        for (int k = agent.trnBegin(r); k < agent.trnEnd(r); ++k) {
          int s2 = agent.succ[k];
          prod.succ.push_back(intern(s2, task.step(q, static_cast<int>(letterOf[s2]))));
          prod.prob.push_back(agent.prob[k]);
        }
        prod.trnOffset.push_back(static_cast<int>(prod.succ.size()));
        prod.actionName.push_back(agent.actionName[r]);
        p.cost.push_back(agentCost[r]);
        p.success.push_back(0.0);
      }
    }
  }
  prod.numStates = static_cast<int>(states.size());
  // rowOffset was appended per state during the BFS; close it.
  prod.rowOffset.push_back(prod.numActions());
  prod.labels.assign(prod.numStates, {});

  p.agentState.resize(prod.numStates);
  p.dfaLocation.resize(prod.numStates);
  p.done.resize(prod.numStates);
  p.accept.resize(prod.numStates);
  p.preSink.resize(prod.numStates);
  for (int id = 0; id < prod.numStates; ++id) {
    auto [s, q] = states[id];
    p.agentState[id] = s;
    p.dfaLocation[id] = q;
    p.accept[id] = task.accepting[q];
    p.done[id] = task.accepting[q] || task.trap[q];
    p.preSink[id] = task.preSink[q];
  }
  p.rewardFinite = checkRewardFinite(p);
  p.structuralHash = productHash(p);
  return p;
}

// Restriction to states reachable from the initial one, preserving discovery
// order; applying it to an already-restricted model is the identity.
inline ProductMdp restrictReachable(const ProductMdp& in) {
  const Mdp& m = in.mdp;
  std::vector<int> order;
  std::vector<int> newId(m.numStates, -1);
  std::deque<int> bfs{m.initial};
  newId[m.initial] = 0;
  order.push_back(m.initial);
  while (!bfs.empty()) {
    int s = bfs.front();
    bfs.pop_front();
    for (int r = m.actionsBegin(s); r < m.actionsEnd(s); ++r)
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k)
        if (newId[m.succ[k]] == -1) {
          newId[m.succ[k]] = static_cast<int>(order.size());
          order.push_back(m.succ[k]);
          bfs.push_back(m.succ[k]);
        }
  }
  ProductMdp out;
  out.agentId = in.agentId;
  out.taskId = in.taskId;
  out.droppedAtoms = in.droppedAtoms;
  Mdp& o = out.mdp;
  o.numStates = static_cast<int>(order.size());
  o.initial = 0;
  o.trnOffset.push_back(0);
  for (int idx = 0; idx < o.numStates; ++idx) {
    int s = order[idx];
    o.rowOffset.push_back(o.numActions());
    for (int r = m.actionsBegin(s); r < m.actionsEnd(s); ++r) {
      for (int k = m.trnBegin(r); k < m.trnEnd(r); ++k) {
        o.succ.push_back(newId[m.succ[k]]);
        o.prob.push_back(m.prob[k]);
      }
      o.trnOffset.push_back(static_cast<int>(o.succ.size()));
      o.actionName.push_back(m.actionName[r]);
      out.cost.push_back(in.cost[r]);
      out.success.push_back(in.success[r]);
    }
    out.agentState.push_back(in.agentState[s]);
    out.dfaLocation.push_back(in.dfaLocation[s]);
    out.done.push_back(in.done[s]);
    out.accept.push_back(in.accept[s]);
    out.preSink.push_back(in.preSink[s]);
  }
  o.rowOffset.push_back(o.numActions());
  o.labels.assign(o.numStates, {});
  out.rewardFinite = checkRewardFinite(out);
  out.structuralHash = productHash(out);
  return out;
}

}  // namespace morap
