#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "morap/centralised.hpp"
#include "morap/oracle.hpp"
#include "morap/solver.hpp"
#include "morap/warehouse.hpp"

using namespace morap;

namespace {

// Single agent s0 -> s1 (labelled g) with a self-loop at s1, task F g.
MorapInstance tinyChainInstance() {
  Json j = {
      {"states", 2},
      {"initial", 0},
      {"labels", {{"1", {"g"}}}},
      {"actions",
       {{{"state", 0}, {"name", "go"}, {"to", {{{"s", 1}, {"p", 1.0}}}}, {"reward", -1.0}},
        {{"state", 1}, {"name", "stay"}, {"to", {{{"s", 1}, {"p", 1.0}}}}, {"reward", 0.0}}}}};
  auto [mdp, cost] = mdpFromJson(j);
  return buildInstance({mdp}, {cost}, {insertPreSinks(formulaToDfa(parseCoSafe("F g")))});
}

// First state in discovery order matching the tuple; productState -1 = any.
int stateOf(const CentralisedMdp& c, int i, int j, uint32_t mask, int p = -1) {
  for (int s = 0; s < c.mdp.numStates; ++s)
    if (c.agentIdx[s] == i && c.taskIdx[s] == j && c.assigned[s] == mask &&
        (p < 0 || c.productState[s] == p))
      return s;
  return -1;
}

std::set<std::string> actionsAt(const CentralisedMdp& c, int s) {
  std::set<std::string> names;
  for (int r = c.mdp.actionsBegin(s); r < c.mdp.actionsEnd(s); ++r)
    names.insert(c.mdp.actionName[r]);
  return names;
}

}  // namespace

TEST_CASE("centralised construction matches the hand enumeration", "[centralised]") {
  MorapInstance inst = tinyChainInstance();
  CentralisedMdp c = buildCentralised(inst);

  // (s0,q0,{}), (s0,q0,{1}), (s1,q_pre,{1}), (s1,accept,{1}).
  REQUIRE(c.mdp.numStates == 4);
  REQUIRE(c.n == 1);
  REQUIRE(c.rewardFinite);
  REQUIRE(c.rewards.size() == 2);

  REQUIRE(c.mdp.initial == 0);
  REQUIRE(c.agentIdx[0] == 0);
  REQUIRE(c.assigned[0] == 0u);
  REQUIRE(actionsAt(c, 0) == std::set<std::string>{"b1"});

  int assignedStart = stateOf(c, 0, 0, 1u, inst.products[0][0]->mdp.initial);
  REQUIRE(assignedStart >= 0);
  REQUIRE(actionsAt(c, assignedStart) == std::set<std::string>{"go"});

  // Exactly one state is the model-checking target and it is absorbing.
  int doneCount = 0, target = -1;
  for (int s = 0; s < c.mdp.numStates; ++s)
    if (c.done[s]) {
      ++doneCount;
      target = s;
    }
  REQUIRE(doneCount == 1);
  REQUIRE(actionsAt(c, target) == std::set<std::string>{"!halt"});
  REQUIRE(c.mdp.labels[target] == std::vector<std::string>{"done"});

  // Pre-sink step carries the task success; control actions carry nothing.
  int pre = -1;
  for (int s = 0; s < c.mdp.numStates; ++s)
    if (!c.done[s] && !c.taskEnded[s] && c.productState[s] != inst.products[0][0]->mdp.initial)
      pre = s;
  REQUIRE(pre >= 0);
  REQUIRE(actionsAt(c, pre) == std::set<std::string>{kInternalAction});
  double liftedSuccess = 0.0, liftedCost = 0.0;
  for (int r = 0; r < c.mdp.numActions(); ++r) {
    liftedSuccess += c.rewards[1][r];
    liftedCost += c.rewards[0][r];
  }
  REQUIRE(liftedSuccess == 1.0);
  REQUIRE(liftedCost == -1.0);
}

TEST_CASE("centralised assignment phase walks the free agents", "[centralised]") {
  // Two identical agents and two identical tasks.
  MorapInstance one = tinyChainInstance();
  MorapInstance inst =
      buildInstance({one.agents[0], one.agents[0]}, {one.costs[0], one.costs[0]},
                    {one.tasks[0], one.tasks[0]});
  CentralisedMdp c = buildCentralised(inst);

  // Initial: assign to agent 1 or forward to agent 2; the forwarded state
  // only assigns (no third agent to forward to).
  REQUIRE(actionsAt(c, 0) == std::set<std::string>{"b1", "b2"});
  int fwd = stateOf(c, 1, 0, 0u);
  REQUIRE(fwd >= 0);
  REQUIRE(actionsAt(c, fwd) == std::set<std::string>{"b1"});
  REQUIRE(stateOf(c, 0, 0, 1u, inst.products[0][0]->mdp.initial) >= 0);
  REQUIRE(stateOf(c, 1, 0, 2u, inst.products[1][0]->mdp.initial) >= 0);

  // A finished first task hands the second one to the remaining free agent.
  for (int s = 0; s < c.mdp.numStates; ++s)
    if (c.taskEnded[s] && c.taskIdx[s] == 0) {
      REQUIRE(actionsAt(c, s) == std::set<std::string>{"b3"});
      int r = c.mdp.actionsBegin(s);
      int next = c.mdp.succ[c.mdp.trnBegin(r)];
      REQUIRE(c.taskIdx[next] == 1);
      REQUIRE(c.assigned[next] == c.assigned[s]);
      REQUIRE((c.assigned[s] >> c.agentIdx[next] & 1u) == 0u);
    }

  // Rule (v): every ended-task state carries the label, assigned or not.
  for (int s = 0; s < c.mdp.numStates; ++s)
    REQUIRE((c.mdp.labels[s] == std::vector<std::string>{"done"}) == (c.taskEnded[s] != 0));

  SECTION("state guard refuses oversized builds") {
    CHECK_ERRC(buildCentralised(inst, 5), Errc::SizeGuard);
  }
}

TEST_CASE("centralised verdicts match the worked single-agent example", "[centralised]") {
  MorapInstance inst = testutil::fig2Instance();
  CentralisedMdp c = buildCentralised(inst);
  NormMatrix norm = NormMatrix::identity(2);

  ParetoResult feasible = centralisedParetoPoint(c, {-2.5, 0.7}, norm, 1e-6);
  REQUIRE(feasible.converged);
  REQUIRE(feasible.feasible);

  ParetoResult infeasible = centralisedParetoPoint(c, {-1.8, 0.9}, norm, 1e-6);
  REQUIRE(infeasible.converged);
  REQUIRE_FALSE(infeasible.feasible);
  // Same nearest achievable point as the decentralised route.
  REQUIRE(infeasible.tDown[0] == Catch::Approx(-1.9535).margin(2e-3));
  REQUIRE(infeasible.tDown[1] == Catch::Approx(0.6128).margin(2e-3));
}

TEST_CASE("weighted optima agree between the two formulations", "[centralised]") {
  testutil::Rng rng(550123);
  PoolConfig pool = configurePool(2, 1, 16);
  for (int round = 0; round < 12; ++round) {
    MorapInstance inst = testutil::randomTinyInstance(rng, 2, 4);
    CentralisedMdp c = buildCentralised(inst);
    REQUIRE(c.rewardFinite);
    for (int trial = 0; trial < 4; ++trial) {
      Vec w(2 * inst.n);
      double norm1 = 0.0;
      for (double& x : w) {
        x = testutil::pickReal(rng, 0.0, 1.0);
        norm1 += x;
      }
      if (norm1 == 0.0) continue;
      for (double& x : w) x /= norm1;
      SupportingPoint dec = supportingPoint(inst, w, pool);
      SupportingPoint cen = centralisedSupportingPoint(c, w);
      REQUIRE(dot(w, cen.r) == Catch::Approx(dot(w, dec.r)).margin(1e-4));
    }
  }
}

TEST_CASE("centralised and decentralised feasibility verdicts agree", "[centralised]") {
  testutil::Rng rng(990321);
  PoolConfig pool = configurePool(2, 1, 16);
  NormMatrix norm2 = NormMatrix::identity(2);
  int checked = 0;
  for (int round = 0; round < 40 && checked < 14; ++round) {
    MorapInstance inst = testutil::randomTinyInstance(rng, 2, 4);
    AchievableHull hull = bruteForceHull(inst);
    Vec sample;
    if (!testutil::clearThreshold(rng, hull, 5e-3, sample)) continue;

    Vec user(inst.n + inst.realTasks);
    for (int i = 0; i < inst.n; ++i) user[i] = sample[i];
    for (int j = 0; j < inst.realTasks; ++j) user[inst.n + j] = sample[inst.n + j];

    CentralisedMdp c = buildCentralised(inst);
    ParetoResult cen = centralisedParetoPoint(c, user, NormMatrix::identity(2 * inst.n), 1e-6);
    ParetoResult dec = paretoPoint(inst, user, NormMatrix::identity(2 * inst.n), 1e-6, pool);
    REQUIRE(cen.converged);
    REQUIRE(dec.converged);
    REQUIRE(cen.feasible == dec.feasible);
    ++checked;
  }
  REQUIRE(checked >= 14);
  (void)norm2;
}

TEST_CASE("centralised supporting points stay on the decentralised hull", "[centralised]") {
  testutil::Rng rng(7331);
  MorapInstance inst = testutil::randomTinyInstance(rng, 2, 3);
  AchievableHull hull = bruteForceHull(inst);
  CentralisedMdp c = buildCentralised(inst);
  ParetoResult res = centralisedParetoPoint(c, Vec(inst.n + inst.realTasks, 0.4),
                                            NormMatrix::identity(2 * inst.n), 1e-6);
  REQUIRE(res.converged);
  for (const Vec& r : res.phi.points) REQUIRE(hullMembership(r, hull, 1e-4));
}

TEST_CASE("zero probability thresholds are always feasible centrally", "[centralised]") {
  MorapInstance inst = tinyChainInstance();
  CentralisedMdp c = buildCentralised(inst);
  Vec t{-1000.0, 0.0};
  ParetoResult res = centralisedParetoPoint(c, t, NormMatrix::identity(2), 1e-6);
  REQUIRE(res.feasible);
}

TEST_CASE("centralised growth outpaces the decentralised total", "[centralised]") {
  WarehouseConfig cfg;
  cfg.width = 3;
  cfg.height = 3;
  cfg.slip = 0.05;
  cfg.racks = {{2, 2}, {0, 2}, {2, 0}};
  cfg.feed = {0, 0};
  cfg.seed = 5;

  double prevRatio = 0.0;
  for (int n = 1; n <= 3; ++n) {
    cfg.agents = n;
    MorapInstance inst = generateInstance(cfg);
    long dec = 0;
    for (const auto& row : inst.products)
      for (const auto& p : row) dec += p->mdp.numStates;
    CentralisedMdp c = buildCentralised(inst);
    double ratio = static_cast<double>(c.mdp.numStates) / static_cast<double>(dec);
    if (n > 1) REQUIRE(ratio > prevRatio);
    prevRatio = ratio;
  }
}
