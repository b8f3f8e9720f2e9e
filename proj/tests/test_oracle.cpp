#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "morap/oracle.hpp"

using namespace morap;
using Catch::Approx;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

// Two-state agent: one action into an x-labeled absorbing state.
MorapInstance singleActionInstance() {
  Json j = Json::parse(R"({
    "states": 2,
    "initial": 0,
    "labels": {"1": ["x"]},
    "actions": [
      {"state": 0, "name": "m", "to": [{"s": 1, "p": 1.0}], "reward": -1},
      {"state": 1, "name": "m", "to": [{"s": 1, "p": 1.0}], "reward": -1}
    ]
  })");
  auto [agent, cost] = mdpFromJson(j);
  return buildInstance({agent}, {cost}, {insertPreSinks(formulaToDfa(parseCoSafe("F x")))});
}

// Chain with two parallel actions per step; the pure scheduler count explodes.
MorapInstance chainInstance(int steps) {
  Mdp m;
  m.numStates = steps + 1;
  m.initial = 0;
  m.labels.assign(m.numStates, {});
  m.labels[steps] = {"x"};
  m.rowOffset.push_back(0);
  m.trnOffset.push_back(0);
  RewardStructure cost;
  for (int s = 0; s < m.numStates; ++s) {
    int acts = s < steps ? 2 : 1;
    for (int a = 0; a < acts; ++a) {
      m.succ.push_back(s < steps ? s + 1 : s);
      m.prob.push_back(1.0);
      m.trnOffset.push_back(static_cast<int>(m.succ.size()));
      m.actionName.push_back(a == 0 ? "l" : "r");
      cost.push_back(-1.0);
    }
    m.rowOffset.push_back(static_cast<int>(m.trnOffset.size()) - 1);
  }
  validateMdp(m);
  return buildInstance({m}, {cost}, {insertPreSinks(formulaToDfa(parseCoSafe("F x")))});
}

}  // namespace

TEST_CASE("instances pad, deduplicate and validate") {
  SECTION("single pair") {
    MorapInstance inst = testutil::fig2Instance();
    CHECK(inst.n == 1);
    CHECK(inst.realTasks == 1);
    CHECK(inst.distinctProducts == 1);
    CHECK(inst.products[0][0]->rewardFinite);
  }

  SECTION("dummy-task padding") {
    auto [agent, cost] = testutil::fig2Agent();
    MorapInstance inst = buildInstance({agent, agent}, {cost, cost}, {testutil::fig2Task()});
    CHECK(inst.n == 2);
    CHECK(inst.realTasks == 1);
    CHECK(inst.tasks.size() == 2);
    // The dummy product finishes on its first step with certainty.
    const ProductMdp& dummy = *inst.products[0][1];
    Scheduler first;
    first.choice.resize(dummy.mdp.numStates);
    for (int s = 0; s < dummy.mdp.numStates; ++s)
      first.choice[s] = {{dummy.mdp.actionsBegin(s), 1.0}};
    CHECK(exactEvaluate(dummy, first, dummy.success) == Approx(1.0));

    Vec t = expandThresholds(inst, {-2.0, -3.0, 0.5});
    REQUIRE(t.size() == 4);
    CHECK(t[2] == 0.5);
    CHECK(t[3] == 0.0);
  }

  SECTION("identical pairs share one product") {
    auto [agent, cost] = testutil::fig2Agent();
    MorapInstance inst = buildInstance({agent, agent}, {cost, cost},
                                       {testutil::fig2Task(), testutil::fig2Task()});
    CHECK(inst.distinctProducts == 1);
    CHECK(inst.products[0][0].get() == inst.products[1][1].get());
  }

  SECTION("bad input") {
    auto [agent, cost] = testutil::fig2Agent();
    CHECK_ERRC(buildInstance({agent}, {cost}, {testutil::fig2Task(), testutil::fig2Task()}),
               Errc::InvalidModel);
    CHECK_ERRC(buildInstance({agent}, {}, {testutil::fig2Task()}), Errc::DimensionMismatch);
    CHECK_ERRC(buildInstance({}, {}, {}), Errc::InvalidModel);

    // A task that can never finish makes the pair cycle forever.
    Json j = Json::parse(R"({
      "states": 1, "initial": 0,
      "actions": [{"state": 0, "name": "stay", "to": [{"s": 0, "p": 1.0}], "reward": -1}]
    })");
    auto [loop, loopCost] = mdpFromJson(j);
    CHECK_ERRC(
        buildInstance({loop}, {loopCost}, {insertPreSinks(formulaToDfa(parseCoSafe("F x")))}),
        Errc::NotRewardFinite);
  }

  SECTION("threshold expansion validates") {
    MorapInstance inst = testutil::fig2Instance();
    CHECK_ERRC(expandThresholds(inst, {-1.0}), Errc::DimensionMismatch);
    CHECK_ERRC(expandThresholds(inst, {-1.0, 1.5}), Errc::InvalidModel);
    CHECK_ERRC(expandThresholds(inst, {kNegInf, 0.5}), Errc::InvalidModel);
    Vec t = expandThresholds(inst, {-1.0, 0.5});
    CHECK(t == Vec{-1.0, 0.5});
  }
}

TEST_CASE("feasibility program reproduces the worked verdicts") {
  MorapInstance inst = testutil::fig2Instance();

  SECTION("structure") {
    FeasibilityLp lp = buildFeasibilityLp(inst, {-2.5, 0.7});
    CHECK(lp.numAssignVars == 1);
    // 3 live states -> 3 flow rows, 2 threshold rows, 2 assignment rows.
    CHECK(lp.sys.rows.size() == 7);
    std::string dump = dumpTableau(lp);
    CHECK(dump.find("asg_0_0") != std::string::npos);
    CHECK(dump.find(">=") != std::string::npos);

    FeasibilityLp open = buildFeasibilityLp(inst, {kNegInf, 0.0});
    CHECK(open.sys.rows.size() == 6);
    CHECK(solveLp(open).feasible);
  }

  SECTION("verdicts and scheduler recovery") {
    FeasibilityLp lp = buildFeasibilityLp(inst, {-2.5, 0.7});
    LpVerdict v = solveLp(lp);
    REQUIRE(v.feasible);
    // The recovered scheduler must actually meet both thresholds.
    Scheduler mu = recoverScheduler(lp, v.primal, 0, 0);
    const ProductMdp& p = *inst.products[0][0];
    CHECK(exactEvaluate(p, mu, p.cost) >= -2.5 - 1e-6);
    CHECK(exactEvaluate(p, mu, p.success) >= 0.7 - 1e-6);

    CHECK_FALSE(solveLp(buildFeasibilityLp(inst, {-1.8, 0.9})).feasible);
  }

  SECTION("two identical trivial agents admit the uniform split") {
    auto [agent, cost] = mdpFromJson(Json::parse(R"({
      "states": 2, "initial": 0, "labels": {"1": ["x"]},
      "actions": [
        {"state": 0, "name": "m", "to": [{"s": 1, "p": 1.0}], "reward": -1},
        {"state": 1, "name": "m", "to": [{"s": 1, "p": 1.0}], "reward": -1}
      ]
    })"));
    Dfa task = insertPreSinks(formulaToDfa(parseCoSafe("F x")));
    MorapInstance two = buildInstance({agent, agent}, {cost, cost}, {task, task});
    FeasibilityLp lp = buildFeasibilityLp(two, {-1.0, -1.0, 1.0, 1.0});
    LpVerdict v = solveLp(lp);
    REQUIRE(v.feasible);
    // Force the uniform assignment by fixing every entry to one half.
    FeasibilityLp pinned = lp;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        lpdetail::SparseRow row;
        row.rel = lpdetail::Rel::Eq;
        row.rhs = 0.5;
        row.coef = {{pinned.assignVar[i][j], 1.0}};
        pinned.sys.rows.push_back(row);
      }
    CHECK(solveLp(pinned).feasible);
  }
}

TEST_CASE("phase-1 simplex verdicts on tiny systems") {
  lpdetail::LinearSystem sys;
  sys.numVars = 1;
  sys.rows.push_back({{{0, -1.0}}, lpdetail::Rel::Ge, 1.0});  // x <= -1 with x >= 0
  CHECK_FALSE(lpdetail::phase1(sys).feasible);

  lpdetail::LinearSystem ok;
  ok.numVars = 2;
  ok.rows.push_back({{{0, 1.0}, {1, 1.0}}, lpdetail::Rel::Eq, 0.5});
  ok.rows.push_back({{{0, 1.0}}, lpdetail::Rel::Ge, 0.2});
  lpdetail::Phase1Outcome out = lpdetail::phase1(ok);
  REQUIRE(out.feasible);
  CHECK(out.primal[0] + out.primal[1] == Approx(0.5).margin(1e-9));
  CHECK(out.primal[0] >= 0.2 - 1e-9);
}

TEST_CASE("brute-force hull enumerates scheduler and assignment combinations") {
  SECTION("worked example") {
    AchievableHull hull = bruteForceHull(testutil::fig2Instance());
    REQUIRE(hull.vertices.size() == 2);
    std::sort(hull.vertices.begin(), hull.vertices.end());
    CHECK(hull.vertices[0][0] == Approx(-15.0 / 7.0).margin(1e-9));
    CHECK(hull.vertices[0][1] == Approx(5.0 / 7.0).margin(1e-9));
    CHECK(hull.vertices[1][0] == Approx(-1.0).margin(1e-9));
    CHECK(hull.vertices[1][1] == Approx(0.1).margin(1e-9));
  }

  SECTION("single action, single vertex") {
    AchievableHull hull = bruteForceHull(singleActionInstance());
    REQUIRE(hull.vertices.size() == 1);
    CHECK(hull.vertices[0][0] == Approx(-1.0).margin(1e-9));
    CHECK(hull.vertices[0][1] == Approx(1.0).margin(1e-9));
  }

  SECTION("symmetric two-agent hull is swap-closed") {
    auto [agent, cost] = testutil::fig2Agent();
    MorapInstance two = buildInstance({agent, agent}, {cost, cost},
                                      {testutil::fig2Task(), testutil::fig2Task()});
    AchievableHull hull = bruteForceHull(two);
    std::set<Vec> s(hull.vertices.begin(), hull.vertices.end());
    for (const Vec& v : hull.vertices) {
      Vec swapped = {v[1], v[0], v[3], v[2]};
      CHECK(s.count(swapped) == 1);
    }
  }

  SECTION("guards") {
    auto [agent, cost] = testutil::fig2Agent();
    MorapInstance four = buildInstance({agent, agent, agent, agent}, {cost, cost, cost, cost},
                                       {testutil::fig2Task()});
    CHECK_ERRC(bruteForceHull(four), Errc::SizeGuard);
    CHECK_ERRC(bruteForceHull(chainInstance(14)), Errc::SizeGuard);
  }
}

TEST_CASE("hull membership via projection") {
  AchievableHull hull = bruteForceHull(testutil::fig2Instance());
  Vec a = {-1.0, 0.1};
  Vec b = {-15.0 / 7.0, 5.0 / 7.0};
  CHECK(hullMembership(a, hull, 1e-6));
  CHECK(hullMembership(b, hull, 1e-6));
  Vec mid = {(a[0] + b[0]) / 2, (a[1] + b[1]) / 2};
  CHECK(hullMembership(mid, hull, 1e-6));
  CHECK(hullMembership({a[0] - 0.5, a[1] - 0.05}, hull, 1e-6));
  CHECK_FALSE(hullMembership({a[0] + 1.0, a[1]}, hull, 1e-6));
  NormMatrix stretch(([] {
    Mat m(2, 2, 0.0);
    m(0, 0) = 2.0;
    m(1, 1) = 1.0;
    return m;
  })());
  CHECK(hullMembership(mid, hull, 1e-6, stretch));
  CHECK_FALSE(hullMembership({a[0] + 1.0, a[1]}, hull, 1e-6, stretch));
}

TEST_CASE("LP verdicts agree with hull membership on random tiny instances") {
  testutil::Rng rng(5150);
  int instances = 0;
  int queries = 0;
  while (instances < 40) {
    MorapInstance inst = testutil::randomTinyInstance(rng);
    AchievableHull hull;
    try {
      hull = bruteForceHull(inst);
    } catch (const Error& e) {
      REQUIRE(e.code() == Errc::SizeGuard);
      continue;
    }
    ++instances;
    int got = 0;
    for (int tries = 0; tries < 60 && got < 3; ++tries) {
      Vec t;
      if (!testutil::clearThreshold(rng, hull, 1e-3, t)) continue;
      ++got;
      ++queries;
      bool lpFeasible = solveLp(buildFeasibilityLp(inst, t)).feasible;
      bool member = hullMembership(t, hull, 1e-6);
      REQUIRE(lpFeasible == member);
    }
  }
  REQUIRE(queries >= 80);
}
