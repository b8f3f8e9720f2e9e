#pragma once

// Independent ground truth for small instances: the feasibility linear
// program over expected visit frequencies plus assignment probabilities,
// solved by a self-contained phase-1 simplex, and exhaustive enumeration of
// pure schedulers and permutation assignments producing the achievable hull.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "morap/geometry.hpp"
#include "morap/instance.hpp"
#include "morap/numerics.hpp"

namespace morap {

namespace lpdetail {

enum class Rel { Eq, Ge };

struct SparseRow {
  std::vector<std::pair<int, double>> coef;
  Rel rel = Rel::Eq;
  double rhs = 0.0;
};

struct LinearSystem {
  int numVars = 0;
  std::vector<SparseRow> rows;
  std::vector<std::string> names;  // optional, for dumps
};

struct Phase1Outcome {
  bool feasible = false;
  Vec primal;  // values of the original variables at the phase-1 optimum
  long iterations = 0;
};

// Phase-1 simplex with Bland's rule over rows "coef . x (= | >=) rhs, x >= 0".
// Feasible iff the artificial objective reaches zero within tolerance.
inline Phase1Outcome phase1(const LinearSystem& sys) {
  const int n = sys.numVars;
  const int m = static_cast<int>(sys.rows.size());
  int numGe = 0;
  for (const SparseRow& r : sys.rows)
    if (r.rel == Rel::Ge) ++numGe;
  const int cols = n + numGe + m;  // original + surplus + artificial
  if (static_cast<long long>(m + 1) * (cols + 1) > 40000000LL)
    fail(Errc::SizeGuard, "phase1: tableau too large");

  // Tableau rows 0..m-1, objective row m; column `cols` is the rhs.
  Mat t(m + 1, cols + 1, 0.0);
  int nextSurplus = n;
  for (int i = 0; i < m; ++i) {
    const SparseRow& r = sys.rows[i];
    double sign = r.rhs < 0.0 ? -1.0 : 1.0;
    for (auto [j, v] : r.coef) t(i, j) += sign * v;
    if (r.rel == Rel::Ge) t(i, nextSurplus++) = -sign;
    t(i, n + numGe + i) = 1.0;
    t(i, cols) = sign * r.rhs;
  }
  // Reduced costs for the artificial basis: z_j = c_j - sum of column j.
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    basis[i] = n + numGe + i;
    for (int j = 0; j <= cols; ++j)
      if (j != basis[i]) t(m, j) -= t(i, j);
  }

  Phase1Outcome out;
  const double tol = 1e-9;
  while (true) {
    if (++out.iterations > 1000000) fail(Errc::CycleGuard, "phase1: iteration cap reached");
    int enter = -1;
    for (int j = 0; j < cols; ++j)
      if (t(m, j) < -tol) {
        enter = j;
        break;  // Bland: smallest eligible index
      }
    if (enter < 0) break;
    int leave = -1;
    double bestRatio = 0.0;
    for (int i = 0; i < m; ++i) {
      if (t(i, enter) <= tol) continue;
      double ratio = t(i, cols) / t(i, enter);
      if (leave < 0 || ratio < bestRatio - 1e-12 ||
          (ratio < bestRatio + 1e-12 && basis[i] < basis[leave])) {
        leave = i;
        bestRatio = ratio;
      }
    }
    if (leave < 0) fail(Errc::SolverFailure, "phase1: unbounded artificial objective");
    double piv = t(leave, enter);
    for (int j = 0; j <= cols; ++j) t(leave, j) /= piv;
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      double f = t(i, enter);
      if (f == 0.0) continue;
      for (int j = 0; j <= cols; ++j) t(i, j) -= f * t(leave, j);
    }
    basis[leave] = enter;
  }

  out.feasible = -t(m, cols) <= 1e-9;
  out.primal.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) out.primal[basis[i]] = t(i, cols);
  return out;
}

}  // namespace lpdetail

// Expected-frequency encoding of the assignment problem: one flow variable
// per (agent, task, live product action row), one probability variable per
// (agent, task) pair, flow balance with the assignment probability as the
// source at the product initial state, threshold rows, and bistochasticity.
struct FeasibilityLp {
  lpdetail::LinearSystem sys;
  std::vector<std::vector<std::shared_ptr<const ProductMdp>>> products;
  std::vector<std::vector<std::vector<int>>> flowVar;  // [i][j][action row] -> var or -1
  std::vector<std::vector<int>> assignVar;             // [i][j] -> var
  int numFlowVars = 0;
  int numAssignVars = 0;
};

inline FeasibilityLp buildFeasibilityLp(const MorapInstance& inst, const Vec& t) {
  const int n = inst.n;
  if (static_cast<int>(t.size()) != 2 * n)
    fail(Errc::DimensionMismatch, "threshold vector must have one entry per objective");

  FeasibilityLp lp;
  lp.products = inst.products;
  lp.flowVar.assign(static_cast<size_t>(n), {});
  lp.assignVar.assign(static_cast<size_t>(n), std::vector<int>(static_cast<size_t>(n), -1));
  int var = 0;
  for (int i = 0; i < n; ++i) {
    lp.flowVar[i].resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
      const ProductMdp& p = *inst.products[i][j];
      lp.flowVar[i][j].assign(static_cast<size_t>(p.mdp.numActions()), -1);
      for (int s = 0; s < p.mdp.numStates; ++s) {
        if (p.done[s]) continue;
        for (int r = p.mdp.actionsBegin(s); r < p.mdp.actionsEnd(s); ++r) {
          lp.flowVar[i][j][r] = var;
          lp.sys.names.push_back("x_" + std::to_string(i) + "_" + std::to_string(j) + "_s" +
                                 std::to_string(s) + "_r" + std::to_string(r));
          ++var;
        }
      }
      if (var > 20000) fail(Errc::SizeGuard, "feasibility LP: too many flow variables");
    }
  }
  lp.numFlowVars = var;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      lp.assignVar[i][j] = var++;
      lp.sys.names.push_back("asg_" + std::to_string(i) + "_" + std::to_string(j));
    }
  lp.numAssignVars = n * n;
  lp.sys.numVars = var;

  auto pushRow = [&lp](const std::map<int, double>& acc, lpdetail::Rel rel, double rhs) {
    lpdetail::SparseRow row;
    row.rel = rel;
    row.rhs = rhs;
    for (auto [j, v] : acc)
      if (v != 0.0) row.coef.push_back({j, v});
    lp.sys.rows.push_back(std::move(row));
  };

  // Flow balance per live product state: outflow - inflow = source indicator.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const ProductMdp& p = *inst.products[i][j];
      for (int s = 0; s < p.mdp.numStates; ++s) {
        if (p.done[s]) continue;
        std::map<int, double> acc;
        for (int r = p.mdp.actionsBegin(s); r < p.mdp.actionsEnd(s); ++r)
          acc[lp.flowVar[i][j][r]] += 1.0;
        for (int s2 = 0; s2 < p.mdp.numStates; ++s2) {
          if (p.done[s2]) continue;
          for (int r = p.mdp.actionsBegin(s2); r < p.mdp.actionsEnd(s2); ++r)
            for (int k = p.mdp.trnBegin(r); k < p.mdp.trnEnd(r); ++k)
              if (p.mdp.succ[k] == s) acc[lp.flowVar[i][j][r]] -= p.mdp.prob[k];
        }
        if (s == p.mdp.initial) acc[lp.assignVar[i][j]] -= 1.0;
        pushRow(acc, lpdetail::Rel::Eq, 0.0);
      }
    }

  // Objective rows turned into lower bounds; unbounded thresholds are skipped.
  for (int k = 0; k < 2 * n; ++k) {
    if (t[k] == -std::numeric_limits<double>::infinity()) continue;
    if (!std::isfinite(t[k])) fail(Errc::InvalidModel, "threshold must be finite or -inf");
    std::map<int, double> acc;
    if (k < n) {
      const int i = k;
      for (int j = 0; j < n; ++j) {
        const ProductMdp& p = *inst.products[i][j];
        for (int r = 0; r < p.mdp.numActions(); ++r)
          if (lp.flowVar[i][j][r] >= 0 && p.cost[r] != 0.0)
            acc[lp.flowVar[i][j][r]] += p.cost[r];
      }
    } else {
      const int j = k - n;
      for (int i = 0; i < n; ++i) {
        const ProductMdp& p = *inst.products[i][j];
        for (int r = 0; r < p.mdp.numActions(); ++r)
          if (lp.flowVar[i][j][r] >= 0 && p.success[r] != 0.0)
            acc[lp.flowVar[i][j][r]] += p.success[r];
      }
    }
    pushRow(acc, lpdetail::Rel::Ge, t[k]);
  }

  // Bistochastic assignment probabilities.
  for (int i = 0; i < n; ++i) {
    std::map<int, double> acc;
    for (int j = 0; j < n; ++j) acc[lp.assignVar[i][j]] += 1.0;
    pushRow(acc, lpdetail::Rel::Eq, 1.0);
  }
  for (int j = 0; j < n; ++j) {
    std::map<int, double> acc;
    for (int i = 0; i < n; ++i) acc[lp.assignVar[i][j]] += 1.0;
    pushRow(acc, lpdetail::Rel::Eq, 1.0);
  }
  return lp;
}

struct LpVerdict {
  bool feasible = false;
  Vec primal;
};

inline LpVerdict solveLp(const FeasibilityLp& lp) {
  lpdetail::Phase1Outcome out = lpdetail::phase1(lp.sys);
  return {out.feasible, std::move(out.primal)};
}

// Memoryless scheduler recovery mu(s)(a) = x_{s,a} / sum_a x_{s,a} from an LP
// primal point; states with no flow fall back to their first action.
inline Scheduler recoverScheduler(const FeasibilityLp& lp, const Vec& primal, int i, int j) {
  const ProductMdp& p = *lp.products[i][j];
  Scheduler mu;
  mu.choice.resize(static_cast<size_t>(p.mdp.numStates));
  for (int s = 0; s < p.mdp.numStates; ++s) {
    double total = 0.0;
    if (!p.done[s])
      for (int r = p.mdp.actionsBegin(s); r < p.mdp.actionsEnd(s); ++r)
        total += primal[lp.flowVar[i][j][r]];
    if (p.done[s] || total <= 1e-12) {
      mu.choice[s] = {{p.mdp.actionsBegin(s), 1.0}};
      continue;
    }
    for (int r = p.mdp.actionsBegin(s); r < p.mdp.actionsEnd(s); ++r) {
      double x = primal[lp.flowVar[i][j][r]];
      if (x > 0.0) mu.choice[s].push_back({r, x / total});
    }
  }
  return mu;
}

inline std::string dumpTableau(const FeasibilityLp& lp) {
  std::ostringstream os;
  os << "vars " << lp.sys.numVars << " rows " << lp.sys.rows.size() << "\n";
  for (const auto& row : lp.sys.rows) {
    bool first = true;
    for (auto [j, v] : row.coef) {
      if (!first) os << " + ";
      os << v << "*" << lp.sys.names[j];
      first = false;
    }
    if (first) os << "0";
    os << (row.rel == lpdetail::Rel::Ge ? " >= " : " = ") << row.rhs << "\n";
  }
  return os.str();
}

// Value vectors of every (pure scheduler tuple, permutation assignment)
// combination, reduced per product to the planar convex hull first (mixing
// within one product never leaves that hull, so the overall hull is kept).
struct AchievableHull {
  std::vector<Vec> vertices;  // points in R^{2n}
};

namespace detail {

inline std::vector<std::pair<double, double>> hull2d(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 2) return pts;
  auto cross = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                  const std::pair<double, double>& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> h(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    const auto& p = pts[i];
    while (k >= lower && cross(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  h.resize(k - 1);
  return h;
}

// All (cost, success) value pairs achievable by pure schedulers, reduced to
// the planar hull.
inline std::vector<std::pair<double, double>> pureValueHull(const ProductMdp& p) {
  std::vector<int> live;
  double combos = 1.0;
  for (int s = 0; s < p.mdp.numStates; ++s) {
    if (p.done[s]) continue;
    live.push_back(s);
    combos *= p.mdp.actionsEnd(s) - p.mdp.actionsBegin(s);
    if (combos > 1e4) fail(Errc::SizeGuard, "pure scheduler enumeration too large");
  }
  std::vector<int> rows(static_cast<size_t>(p.mdp.numStates), 0);
  for (int s = 0; s < p.mdp.numStates; ++s) rows[s] = p.mdp.actionsBegin(s);

  std::vector<std::pair<double, double>> pts;
  while (true) {
    Scheduler mu = makeDeterministic(rows);
    pts.push_back({exactEvaluate(p, mu, p.cost), exactEvaluate(p, mu, p.success)});
    size_t d = 0;
    for (; d < live.size(); ++d) {
      int s = live[d];
      if (++rows[s] < p.mdp.actionsEnd(s)) break;
      rows[s] = p.mdp.actionsBegin(s);
    }
    if (d == live.size()) break;
  }
  return hull2d(std::move(pts));
}

}  // namespace detail

inline AchievableHull bruteForceHull(const MorapInstance& inst) {
  const int n = inst.n;
  if (n > 3) fail(Errc::SizeGuard, "brute-force hull limited to three agents");

  std::map<const ProductMdp*, std::vector<std::pair<double, double>>> cache;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const ProductMdp* p = inst.products[i][j].get();
      if (!cache.count(p)) cache[p] = detail::pureValueHull(*p);
    }

  std::vector<int> perm(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) perm[j] = j;
  std::map<Vec, bool> seen;
  AchievableHull hull;
  do {
    // perm[j] = agent assigned to task j
    std::vector<const std::vector<std::pair<double, double>>*> opts(static_cast<size_t>(n));
    std::vector<size_t> idx(static_cast<size_t>(n), 0);
    for (int j = 0; j < n; ++j) opts[j] = &cache[inst.products[perm[j]][j].get()];
    while (true) {
      Vec r(static_cast<size_t>(2 * n), 0.0);
      for (int j = 0; j < n; ++j) {
        r[perm[j]] = (*opts[j])[idx[j]].first;
        r[n + j] = (*opts[j])[idx[j]].second;
      }
      if (!seen.count(r)) {
        seen[r] = true;
        hull.vertices.push_back(std::move(r));
      }
      int d = 0;
      for (; d < n; ++d) {
        if (++idx[d] < opts[d]->size()) break;
        idx[d] = 0;
      }
      if (d == n) break;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return hull;
}

inline bool hullMembership(const Vec& point, const AchievableHull& hull, double tol,
                           const NormMatrix& norm) {
  if (hull.vertices.empty()) fail(Errc::InvalidModel, "empty hull");
  return projectToLowerApprox(point, LowerApprox{hull.vertices}, norm).distance <= tol;
}

inline bool hullMembership(const Vec& point, const AchievableHull& hull, double tol) {
  return hullMembership(point, hull, tol, NormMatrix::identity(static_cast<int>(point.size())));
}

}  // namespace morap
