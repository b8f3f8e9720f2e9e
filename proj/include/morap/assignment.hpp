#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include "morap/common.hpp"

namespace morap {

struct Assignment {
  std::vector<int> agentOf;  // task j -> agent index
  double value = 0.0;
};

namespace detail {

// Maximum bipartite matching (tasks to agents) over an explicit adjacency,
// restricted to allowed rows/columns. Returns true if every allowed task can
// be matched.
inline bool perfectMatchingExists(const std::vector<std::vector<char>>& edge,
                                  const std::vector<char>& taskAllowed,
                                  const std::vector<char>& agentAllowed) {
  const int n = static_cast<int>(edge.size());
  std::vector<int> matchAgent(n, -1);  // agent -> task
  std::vector<char> seen(n);

  std::function<bool(int)> augment = [&](int task) -> bool {
    for (int i = 0; i < n; ++i) {
      if (!agentAllowed[i] || !edge[task][i] || seen[i]) continue;
      seen[i] = 1;
      if (matchAgent[i] == -1 || augment(matchAgent[i])) {
        matchAgent[i] = task;
        return true;
      }
    }
    return false;
  };

  for (int j = 0; j < n; ++j) {
    if (!taskAllowed[j]) continue;
    std::fill(seen.begin(), seen.end(), 0);
    if (!augment(j)) return false;
  }
  return true;
}

}  // namespace detail

// Maximum-value agent-to-task assignment by the shortest-augmenting-path
// Hungarian method in O(n^3). Among all maximizers, the one whose
// (f(0), f(1), ...) vector is lexicographically smallest is returned.
inline Assignment maxAssignment(const Mat& c) {
  if (c.rows != c.cols) fail(Errc::NonSquare, "assignment needs a square value matrix");
  const int n = c.rows;
  if (n == 0) return {};
  double scale = 0.0;
  for (double x : c.a) {
    if (!std::isfinite(x)) fail(Errc::InvalidModel, "assignment value must be finite");
    scale = std::max(scale, std::fabs(x));
  }

  // Minimize a = -c with row/column potentials (1-based frame).
  const double inf = std::numeric_limits<double>::infinity();
  auto a = [&](int i, int j) { return -c(i - 1, j - 1); };
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  // Optimal assignments all live inside the graph of tight edges
  // (complementary slackness); pick the lexicographically smallest perfect
  // matching there, assigning tasks in order to the smallest viable agent.
  const double tau = 1e-9 * (1.0 + scale);
  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  for (int j = 1; j <= n; ++j)
    for (int i = 1; i <= n; ++i)
      if (std::fabs(a(i, j) - u[i] - v[j]) <= tau) tight[j - 1][i - 1] = 1;

  Assignment out;
  out.agentOf.assign(n, -1);
  std::vector<char> taskLeft(n, 1), agentLeft(n, 1);
  for (int j = 0; j < n; ++j) {
    taskLeft[j] = 0;
    bool placed = false;
    for (int i = 0; i < n && !placed; ++i) {
      if (!agentLeft[i] || !tight[j][i]) continue;
      agentLeft[i] = 0;
      if (detail::perfectMatchingExists(tight, taskLeft, agentLeft)) {
        out.agentOf[j] = i;
        placed = true;
      } else {
        agentLeft[i] = 1;
      }
    }
    if (!placed) fail(Errc::SolverFailure, "tight graph lost its perfect matching");
  }
  for (int j = 0; j < n; ++j) out.value += c(out.agentOf[j], j);
  return out;
}

inline bool validateBistochastic(const Mat& x, double entryTol = 1e-9, double sumTol = 1e-6) {
  if (x.rows != x.cols) return false;
  const int n = x.rows;
  for (double e : x.a)
    if (e < -entryTol || !std::isfinite(e)) return false;
  for (int i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (int j = 0; j < n; ++j) {
      row += std::max(0.0, x(i, j));
      col += std::max(0.0, x(j, i));
    }
    if (std::fabs(row - 1.0) > sumTol || std::fabs(col - 1.0) > sumTol) return false;
  }
  return true;
}

struct BvnTerm {
  double weight = 0.0;
  std::vector<int> agentOf;  // permutation, task j -> agent
};

namespace detail {

// One perfect matching on the positivity graph of w (entries > tol), or empty.
inline std::vector<int> positiveMatching(const Mat& w, double tol) {
  const int n = w.rows;
  std::vector<int> matchAgent(n, -1);
  std::vector<char> seen(n);
  std::function<bool(int)> augment = [&](int task) -> bool {
    for (int i = 0; i < n; ++i) {
      if (w(i, task) <= tol || seen[i]) continue;
      seen[i] = 1;
      if (matchAgent[i] == -1 || augment(matchAgent[i])) {
        matchAgent[i] = task;
        return true;
      }
    }
    return false;
  };
  for (int j = 0; j < n; ++j) {
    std::fill(seen.begin(), seen.end(), 0);
    if (!augment(j)) return {};
  }
  std::vector<int> agentOf(n, -1);
  for (int i = 0; i < n; ++i)
    if (matchAgent[i] != -1) agentOf[matchAgent[i]] = i;
  return agentOf;
}

// Shrinks a convex combination of permutation matrices to at most
// n^2 - 2n + 2 terms by cancelling affine dependencies.
inline void caratheodoryReduce(std::vector<BvnTerm>& terms, int n) {
  const size_t bound = n <= 1 ? 1 : static_cast<size_t>(n) * n - 2 * n + 2;
  while (terms.size() > bound) {
    const int k = static_cast<int>(terms.size());
    const int rows = n * n + 1;
    // Columns are vec(P_t) stacked with 1; any nullspace vector is an affine
    // dependency among the permutation matrices.
    Mat m(rows, k, 0.0);
    for (int t = 0; t < k; ++t) {
      for (int j = 0; j < n; ++j) m(terms[t].agentOf[j] * n + j, t) = 1.0;
      m(rows - 1, t) = 1.0;
    }
    // Row-reduce; with k > (n-1)^2 + 1 columns a free column must exist.
    std::vector<int> pivotCol(rows, -1);
    int rank = 0;
    for (int col = 0; col < k && rank < rows; ++col) {
      int best = -1;
      double bestAbs = 1e-9;
      for (int r = rank; r < rows; ++r)
        if (std::fabs(m(r, col)) > bestAbs) {
          bestAbs = std::fabs(m(r, col));
          best = r;
        }
      if (best == -1) continue;
      for (int cc = 0; cc < k; ++cc) std::swap(m(rank, cc), m(best, cc));
      double piv = m(rank, col);
      for (int cc = 0; cc < k; ++cc) m(rank, cc) /= piv;
      for (int r = 0; r < rows; ++r) {
        if (r == rank) continue;
        double f = m(r, col);
        if (f == 0.0) continue;
        for (int cc = 0; cc < k; ++cc) m(r, cc) -= f * m(rank, cc);
      }
      pivotCol[rank] = col;
      ++rank;
    }
    int freeCol = -1;
    {
      std::vector<char> isPivot(k, 0);
      for (int r = 0; r < rank; ++r) isPivot[pivotCol[r]] = 1;
      for (int col = 0; col < k && freeCol == -1; ++col)
        if (!isPivot[col]) freeCol = col;
    }
    if (freeCol == -1) fail(Errc::SolverFailure, "expected an affine dependency");
    Vec alpha(k, 0.0);
    alpha[freeCol] = 1.0;
    for (int r = 0; r < rank; ++r) alpha[pivotCol[r]] = -m(r, freeCol);

    bool hasPositive = false;
    for (double a : alpha) hasPositive |= a > 0.0;
    if (!hasPositive)
      for (double& a : alpha) a = -a;
    double theta = std::numeric_limits<double>::infinity();
    for (int t = 0; t < k; ++t)
      if (alpha[t] > 1e-12) theta = std::min(theta, terms[t].weight / alpha[t]);
    std::vector<BvnTerm> kept;
    for (int t = 0; t < k; ++t) {
      double wNew = terms[t].weight - theta * alpha[t];
      if (wNew > 1e-12) {
        terms[t].weight = wNew;
        kept.push_back(std::move(terms[t]));
      }
    }
    if (kept.size() >= terms.size())
      fail(Errc::SolverFailure, "dependency cancellation made no progress");
    terms.swap(kept);
  }
}

}  // namespace detail

// Birkhoff-von-Neumann: writes a bistochastic matrix as a convex combination
// of at most n^2 - 2n + 2 permutation matrices. Reconstruction error is at
// most n * tol entrywise.
inline std::vector<BvnTerm> bvnDecompose(const Mat& x, double tol = 1e-9) {
  if (x.rows != x.cols) fail(Errc::NonSquare, "decomposition needs a square matrix");
  const int n = x.rows;
  if (n == 0) return {};
  if (!validateBistochastic(x, 1e-9, 1e-6))
    fail(Errc::NotBistochastic, "matrix is not bistochastic within tolerance");

  Mat w = x;
  for (double& e : w.a) e = std::max(e, 0.0);

  std::vector<BvnTerm> terms;
  for (;;) {
    double maxEntry = 0.0;
    for (double e : w.a) maxEntry = std::max(maxEntry, e);
    if (maxEntry <= tol) break;
    std::vector<int> perm = detail::positiveMatching(w, tol);
    if (perm.empty())
      fail(Errc::NoPerfectMatching, "positivity graph of the residual has no perfect matching");
    double weight = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) weight = std::min(weight, w(perm[j], j));
    for (int j = 0; j < n; ++j) w(perm[j], j) -= weight;
    terms.push_back({weight, std::move(perm)});
  }
  if (terms.empty()) fail(Errc::NotBistochastic, "matrix vanished without yielding a permutation");

  double total = 0.0;
  for (const auto& t : terms) total += t.weight;
  terms.back().weight += 1.0 - total;  // absorb the peeled-off dust
  if (terms.back().weight <= 0.0) terms.pop_back();

  detail::caratheodoryReduce(terms, n);
  return terms;
}

}  // namespace morap
