#pragma once

// Geometry used by the threshold-approximation loop: norms induced by a
// symmetric positive-definite matrix, projection of a threshold point onto
// the downward closure of a finite point set, projection onto a halfspace
// intersection, and weight-vector extraction from a projection residual.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "morap/common.hpp"

namespace morap {

// Symmetric positive-definite matrix defining <v,u> = v' M u.
struct NormMatrix {
  Mat m;

  explicit NormMatrix(Mat mat) : m(std::move(mat)) {
    if (m.rows != m.cols) fail(Errc::NonSquare, "NormMatrix: matrix not square");
    double scale = 1.0 + maxAbs(m.a);
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < i; ++j)
        if (std::fabs(m(i, j) - m(j, i)) > 1e-12 * scale)
          fail(Errc::InvalidModel, "NormMatrix: matrix not symmetric");
    Mat lower;
    if (!choleskyLower(m, lower))
      fail(Errc::NotPositiveDefinite, "NormMatrix: matrix not positive definite");
  }

  static NormMatrix identity(int dim) {
    Mat m(dim, dim, 0.0);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return NormMatrix(std::move(m));
  }

  int dim() const { return m.rows; }
};

inline double normDistance(const NormMatrix& norm, const Vec& v) {
  if (static_cast<int>(v.size()) != norm.dim())
    fail(Errc::DimensionMismatch, "normDistance: vector size");
  double q = 0.0;
  for (int i = 0; i < norm.dim(); ++i) {
    double row = 0.0;
    for (int j = 0; j < norm.dim(); ++j) row += norm.m(i, j) * v[j];
    q += v[i] * row;
  }
  return std::sqrt(std::max(q, 0.0));
}

// Achieved points; their downward closure is the reachable lower bound set.
struct LowerApprox {
  std::vector<Vec> points;
};

// Halfspace w . z <= w . r collected from a supporting-hyperplane query.
struct Halfspace {
  Vec w;
  Vec r;
};

struct UpperApprox {
  std::vector<Halfspace> cuts;
};

struct ProjectionResult {
  Vec x;         // nearest point of the feasible set
  Vec lambda;    // convex weights over the generating points (lower projection only)
  double distance = 0.0;
};

namespace detail {

// Convex QP  min 1/2 z'Hz + c'z  s.t.  Aeq z = beq,  Ain z <= bin,
// solved with a primal active-set method. H must be positive definite.
struct QpSpec {
  Mat h;
  Vec c;
  Mat aeq;
  Vec beq;
  Mat ain;
  Vec bin;
};

struct QpSolution {
  Vec z;
  Vec multIneq;  // one multiplier per inequality row, zero when inactive
};

inline double rowDot(const Mat& m, int row, const Vec& z) {
  double s = 0.0;
  for (int c = 0; c < m.cols; ++c) s += m(row, c) * z[c];
  return s;
}

inline QpSolution solveActiveSetQp(const QpSpec& qp, Vec z) {
  const int n = qp.h.rows;
  const int me = qp.aeq.rows;
  const int mi = qp.ain.rows;
  const double scale = 1.0 + maxAbs(qp.h.a) + maxAbs(qp.c);

  std::vector<int> work;
  std::vector<char> inWork(static_cast<size_t>(mi), 0);
  for (int i = 0; i < mi && static_cast<int>(work.size()) < n - me; ++i) {
    if (rowDot(qp.ain, i, z) - qp.bin[i] > -1e-11 * scale) {
      work.push_back(i);
      inWork[i] = 1;
    }
  }

  Vec multEq(me, 0.0);
  Vec multWork;
  const int cap = 50 + 10 * (n + me + mi);
  bool converged = false;
  for (int iter = 0; iter < cap && !converged; ++iter) {
    Vec g = matVec(qp.h, z);
    for (int i = 0; i < n; ++i) g[i] += qp.c[i];

    const int mw = static_cast<int>(work.size());
    const int dim = n + me + mw;
    Mat kkt(dim, dim, 0.0);
    Vec rhs(dim, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) kkt(i, j) = qp.h(i, j);
      rhs[i] = -g[i];
    }
    for (int e = 0; e < me; ++e)
      for (int j = 0; j < n; ++j) {
        kkt(n + e, j) = qp.aeq(e, j);
        kkt(j, n + e) = qp.aeq(e, j);
      }
    for (int k = 0; k < mw; ++k)
      for (int j = 0; j < n; ++j) {
        kkt(n + me + k, j) = qp.ain(work[k], j);
        kkt(j, n + me + k) = qp.ain(work[k], j);
      }

    Vec sol;
    try {
      sol = solveDense(kkt, rhs);
    } catch (const Error& e) {
      if (e.code() != Errc::SingularSystem) throw;
      // Dependent active rows: fall back to a dual-regularized system.
      for (int k = n; k < dim; ++k) kkt(k, k) = -1e-10 * scale;
      sol = solveDense(kkt, rhs);
    }

    Vec p(sol.begin(), sol.begin() + n);
    for (int e = 0; e < me; ++e) multEq[e] = sol[n + e];
    multWork.assign(sol.begin() + n + me, sol.end());

    // Steps below the ridge-limited solve accuracy are numerical noise;
    // treating them as zero prevents stalling on degenerate active sets.
    if (maxAbs(p) <= 1e-9 * (1.0 + maxAbs(z))) {
      int worst = -1;
      double worstVal = -1e-9 * scale;
      for (int k = 0; k < mw; ++k)
        if (multWork[k] < worstVal) {
          worstVal = multWork[k];
          worst = k;
        }
      if (worst < 0) {
        converged = true;
        break;
      }
      inWork[work[worst]] = 0;
      work.erase(work.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < mi; ++i) {
      if (inWork[i]) continue;
      double s = rowDot(qp.ain, i, p);
      if (s <= 1e-12 * scale) continue;
      double slack = qp.bin[i] - rowDot(qp.ain, i, z);
      if (slack < 0.0) slack = 0.0;
      double a = slack / s;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    for (int i = 0; i < n; ++i) z[i] += alpha * p[i];
    if (blocking >= 0) {
      work.push_back(blocking);
      inWork[blocking] = 1;
    }
  }
  if (!converged) fail(Errc::SolverFailure, "active-set QP: iteration cap reached");

  // Verify the KKT conditions of the solved program.
  const double tol = 1e-8 * scale;
  Vec res = matVec(qp.h, z);
  for (int i = 0; i < n; ++i) res[i] += qp.c[i];
  for (int e = 0; e < me; ++e)
    for (int j = 0; j < n; ++j) res[j] += multEq[e] * qp.aeq(e, j);
  for (size_t k = 0; k < work.size(); ++k)
    for (int j = 0; j < n; ++j) res[j] += multWork[k] * qp.ain(work[k], j);
  if (maxAbs(res) > tol) fail(Errc::SolverFailure, "active-set QP: stationarity residual");
  for (int e = 0; e < me; ++e)
    if (std::fabs(rowDot(qp.aeq, e, z) - qp.beq[e]) > tol)
      fail(Errc::SolverFailure, "active-set QP: equality residual");
  for (int i = 0; i < mi; ++i)
    if (rowDot(qp.ain, i, z) - qp.bin[i] > tol)
      fail(Errc::SolverFailure, "active-set QP: inequality violated");
  for (double mu : multWork)
    if (mu < -tol) fail(Errc::SolverFailure, "active-set QP: negative multiplier");

  QpSolution out;
  out.z = std::move(z);
  out.multIneq.assign(static_cast<size_t>(mi), 0.0);
  for (size_t k = 0; k < work.size(); ++k) out.multIneq[work[k]] = multWork[k];
  return out;
}

}  // namespace detail

// Nearest point of down(points) = { x | x <= R lambda, lambda in the simplex }
// from t in the M-norm. Returns the minimizer and its convex weights.
inline ProjectionResult projectToLowerApprox(const Vec& t, const LowerApprox& phi,
                                             const NormMatrix& norm) {
  const int d = norm.dim();
  if (static_cast<int>(t.size()) != d)
    fail(Errc::DimensionMismatch, "projectToLowerApprox: threshold size");
  if (phi.points.empty()) fail(Errc::InvalidModel, "projectToLowerApprox: empty point set");
  const int kAll = static_cast<int>(phi.points.size());
  for (const Vec& p : phi.points)
    if (static_cast<int>(p.size()) != d)
      fail(Errc::DimensionMismatch, "projectToLowerApprox: point size");

  // Collapse (near-)duplicate generating points before building the QP:
  // repeated columns leave the active-set iteration without curvature on the
  // weight-difference direction and it stalls on solver noise. The returned
  // weight vector is re-expanded with each duplicate's mass on its first
  // occurrence.
  double ptScale = 1.0;
  for (const Vec& p : phi.points) ptScale = std::max(ptScale, 1.0 + maxAbs(p));
  std::vector<int> repOf(static_cast<size_t>(kAll), -1);
  std::vector<int> kept;
  for (int j = 0; j < kAll; ++j) {
    for (size_t u = 0; u < kept.size(); ++u) {
      double diff = 0.0;
      for (int i = 0; i < d; ++i)
        diff = std::max(diff, std::fabs(phi.points[static_cast<size_t>(kept[u])][i] -
                                        phi.points[static_cast<size_t>(j)][i]));
      if (diff <= 1e-9 * ptScale) {
        repOf[static_cast<size_t>(j)] = static_cast<int>(u);
        break;
      }
    }
    if (repOf[static_cast<size_t>(j)] < 0) {
      repOf[static_cast<size_t>(j)] = static_cast<int>(kept.size());
      kept.push_back(j);
    }
  }
  const int k = static_cast<int>(kept.size());
  auto pointAt = [&](int j) -> const Vec& { return phi.points[static_cast<size_t>(kept[j])]; };

  // Variables u = (x, lambda). A small ridge on lambda keeps the Hessian
  // positive definite without disturbing x beyond the KKT tolerance.
  const int n = d + k;
  const double ridge = 1e-9 * (1.0 + maxAbs(norm.m.a));
  detail::QpSpec qp;
  qp.h = Mat(n, n, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) qp.h(i, j) = 2.0 * norm.m(i, j);
  for (int j = 0; j < k; ++j) qp.h(d + j, d + j) = 2.0 * ridge;
  qp.c.assign(static_cast<size_t>(n), 0.0);
  Vec mt = matVec(norm.m, t);
  for (int i = 0; i < d; ++i) qp.c[i] = -2.0 * mt[i];

  qp.aeq = Mat(1, n, 0.0);
  for (int j = 0; j < k; ++j) qp.aeq(0, d + j) = 1.0;
  qp.beq = {1.0};

  qp.ain = Mat(d + k, n, 0.0);
  qp.bin.assign(static_cast<size_t>(d + k), 0.0);
  for (int i = 0; i < d; ++i) {
    qp.ain(i, i) = 1.0;
    for (int j = 0; j < k; ++j) qp.ain(i, d + j) = -pointAt(j)[i];
  }
  for (int j = 0; j < k; ++j) qp.ain(d + j, d + j) = -1.0;

  Vec start(static_cast<size_t>(n), 0.0);
  for (int j = 0; j < k; ++j) start[d + j] = 1.0 / k;
  for (int i = 0; i < d; ++i) {
    double v = 0.0;
    for (int j = 0; j < k; ++j) v += pointAt(j)[i] / k;
    start[i] = std::min(t[i], v);
  }

  detail::QpSolution sol = detail::solveActiveSetQp(qp, std::move(start));
  ProjectionResult out;
  out.x.assign(sol.z.begin(), sol.z.begin() + d);
  out.lambda.assign(static_cast<size_t>(kAll), 0.0);
  for (int j = 0; j < kAll; ++j)
    if (kept[static_cast<size_t>(repOf[static_cast<size_t>(j)])] == j)
      out.lambda[static_cast<size_t>(j)] = sol.z[static_cast<size_t>(d + repOf[static_cast<size_t>(j)])];
  Vec diff(t);
  for (int i = 0; i < d; ++i) diff[i] -= out.x[i];
  out.distance = normDistance(norm, diff);
  return out;
}

// Direction of steepest threshold violation, normalized to the 1-norm.
inline Vec weightVector(const Vec& t, const Vec& tUp, const NormMatrix& norm) {
  const int d = norm.dim();
  if (static_cast<int>(t.size()) != d || static_cast<int>(tUp.size()) != d)
    fail(Errc::DimensionMismatch, "weightVector: vector size");
  Vec diff(t);
  for (int i = 0; i < d; ++i) diff[i] -= tUp[i];
  if (maxAbs(diff) <= 1e-12)
    fail(Errc::DegenerateDirection, "weightVector: threshold equals its projection");
  Vec w = matVec(norm.m, diff);
  double total = 0.0;
  for (double& v : w) {
    if (std::fabs(v) < 1e-12) v = 0.0;
    total += std::fabs(v);
  }
  if (total <= 1e-12)
    fail(Errc::DegenerateDirection, "weightVector: zero direction after clamping");
  for (double& v : w) v /= total;
  return w;
}

// Nearest point of the halfspace intersection { z | w . z <= w . r } from t.
// Returns t unchanged when t already satisfies every halfspace.
inline Vec projectToUpperApprox(const Vec& t, const UpperApprox& upper,
                                const NormMatrix& norm) {
  const int d = norm.dim();
  if (static_cast<int>(t.size()) != d)
    fail(Errc::DimensionMismatch, "projectToUpperApprox: threshold size");
  if (upper.cuts.empty()) fail(Errc::InvalidModel, "projectToUpperApprox: empty halfspace set");
  const int mi = static_cast<int>(upper.cuts.size());
  Vec bound(static_cast<size_t>(mi), 0.0);
  bool feasible = true;
  double minEntry = 0.0;
  bool haveEntry = false;
  for (int i = 0; i < mi; ++i) {
    const Halfspace& h = upper.cuts[i];
    if (static_cast<int>(h.w.size()) != d || static_cast<int>(h.r.size()) != d)
      fail(Errc::DimensionMismatch, "projectToUpperApprox: halfspace size");
    bound[i] = dot(h.w, h.r);
    if (dot(h.w, t) > bound[i]) feasible = false;
    for (double v : h.r) {
      if (!haveEntry || v < minEntry) minEntry = v;
      haveEntry = true;
    }
  }
  if (feasible) return t;

  detail::QpSpec qp;
  qp.h = Mat(d, d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) qp.h(i, j) = 2.0 * norm.m(i, j);
  Vec mt = matVec(norm.m, t);
  qp.c.assign(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < d; ++i) qp.c[i] = -2.0 * mt[i];
  qp.aeq = Mat(0, d, 0.0);
  qp.ain = Mat(mi, d, 0.0);
  for (int i = 0; i < mi; ++i)
    for (int j = 0; j < d; ++j) qp.ain(i, j) = upper.cuts[i].w[j];
  qp.bin = bound;

  // Weight vectors are nonnegative with unit 1-norm, so a point below every
  // generator entry satisfies all cuts.
  Vec start(static_cast<size_t>(d), minEntry - 1.0);
  for (int i = 0; i < mi; ++i)
    if (detail::rowDot(qp.ain, i, start) > qp.bin[i])
      fail(Errc::SolverFailure, "projectToUpperApprox: no feasible starting point");

  return detail::solveActiveSetQp(qp, std::move(start)).z;
}

}  // namespace morap
