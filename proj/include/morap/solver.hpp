#pragma once

// Top-level solver. Iteratively sandwiches the achievable set between a
// lower approximation (supporting points) and an upper approximation
// (supporting halfspaces), reports the threshold verdict, and turns the
// final certificate into a random assignment plus per-pair schedulers.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "morap/assignment.hpp"
#include "morap/common.hpp"
#include "morap/engine.hpp"
#include "morap/geometry.hpp"
#include "morap/instance.hpp"
#include "morap/numerics.hpp"

#include "json.hpp"

namespace morap {

// One supporting-hyperplane query: the achieved point r, the assignment
// that realises it, and per task j the scheduler used on product (f(j), j).
struct SupportingPoint {
  Vec r;
  Assignment assignment;
  std::vector<Scheduler> schedulers;
};

struct IterationRecord {
  Vec w;
  Vec r;
  Assignment assignment;
  std::vector<Scheduler> schedulers;
  Vec tUp;    // lower projection before this query; empty in the first pass
  Vec tDown;  // upper projection after this query
};

struct ParetoResult {
  bool feasible = false;
  bool converged = false;
  Vec thresholds;  // expanded to 2n entries, costs first
  Vec tUp;         // empty until the first lower projection
  Vec tDown;
  LowerApprox phi;
  UpperApprox lambda;
  std::vector<IterationRecord> iterations;
  Vec lambdaStar;  // convex weights over phi from the final lower projection
  double eps = 0.0;
};

struct SynthesisTerm {
  double p = 0.0;
  Assignment assignment;
  std::vector<Scheduler> schedulers;
};

struct SynthesisResult {
  std::vector<SynthesisTerm> terms;
  Mat marginal;  // marginal(i, j) = probability agent i serves task j
};

namespace solverdetail {

inline void checkWeightVector(const MorapInstance& inst, const Vec& w) {
  if (static_cast<int>(w.size()) != 2 * inst.n)
    fail(Errc::DimensionMismatch, "weight vector must have one entry per objective");
  double norm1 = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) fail(Errc::InvalidConfig, "weight vector entries must be finite");
    norm1 += std::fabs(v);
  }
  if (std::fabs(norm1 - 1.0) > 1e-6)
    fail(Errc::InvalidConfig, "weight vector must have unit 1-norm");
}

inline uint64_t doubleBits(double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  return bits;
}

[[noreturn]] inline void rethrowJobFailure(const JobResult& r, const char* what) {
  fail(r.errc.value_or(Errc::SolverFailure), std::string(what) + ": " + r.error);
}

}  // namespace solverdetail

// Supporting hyperplane of the achievable set in direction w. For every
// pair (i, j) an optimal scheduler for the w-weighted reward is computed
// (one job per distinct (model, weights) combination), the assignment
// maximising the summed weighted values is selected, and the chosen pairs
// are re-evaluated separately on the cost and success objectives.
inline SupportingPoint supportingPoint(const MorapInstance& inst, const Vec& w,
                                       const PoolConfig& pool) {
  solverdetail::checkWeightVector(inst, w);
  const int n = inst.n;

  // Jobs keyed by (model, cost weight, success weight); identical pairs
  // share one policy-iteration run.
  using OptKey = std::tuple<uintptr_t, uint64_t, uint64_t>;
  std::map<OptKey, long> jobOf;
  std::vector<Job> optimizeJobs;
  std::vector<std::vector<OptKey>> keyOf(static_cast<size_t>(n),
                                         std::vector<OptKey>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto& m = inst.products[static_cast<size_t>(i)][static_cast<size_t>(j)];
      double wc = w[static_cast<size_t>(i)];
      double ws = w[static_cast<size_t>(n + j)];
      OptKey key{reinterpret_cast<uintptr_t>(m.get()), solverdetail::doubleBits(wc),
                 solverdetail::doubleBits(ws)};
      keyOf[static_cast<size_t>(i)][static_cast<size_t>(j)] = key;
      if (jobOf.count(key)) continue;
      Job job;
      job.id = static_cast<long>(optimizeJobs.size());
      job.kind = JobKind::Optimize;
      job.model = m;
      job.reward = weightedReward({&m->cost, &m->success}, {wc, ws});
      jobOf.emplace(key, job.id);
      optimizeJobs.push_back(std::move(job));
    }
  }
  std::map<long, JobResult> optimized = runBatch(std::move(optimizeJobs), pool);

  Mat c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const JobResult& r = optimized.at(jobOf.at(keyOf[static_cast<size_t>(i)][static_cast<size_t>(j)]));
      if (!r.ok) solverdetail::rethrowJobFailure(r, "weighted optimization failed");
      c(i, j) = r.value;
    }
  }

  SupportingPoint out;
  out.assignment = maxAssignment(c);
  out.schedulers.resize(static_cast<size_t>(n));

  std::vector<Job> evaluateJobs;
  for (int j = 0; j < n; ++j) {
    int i = out.assignment.agentOf[static_cast<size_t>(j)];
    const auto& m = inst.products[static_cast<size_t>(i)][static_cast<size_t>(j)];
    const JobResult& opt =
        optimized.at(jobOf.at(keyOf[static_cast<size_t>(i)][static_cast<size_t>(j)]));
    out.schedulers[static_cast<size_t>(j)] = opt.policy;

    Job costJob;
    costJob.id = 2 * j;
    costJob.kind = JobKind::Evaluate;
    costJob.model = m;
    costJob.scheduler = opt.policy;
    costJob.reward = m->cost;
    evaluateJobs.push_back(std::move(costJob));

    Job successJob;
    successJob.id = 2 * j + 1;
    successJob.kind = JobKind::Evaluate;
    successJob.model = m;
    successJob.scheduler = opt.policy;
    successJob.reward = m->success;
    evaluateJobs.push_back(std::move(successJob));
  }
  std::map<long, JobResult> evaluated = runBatch(std::move(evaluateJobs), pool);

  out.r.assign(static_cast<size_t>(2 * n), 0.0);
  for (int j = 0; j < n; ++j) {
    const JobResult& cost = evaluated.at(2 * j);
    const JobResult& success = evaluated.at(2 * j + 1);
    if (!cost.ok) solverdetail::rethrowJobFailure(cost, "cost evaluation failed");
    if (!success.ok) solverdetail::rethrowJobFailure(success, "success evaluation failed");
    out.r[static_cast<size_t>(out.assignment.agentOf[static_cast<size_t>(j)])] = cost.value;
    out.r[static_cast<size_t>(n + j)] = success.value;
  }
  return out;
}

namespace solverdetail {

// Shared sandwich loop: works off any supporting-point source (decentralised
// per-pair optimization or the centralised single-model route). In
// verify-only mode the first halfspace violation stops the search with a
// negative verdict.
inline ParetoResult runParetoCore(Vec expandedThresholds, const NormMatrix& norm, double eps,
                                  int iterationCap, bool verifyMode, bool* verdict,
                                  const std::function<SupportingPoint(const Vec&)>& query) {
  if (!(eps >= 0.0)) fail(Errc::InvalidConfig, "eps must be nonnegative");
  if (iterationCap < 1) fail(Errc::InvalidConfig, "iteration cap must be positive");
  if (norm.dim() != static_cast<int>(expandedThresholds.size()))
    fail(Errc::DimensionMismatch, "norm matrix must match the objective count");

  ParetoResult res;
  res.eps = eps;
  res.thresholds = std::move(expandedThresholds);
  const Vec& t = res.thresholds;
  res.tDown = t;

  Vec w(t.size(), 0.0);
  w[0] = 1.0;

  for (int iter = 0; iter < iterationCap; ++iter) {
    if (!res.phi.points.empty()) {
      ProjectionResult proj = projectToLowerApprox(t, res.phi, norm);
      res.tUp = proj.x;
      res.lambdaStar = proj.lambda;
      Vec gap(res.tDown);
      for (size_t k = 0; k < gap.size(); ++k) gap[k] -= res.tUp[k];
      if (normDistance(norm, gap) <= eps) {
        res.converged = true;
        break;
      }
      try {
        w = weightVector(t, res.tUp, norm);
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateDirection) throw;
        // t coincides with its projection, so the gap is numerically zero.
        res.converged = true;
        break;
      }
    }

    SupportingPoint sp = query(w);
    res.phi.points.push_back(sp.r);
    res.lambda.cuts.push_back({w, sp.r});

    IterationRecord rec;
    rec.w = w;
    rec.r = sp.r;
    rec.assignment = sp.assignment;
    rec.schedulers = std::move(sp.schedulers);
    rec.tUp = res.tUp;

    if (dot(w, sp.r) < dot(w, res.tDown)) {
      if (verifyMode) {
        *verdict = false;
        rec.tDown = res.tDown;
        res.iterations.push_back(std::move(rec));
        return res;
      }
      res.tDown = projectToUpperApprox(t, res.lambda, norm);
    }
    rec.tDown = res.tDown;
    res.iterations.push_back(std::move(rec));
  }

  if (!res.converged) {
    if (verifyMode)
      fail(Errc::NonConvergence, "verification hit the iteration cap without a verdict");
    res.feasible = false;
    return res;
  }

  Vec slack(res.tDown);
  for (size_t k = 0; k < slack.size(); ++k) slack[k] -= t[k];
  res.feasible = normDistance(norm, slack) <= eps;
  if (verifyMode) *verdict = res.feasible;
  return res;
}

inline ParetoResult runPareto(const MorapInstance& inst, const Vec& userThresholds,
                              const NormMatrix& norm, double eps, const PoolConfig& pool,
                              int iterationCap, bool verifyMode, bool* verdict) {
  return runParetoCore(
      expandThresholds(inst, userThresholds), norm, eps, iterationCap, verifyMode, verdict,
      [&](const Vec& w) { return supportingPoint(inst, w, pool); });
}

}  // namespace solverdetail

// Point-oriented Pareto computation. Alternates lower projections onto the
// current supporting points with new supporting-hyperplane queries until
// the two approximations meet within eps under the given norm.
inline ParetoResult paretoPoint(const MorapInstance& inst, const Vec& thresholds,
                                const NormMatrix& norm, double eps, const PoolConfig& pool,
                                int iterationCap = 500) {
  return solverdetail::runPareto(inst, thresholds, norm, eps, pool, iterationCap, false, nullptr);
}

// Feasibility check only: identical search, but the first proof that the
// thresholds lie outside the achievable set returns immediately.
inline bool verifyOnly(const MorapInstance& inst, const Vec& thresholds, const NormMatrix& norm,
                       double eps, const PoolConfig& pool, int iterationCap = 500) {
  bool verdict = false;
  solverdetail::runPareto(inst, thresholds, norm, eps, pool, iterationCap, true, &verdict);
  return verdict;
}

// Turns a converged Pareto run into a random assignment: convex weights v
// over the recorded supporting points with sum_k v_k r_k >= tUp, realised
// by mixing the recorded assignments and schedulers.
inline SynthesisResult synthesize(const ParetoResult& result) {
  if (!result.converged) fail(Errc::NoCertificate, "synthesis requires a converged result");
  if (result.iterations.empty() || result.tUp.empty() || result.lambdaStar.empty())
    fail(Errc::NoCertificate, "synthesis requires at least one lower projection");

  const size_t ell = result.iterations.size();
  if (result.lambdaStar.size() != ell || result.phi.points.size() != ell)
    fail(Errc::NoCertificate, "certificate does not cover all iterations");

  auto normalized = [&](const Vec& raw) {
    Vec v(raw);
    double total = 0.0;
    for (double& x : v) {
      if (x < 0.0) x = 0.0;
      total += x;
    }
    if (total <= 0.0) fail(Errc::NoCertificate, "degenerate convex weights");
    for (double& x : v) x /= total;
    return v;
  };
  auto meets = [&](const Vec& v, double slack) {
    Vec combo(result.tUp.size(), 0.0);
    for (size_t k = 0; k < ell; ++k)
      for (size_t d = 0; d < combo.size(); ++d) combo[d] += v[k] * result.phi.points[k][d];
    for (size_t d = 0; d < combo.size(); ++d)
      if (combo[d] < result.tUp[d] - slack) return false;
    return true;
  };

  Vec v = normalized(result.lambdaStar);
  if (!meets(v, 1e-9)) {
    // Re-project the certified point itself; its convex weights dominate
    // tUp by construction, up to solver tolerance.
    NormMatrix identity = NormMatrix::identity(static_cast<int>(result.tUp.size()));
    ProjectionResult retry = projectToLowerApprox(result.tUp, result.phi, identity);
    v = normalized(retry.lambda);
    if (!meets(v, 1e-6)) fail(Errc::NoCertificate, "no convex combination dominates tUp");
  }

  const int n = static_cast<int>(result.iterations.front().assignment.agentOf.size());
  SynthesisResult out;
  out.marginal = Mat(n, n);
  for (size_t k = 0; k < ell; ++k) {
    if (v[k] <= 0.0) continue;
    SynthesisTerm term;
    term.p = v[k];
    term.assignment = result.iterations[k].assignment;
    term.schedulers = result.iterations[k].schedulers;
    for (int j = 0; j < n; ++j)
      out.marginal(term.assignment.agentOf[static_cast<size_t>(j)], j) += v[k];
    out.terms.push_back(std::move(term));
  }
  if (!validateBistochastic(out.marginal, 1e-9, 1e-6))
    fail(Errc::NoCertificate, "mixture marginals are not bistochastic");
  return out;
}

// Machine-readable summary: verdict, sandwich points, per-iteration
// directions/points/assignments and the synthesized mixture.
inline Json resultToJson(const ParetoResult& result, const SynthesisResult* synthesis = nullptr) {
  Json j;
  j["feasible"] = result.feasible;
  j["tUp"] = result.tUp;
  j["tDown"] = result.tDown;
  j["iterations"] = Json::array();
  for (const IterationRecord& rec : result.iterations) {
    Json it;
    it["w"] = rec.w;
    it["r"] = rec.r;
    it["assignment"] = rec.assignment.agentOf;
    j["iterations"].push_back(std::move(it));
  }
  j["synthesis"] = Json::array();
  if (synthesis) {
    for (const SynthesisTerm& term : synthesis->terms) {
      Json entry;
      entry["p"] = term.p;
      entry["assignment"] = term.assignment.agentOf;
      j["synthesis"].push_back(std::move(entry));
    }
  }
  return j;
}

}  // namespace morap
