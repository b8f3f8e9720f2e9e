#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace morap {

enum class Errc {
  Syntax,
  NotCoSafe,
  ClosureBlowup,
  InvalidDfa,
  InvalidModel,
  NotRewardFinite,
  NonConvergence,
  SingularSystem,
  DimensionMismatch,
  NonSquare,
  NotBistochastic,
  NoPerfectMatching,
  NotPositiveDefinite,
  SolverFailure,
  DegenerateDirection,
  SizeGuard,
  CycleGuard,
  InvalidConfig,
  GenerationFailure,
  NoCertificate,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

using Vec = std::vector<double>;

// Dense row-major matrix, just enough surface for the solvers in this library.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

inline double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) fail(Errc::DimensionMismatch, "dot: size mismatch");
  double s = 0.0;
  for (size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

inline Vec matVec(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols) fail(Errc::DimensionMismatch, "matVec: size mismatch");
  Vec y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += m(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

inline double maxAbs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Throws SingularSystem when the best available pivot falls below pivotTol.
inline Vec solveDense(Mat A, Vec b, double pivotTol = 1e-12) {
  if (A.rows != A.cols) fail(Errc::NonSquare, "solveDense: matrix not square");
  if (static_cast<int>(b.size()) != A.rows) fail(Errc::DimensionMismatch, "solveDense: rhs size");
  const int n = A.rows;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int best = col;
    double bestAbs = std::fabs(A(col, col));
    for (int r = col + 1; r < n; ++r) {
      double v = std::fabs(A(r, col));
      if (v > bestAbs) {
        bestAbs = v;
        best = r;
      }
    }
    if (bestAbs < pivotTol) fail(Errc::SingularSystem, "solveDense: pivot below tolerance");
    if (best != col) {
      for (int c = 0; c < n; ++c) std::swap(A(col, c), A(best, c));
      std::swap(b[col], b[best]);
    }
    const double piv = A(col, col);
    for (int r = col + 1; r < n; ++r) {
      double f = A(r, col) / piv;
      if (f == 0.0) continue;
      A(r, col) = 0.0;
      for (int c = col + 1; c < n; ++c) A(r, c) -= f * A(col, c);
      b[r] -= f * b[col];
    }
  }
  Vec x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= A(r, c) * x[c];
    x[r] = s / A(r, r);
  }
  return x;
}

// Lower-triangular Cholesky factor of a symmetric matrix; false if not positive definite.
inline bool choleskyLower(const Mat& m, Mat& lower) {
  if (m.rows != m.cols) return false;
  const int n = m.rows;
  lower = Mat(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (s <= 0.0) return false;
        lower(i, i) = std::sqrt(s);
      } else {
        lower(i, j) = s / lower(j, j);
      }
    }
  }
  return true;
}

inline uint64_t hashCombine(uint64_t h, uint64_t v) {
  // FNV-1a over the 8 bytes of v.
  for (int k = 0; k < 8; ++k) {
    h ^= (v >> (8 * k)) & 0xffu;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t hashDouble(uint64_t h, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  return hashCombine(h, bits);
}

inline uint64_t hashString(uint64_t h, const std::string& s) {
  h = hashCombine(h, s.size());
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr uint64_t kHashSeed = 1469598103934665603ull;

}  // namespace morap
