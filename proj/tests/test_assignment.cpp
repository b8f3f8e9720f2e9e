#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "morap/assignment.hpp"

using namespace morap;
using Catch::Approx;

namespace {

Mat matrix(int n, std::initializer_list<double> vals) {
  Mat m(n, n);
  std::copy(vals.begin(), vals.end(), m.a.begin());
  return m;
}

// All maximizing permutations by enumeration, each as agentOf (task -> agent).
std::vector<std::vector<int>> bruteMaxima(const Mat& c, double* bestOut) {
  const int n = c.rows;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  std::vector<std::vector<int>> arg;
  do {
    double v = 0.0;
    for (int j = 0; j < n; ++j) v += c(perm[j], j);
    if (v > best + 1e-12) {
      best = v;
      arg.clear();
    }
    if (v > best - 1e-12) arg.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (bestOut) *bestOut = best;
  return arg;
}

Mat randomBistochastic(testutil::Rng& rng, int n, int numPerms) {
  Mat x(n, n, 0.0);
  Vec w(numPerms);
  double sum = 0.0;
  for (auto& v : w) sum += (v = testutil::pickReal(rng, 0.05, 1.0));
  for (auto& v : w) v /= sum;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < numPerms; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int j = 0; j < n; ++j) x(perm[j], j) += w[k];
  }
  return x;
}

}  // namespace

TEST_CASE("assignment on small matrices") {
  Assignment a = maxAssignment(matrix(2, {1, 2, 3, 1}));
  CHECK(a.agentOf == std::vector<int>{1, 0});
  CHECK(a.value == Approx(5.0));

  Mat diag(3, 3, 0.1);
  for (int i = 0; i < 3; ++i) diag(i, i) = 10.0;
  CHECK(maxAssignment(diag).agentOf == std::vector<int>{0, 1, 2});

  // Full ties resolve to the lexicographically smallest permutation.
  CHECK(maxAssignment(Mat(4, 4, 1.0)).agentOf == std::vector<int>{0, 1, 2, 3});

  Mat rect(2, 3, 0.0);
  CHECK_ERRC(maxAssignment(rect), Errc::NonSquare);

  Mat inf2(2, 2, 0.0);
  inf2(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_ERRC(maxAssignment(inf2), Errc::InvalidModel);
}

TEST_CASE("assignment agrees with brute force and breaks ties lexicographically") {
  testutil::Rng rng(4242);
  for (int round = 0; round < 120; ++round) {
    int n = testutil::pick(rng, 1, 6);
    Mat c(n, n);
    // Coarse values produce plenty of ties.
    for (auto& v : c.a) v = testutil::pick(rng, -3, 3);
    double best;
    auto maxima = bruteMaxima(c, &best);
    Assignment got = maxAssignment(c);
    CHECK(got.value == Approx(best).margin(1e-9));
    CHECK(got.agentOf == *std::min_element(maxima.begin(), maxima.end()));
  }
}

TEST_CASE("no bistochastic relaxation beats the best permutation") {
  testutil::Rng rng(77);
  for (int round = 0; round < 60; ++round) {
    int n = testutil::pick(rng, 2, 6);
    Mat c(n, n);
    for (auto& v : c.a) v = testutil::pickReal(rng, -5.0, 5.0);
    Mat x = randomBistochastic(rng, n, testutil::pick(rng, 1, 6));
    double relaxed = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) relaxed += c(i, j) * x(i, j);
    CHECK(relaxed <= maxAssignment(c).value + 1e-9);
  }
}

TEST_CASE("bistochastic validation") {
  CHECK(validateBistochastic(matrix(2, {0.5, 0.5, 0.5, 0.5})));
  CHECK(validateBistochastic(matrix(1, {1.0})));
  CHECK_FALSE(validateBistochastic(matrix(2, {0.4, 0.5, 0.5, 0.5})));
  CHECK_FALSE(validateBistochastic(matrix(2, {-0.1, 1.1, 1.1, -0.1})));
  Mat rect(2, 3, 0.5);
  CHECK_FALSE(validateBistochastic(rect));
  // Entries barely below zero are tolerated.
  CHECK(validateBistochastic(matrix(2, {1.0 + 5e-10, -5e-10, -5e-10, 1.0 + 5e-10})));
}

TEST_CASE("decomposition into permutations") {
  SECTION("identity") {
    auto terms = bvnDecompose(matrix(3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    REQUIRE(terms.size() == 1);
    CHECK(terms[0].weight == Approx(1.0));
    CHECK(terms[0].agentOf == std::vector<int>{0, 1, 2});
  }

  SECTION("even mix") {
    auto terms = bvnDecompose(matrix(2, {0.5, 0.5, 0.5, 0.5}));
    REQUIRE(terms.size() == 2);
    CHECK(terms[0].weight == Approx(0.5));
    CHECK(terms[1].weight == Approx(0.5));
  }

  SECTION("random mixtures reconstruct within tolerance and term bound") {
    testutil::Rng rng(31337);
    for (int round = 0; round < 80; ++round) {
      int n = testutil::pick(rng, 1, 6);
      Mat x = randomBistochastic(rng, n, testutil::pick(rng, 1, 8));
      auto terms = bvnDecompose(x);
      size_t bound = n <= 1 ? 1 : static_cast<size_t>(n) * n - 2 * n + 2;
      CHECK(terms.size() <= bound);
      double total = 0.0;
      Mat back(n, n, 0.0);
      for (const auto& t : terms) {
        CHECK(t.weight > 0.0);
        total += t.weight;
        for (int j = 0; j < n; ++j) back(t.agentOf[j], j) += t.weight;
      }
      CHECK(total == Approx(1.0).margin(1e-9));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          CHECK(back(i, j) == Approx(x(i, j)).margin(n * 1e-9));
    }
  }

  SECTION("rejects garbage") {
    CHECK_ERRC(bvnDecompose(matrix(2, {0.4, 0.5, 0.5, 0.5})), Errc::NotBistochastic);
    Mat rect(2, 3, 0.5);
    CHECK_ERRC(bvnDecompose(rect), Errc::NonSquare);
  }
}
