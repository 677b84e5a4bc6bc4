#include <cmath>
#include <random>

#include "doctest.h"
#include "mtsp/error.hpp"
#include "mtsp/instance.hpp"
#include "mtsp/softassign.hpp"
#include "test_util.hpp"

using namespace mtsp;

namespace {

// Independent residual oracle: explicit constraint sums, written per equation.
double oracle_max_residual(const Tensor3& z) {
  const int m = z.m();
  const int n = z.n();
  double worst = 0.0;
  for (int k = 0; k < m; ++k) {
    double a = -1.0;
    double b = -1.0;
    for (int c = 1; c < n; ++c) {
      a += z(k, 0, c);
      b += z(k, c, 0);
    }
    worst = std::max({worst, std::abs(a), std::abs(b)});
  }
  for (int c = 1; c < n; ++c) {
    double out = -1.0;
    double in = -1.0;
    for (int k = 0; k < m; ++k) {
      for (int o = 0; o < n; ++o) {
        out += z(k, c, o);
        in += z(k, o, c);
      }
    }
    worst = std::max({worst, std::abs(out), std::abs(in)});
  }
  return worst;
}

double inner(const Tensor3& a, const Tensor3& b) {
  double s = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) s += a.storage()[e] * b.storage()[e];
  return s;
}

}  // namespace

TEST_CASE("softassign: single feasible arc each way") {
  const SoftTensor z = softassign(Tensor3(1, 2, 0.0), 100);
  CHECK(z.z(0, 0, 1) == doctest::Approx(1.0));
  CHECK(z.z(0, 1, 0) == doctest::Approx(1.0));
  CHECK(z.z(0, 0, 0) == 0.0);
  CHECK(z.z(0, 1, 1) == 0.0);
  CHECK(kDefaultSoftassignIterations == 100);
}

TEST_CASE("softassign: converges on a random 2x4x4 tensor") {
  std::mt19937_64 rng(1);
  const SoftTensor z = softassign(testing::random_tensor(2, 4, rng), 100);
  CHECK(oracle_max_residual(z.z) < 1e-6);
  CHECK(std::abs(constraint_residuals(z.z).max() - oracle_max_residual(z.z)) < 1e-15);
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 4; ++i) CHECK(z.z(k, i, i) == 0.0);
  }
}

TEST_CASE("constraint_residuals") {
  const Instance inst = generate_instance(7, 3, 2);
  std::mt19937_64 rng(2);
  const ConstraintResiduals exact = constraint_residuals(to_tensor(testing::random_solution(7, 3, rng), 7));
  CHECK(exact.max() == 0.0);

  // Uniform feasible tensor: depot arcs 1/(n-1) per salesman, the rest of each
  // city's unit flow spread evenly over the m(n-2) city-to-city arcs.
  for (int n = 3; n <= 9; ++n) {
    for (int m = 1; m < n; ++m) {
      Tensor3 u(m, n);
      const double depot = 1.0 / (n - 1);
      const double inner_arc = (1.0 - m * depot) / (m * (n - 2));
      for (int k = 0; k < m; ++k) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            u(k, i, j) = (i == 0 || j == 0) ? depot : inner_arc;
          }
        }
      }
      CHECK(constraint_residuals(u).max() < 1e-12);
    }
  }
  (void)inst;
}

TEST_CASE("softassign: per-iteration exactness and bounds") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const int m = 1 + static_cast<int>(rng() % std::min(5, n - 1));
    const SoftassignTape tape(testing::random_tensor(m, n, rng), 12);
    for (int r = 1; r <= 12; ++r) {
      const ConstraintResiduals res = constraint_residuals(tape.iterate(r));
      if (r % 2 == 1) {
        CHECK(res.from_depot < 1e-12);
        CHECK(res.leave < 1e-12);
      } else {
        CHECK(res.to_depot < 1e-12);
        CHECK(res.enter < 1e-12);
      }
      for (double v : tape.iterate(r).flat()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("softassign: shift invariance") {
  std::mt19937_64 rng(4);
  const Tensor3 o = testing::random_tensor(3, 7, rng);
  Tensor3 shifted = o;
  for (double& v : shifted.storage()) v += 3.75;
  const Tensor3 a = softassign(o, 50).z;
  const Tensor3 b = softassign(shifted, 50).z;
  for (std::size_t e = 0; e < a.size(); ++e) CHECK(std::abs(a.storage()[e] - b.storage()[e]) < 1e-14);

  // Dyadic scores and shift: every subtraction is exact, so outputs are bit-identical.
  Tensor3 dyadic(2, 5);
  for (double& v : dyadic.storage()) v = static_cast<double>(static_cast<int>(rng() % 64) - 32) / 16.0;
  Tensor3 dyadic_shift = dyadic;
  for (double& v : dyadic_shift.storage()) v += 5.0;
  CHECK(softassign(dyadic, 30).z == softassign(dyadic_shift, 30).z);
}

TEST_CASE("softassign: errors") {
  Tensor3 bad(1, 3);
  bad(0, 1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softassign(bad, 10), NumericError);
  CHECK_THROWS_AS(softassign(Tensor3(1, 3), 0), DataError);
}

TEST_CASE("softassign_vjp: T = 1 is a masked softmax per slice") {
  std::mt19937_64 rng(5);
  const Tensor3 o = testing::random_tensor(1, 3, rng);
  const Tensor3 g = testing::random_tensor(1, 3, rng);
  const Tensor3 grad = softassign_vjp(o, 1, g);
  const Tensor3 z = softassign(o, 1).z;
  // Rows are the normalized slices at an odd iteration; the softmax Jacobian
  // is diag(p) - p p^T over the off-diagonal entries of each row.
  for (int i = 0; i < 3; ++i) {
    double dot = 0.0;
    for (int j = 0; j < 3; ++j) dot += g(0, i, j) * z(0, i, j);
    for (int j = 0; j < 3; ++j) {
      const double expected = i == j ? 0.0 : z(0, i, j) * (g(0, i, j) - dot);
      CHECK(std::abs(grad(0, i, j) - expected) < 1e-14);
    }
  }
  // With one feasible arc per slice the output is constant.
  const Tensor3 tiny = softassign_vjp(testing::random_tensor(1, 2, rng), 1, testing::random_tensor(1, 2, rng));
  for (double v : tiny.flat()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("softassign_vjp matches central differences") {
  std::mt19937_64 rng(6);
  const Tensor3 o = testing::random_tensor(2, 4, rng);
  const Tensor3 g = testing::random_tensor(2, 4, rng);
  const Tensor3 grad = softassign_vjp(o, 5, g);
  const double h = 1e-5;
  for (std::size_t e = 0; e < o.size(); ++e) {
    Tensor3 plus = o;
    Tensor3 minus = o;
    plus.storage()[e] += h;
    minus.storage()[e] -= h;
    const double fd = (inner(g, softassign(plus, 5).z) - inner(g, softassign(minus, 5).z)) / (2 * h);
    const double an = grad.storage()[e];
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("softassign_vjp: slice-shift directions carry no gradient") {
  std::mt19937_64 rng(7);
  const Tensor3 o = testing::random_tensor(3, 6, rng);

  // A constant upstream gradient sees only the total mass, which is fixed.
  const Tensor3 flat = softassign_vjp(o, 9, Tensor3(3, 6, 2.5));
  for (double v : flat.flat()) CHECK(std::abs(v) < 1e-12);

  // Adding a constant to one first-iteration slice leaves the output unchanged,
  // so the gradient sums to zero over every such slice.
  const Tensor3 g = testing::random_tensor(3, 6, rng);
  const Tensor3 grad = softassign_vjp(o, 9, g);
  std::vector<double> slice(3 + 6 - 1, 0.0);
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) slice[softassign_group(true, 3, k, i, j)] += grad(k, i, j);
    }
  }
  for (double s : slice) CHECK(std::abs(s) < 1e-12);

  // Cross-check one slice direction with a finite difference.
  Tensor3 plus = o;
  Tensor3 minus = o;
  for (int j = 0; j < 6; ++j) {
    plus(1, 0, j) += 1e-5;
    minus(1, 0, j) -= 1e-5;
  }
  CHECK(std::abs(inner(g, softassign(plus, 9).z) - inner(g, softassign(minus, 9).z)) < 1e-12);
}
