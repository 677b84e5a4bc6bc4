#include <cmath>
#include <random>

#include "doctest.h"
#include "mtsp/decoder.hpp"
#include "mtsp/error.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/softassign.hpp"
#include "test_util.hpp"

using namespace mtsp;

TEST_CASE("start_value") {
  std::mt19937_64 rng(1);
  const Tensor3 z1 = testing::random_probabilities(1, 5, rng);
  const std::vector<int> one{3};
  CHECK(start_value(z1, one) == doctest::Approx(std::log(z1(0, 0, 3))));

  const Tensor3 z = testing::random_probabilities(2, 5, rng);
  for (int a = 1; a < 5; ++a) {
    for (int b = 1; b < 5; ++b) {
      if (a == b) continue;
      const std::vector<int> s{a, b};
      CHECK(std::abs(start_value(z, s) - std::log(z(0, 0, a) * z(1, 0, b))) < 1e-12);
    }
  }

  Tensor3 uniform(2, 5, 0.25);
  const std::vector<int> s1{1, 2};
  const std::vector<int> s2{4, 3};
  CHECK(start_value(uniform, s1) == start_value(uniform, s2));

  const std::vector<int> repeat{2, 2};
  CHECK_THROWS_AS(start_value(z, repeat), DataError);
  const std::vector<int> depot{0, 2};
  CHECK_THROWS_AS(start_value(z, depot), DataError);
  Tensor3 dead = z;
  dead(0, 0, 1) = 0.0;
  CHECK(start_value(dead, s1) == -INFINITY);
}

TEST_CASE("beam search follows a one-hot tensor") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 9);
    const int m = 1 + static_cast<int>(rng() % std::min(4, n - 1));
    const Instance inst = generate_instance(n, m, rng());
    const Solution s = testing::random_solution(n, m, rng);
    const DecodeResult r = beam_search(to_tensor(s, n), inst, 1);
    REQUIRE(r.solutions.size() == 1);
    CHECK(r.best().solution == s);
    CHECK(r.best().log_value == 0.0);
    CHECK_FALSE(r.smoothed);
  }
}

TEST_CASE("beam search is exhaustive at saturation") {
  std::mt19937_64 rng(3);
  const Instance inst = generate_instance(5, 2, 11);
  const auto all = all_valid_solutions(inst);
  const DistanceMatrix d = distance_matrix(inst);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor3 z = softassign(testing::random_tensor(2, 5, rng), 100).z;
    const DecodeResult r = beam_search(z, inst, static_cast<int>(all.size()));
    CHECK(r.solutions.size() == all.size());
    double best_log = -INFINITY;
    double best_cost = INFINITY;
    for (const auto& s : all) {
      best_log = std::max(best_log, log_value(z, s));
      best_cost = std::min(best_cost, routes_cost(d, s));
    }
    CHECK(std::abs(r.solutions.front().log_value - best_log) < 1e-12);
    CHECK(std::abs(r.best().cost - best_cost) < 1e-12);
  }
}

TEST_CASE("beam search outputs are valid, bounded, deterministic") {
  std::mt19937_64 rng(4);
  int chains = 0;
  int non_monotone = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % std::min(3, n - 1));
    const Instance inst = generate_instance(n, m, rng());
    const Tensor3 z = softassign(testing::random_tensor(m, n, rng, 2.0), 100).z;
    double exhaustive = -INFINITY;
    enumerate_valid_solutions(inst, [&](const Solution& s) { exhaustive = std::max(exhaustive, log_value(z, s)); });
    double prev = -INFINITY;
    bool monotone = true;
    for (int b = 1; b <= 64; b *= 2) {
      const DecodeResult r = beam_search(z, inst, b);
      CHECK(static_cast<int>(r.solutions.size()) <= b);
      for (const auto& s : r.solutions) {
        CHECK(validate_solution(inst, s.solution).ok());
        CHECK(std::abs(s.log_value - log_value(z, s.solution)) < 1e-9);
        CHECK(r.best().cost <= s.cost * (1 + 1e-12));
      }
      // Pruning is greedy, so a wider beam can lose the path a narrower one kept.
      CHECK(r.solutions.front().log_value <= exhaustive + 1e-12);
      if (r.solutions.front().log_value < prev - 1e-12) monotone = false;
      prev = r.solutions.front().log_value;
      const DecodeResult again = beam_search(z, inst, b);
      CHECK(again.best().solution == r.best().solution);
      CHECK(again.solutions.size() == r.solutions.size());
    }
    ++chains;
    if (!monotone) ++non_monotone;
  }
  CHECK(non_monotone * 10 <= chains);
}

TEST_CASE("beam search smooths an all-zero tensor and rejects bad arguments") {
  const Instance inst = generate_instance(6, 2, 5);
  const DecodeResult r = beam_search(Tensor3(2, 6), inst, 3);
  CHECK(r.smoothed);
  CHECK(validate_solution(inst, r.best().solution).ok());
  CHECK_THROWS_AS(beam_search(Tensor3(2, 6), inst, 0), DataError);
  CHECK_THROWS_AS(beam_search(Tensor3(3, 6), inst, 2), DataError);
}
