#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mtsp/instance.hpp"
#include "mtsp/tensor.hpp"

namespace mtsp::testing {

inline Tensor3 random_tensor(int m, int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor3 t(m, n);
  for (double& v : t.storage()) v = normal(rng);
  return t;
}

// Positive tensor with entries in (0, 1], zero on self-loops.
inline Tensor3 random_probabilities(int m, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  Tensor3 t(m, n);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) t(k, i, j) = i == j ? 0.0 : unit(rng);
    }
  }
  return t;
}

// A uniformly random labeled solution.
inline Solution random_solution(int n, int m, std::mt19937_64& rng) {
  std::vector<int> cities(n - 1);
  for (int c = 1; c < n; ++c) cities[c - 1] = c;
  std::shuffle(cities.begin(), cities.end(), rng);
  std::vector<int> cuts(n - 2);
  for (int i = 0; i < n - 2; ++i) cuts[i] = i + 1;
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(m - 1);
  std::sort(cuts.begin(), cuts.end());
  Solution s;
  int from = 0;
  for (int k = 0; k < m; ++k) {
    const int to = k + 1 < m ? cuts[k] : n - 1;
    s.routes.emplace_back(cities.begin() + from, cities.begin() + to);
    from = to;
  }
  return s;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-12, std::abs(a), std::abs(b)});
}

}  // namespace mtsp::testing
