#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mtsp/error.hpp"
#include "mtsp/poolnet.hpp"
#include "test_util.hpp"

using namespace mtsp;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index e = 0; e < x.size(); ++e) x.data()[e] = normal(rng);
  return x;
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.blocks = 2;
  return c;
}

// Randomizes every parameter, including norms and the spatial weighting.
NetworkParams jittered(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkParams p = NetworkParams::initialize(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (auto t : p.tensors()) {
    for (double& v : t) v += jitter(rng);
  }
  return p;
}

double weighted_sum(const Tensor3& scores, const Tensor3& g) {
  double s = 0.0;
  for (std::size_t e = 0; e < scores.size(); ++e) s += scores.storage()[e] * g.storage()[e];
  return s;
}

}  // namespace

TEST_CASE("pool_context: leave-one-out examples") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd none;

  Eigen::MatrixXd same(4, 5);
  const Eigen::RowVectorXd v = random_matrix(1, 5, rng);
  for (int r = 0; r < 4; ++r) same.row(r) = v;
  const Eigen::MatrixXd ctx = pool_context(same, 4, true, nullptr, none, nullptr);
  for (int r = 0; r < 4; ++r) CHECK((ctx.row(r) - v).norm() == 0.0);

  const Eigen::MatrixXd single = random_matrix(1, 5, rng);
  Eigen::MatrixXi arg;
  CHECK(pool_context(single, 1, true, nullptr, none, &arg).isZero(0.0));
  CHECK((arg.array() == -1).all());
  CHECK(pool_context(single, 3, false, nullptr, none, nullptr).row(2) == single.row(0));

  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd three = random_matrix(3, 6, rng);
    const Eigen::MatrixXd loo = pool_context(three, 3, true, nullptr, none, nullptr);
    for (int c = 0; c < 6; ++c) {
      std::array<double, 3> col{three(0, c), three(1, c), three(2, c)};
      int top = 0;
      for (int r = 1; r < 3; ++r) {
        if (col[r] > col[top]) top = r;
      }
      std::array<double, 3> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      CHECK(loo(top, c) == sorted[1]);
      for (int r = 0; r < 3; ++r) {
        if (r != top) CHECK(loo(r, c) == sorted[2]);
      }
    }
  }
}

TEST_CASE("pool_context: dominated and duplicated elements") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd none;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x = random_matrix(6, 7, rng);
    const Eigen::MatrixXd before = pool_context(x, 6, true, nullptr, none, nullptr);

    // Replace row 2 by a vector below the column minimum of the other rows.
    Eigen::MatrixXd low = x;
    for (int c = 0; c < 7; ++c) {
      double lo = INFINITY;
      for (int r = 0; r < 6; ++r) {
        if (r != 2) lo = std::min(lo, x(r, c));
      }
      low(2, c) = lo - 0.5;
    }
    const Eigen::MatrixXd after = pool_context(low, 6, true, nullptr, none, nullptr);
    CHECK(after.row(2) == before.row(2));

    // Duplicate a row that is never the column maximum.
    for (int c = 0; c < 7; ++c) x(3, c) = x.col(c).minCoeff() - 0.25;
    const Eigen::MatrixXd base = pool_context(x, 6, true, nullptr, none, nullptr);
    Eigen::MatrixXd dup(7, 7);
    dup.topRows(6) = x;
    dup.row(6) = x.row(3);
    const Eigen::MatrixXd with_dup = pool_context(dup, 7, true, nullptr, none, nullptr);
    for (int r = 0; r < 6; ++r) {
      if (r != 3) CHECK(with_dup.row(r) == base.row(r));
    }
  }
}

TEST_CASE("pool_context: spatial weighting") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd src = random_matrix(5, 4, rng);
  const Eigen::MatrixXd dist = random_matrix(3, 5, rng).cwiseAbs();
  SpatialWeighting w{random_matrix(1, 4, rng), random_matrix(1, 4, rng), random_matrix(1, 4, rng).cwiseAbs()};
  Eigen::MatrixXi arg;
  const Eigen::MatrixXd ctx = pool_context(src, 3, false, &w, dist, &arg);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      double best = -INFINITY;
      for (int q = 0; q < 5; ++q) {
        best = std::max(best, src(q, c) * (w.a(c) * std::exp(-w.c(c) * dist(r, q)) + w.b(c)));
      }
      CHECK(ctx(r, c) == best);
    }
  }

  // d/dC of the pooled value is -d A exp(-C d) times the winning source entry.
  const double h = 1e-6;
  for (int c = 0; c < 4; ++c) {
    SpatialWeighting plus = w;
    SpatialWeighting minus = w;
    plus.c(c) += h;
    minus.c(c) -= h;
    const Eigen::MatrixXd cp = pool_context(src, 3, false, &plus, dist, nullptr);
    const Eigen::MatrixXd cm = pool_context(src, 3, false, &minus, dist, nullptr);
    for (int r = 0; r < 3; ++r) {
      const int q = arg(r, c);
      const double closed = src(q, c) * -dist(r, q) * w.a(c) * std::exp(-w.c(c) * dist(r, q));
      CHECK(std::abs((cp(r, c) - cm(r, c)) / (2 * h) - closed) < 1e-7);
    }
  }
}

TEST_CASE("layer_norm statistics") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = random_matrix(10, 64, rng) * 3.0;
  LayerNormParams p{Eigen::RowVectorXd::Constant(64, 2.0), Eigen::RowVectorXd::Constant(64, 0.5)};
  NormCache cache;
  const Eigen::MatrixXd y = layer_norm(x, p, &cache);
  for (int r = 0; r < 10; ++r) {
    const double mean = cache.normalized.row(r).mean();
    const double var = (cache.normalized.row(r).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
    CHECK((y.row(r) - (2.0 * cache.normalized.row(r)).array().matrix() -
           Eigen::RowVectorXd::Constant(64, 0.5)).norm() < 1e-12);
  }
}

TEST_CASE("network parameters") {
  const NetworkConfig cfg = tiny_config();
  const NetworkParams p(cfg);
  const std::size_t d = 8, f = 16, s = 4;
  const std::size_t per_block = 3 * (4 * d * d + d) + 3 * 2 * d + 3 * (d * f + f) + 3 * (f * d + d) +
                                3 * 2 * d + 4 * 3 * d;
  const std::size_t expected = (2 * d + d) + 2 * (s * d + d) + 3 * 2 * d + 2 * per_block +
                               (3 * d * d + d) + (d + 1);
  CHECK(p.parameter_count() == expected);
  CHECK(p.blocks[0].weighting[2].a == Eigen::RowVectorXd::Ones(8));
  CHECK(p.blocks[1].weighting[3].b == Eigen::RowVectorXd::Zero(8));
  CHECK(p.blocks[1].weighting[0].c == Eigen::RowVectorXd::Ones(8));

  const NetworkParams q = NetworkParams::initialize(cfg, 9);
  const double limit = std::sqrt(6.0 / (4 * d + d));
  CHECK(q.blocks[0].pool[1].weight.cwiseAbs().maxCoeff() <= limit);
  CHECK(q.blocks[0].pool[1].weight.cwiseAbs().maxCoeff() > 0.5 * limit);
  CHECK(NetworkParams::initialize(cfg, 9).squared_norm() == q.squared_norm());
  CHECK(NetworkParams::zeros_like(q).squared_norm() == 0.0);

  const NetworkConfig desk = NetworkConfig::desk();
  CHECK(desk.d_model == 64);
  CHECK(desk.blocks == 3);
  const NetworkConfig full;
  CHECK(full.d_svd == 4);
  CHECK(full.d_model == 256);
  CHECK(full.d_ff == 1024);
  CHECK(full.blocks == 7);
}

TEST_CASE("network input") {
  const NetworkInput small = make_network_input(generate_instance(3, 2, 1), 4);
  CHECK(small.cities.rows() == 2);
  CHECK(small.cities.cols() == 4);
  CHECK(small.cities.col(3).isZero(0.0));
  CHECK(small.salesmen(1, 0) == 1.0);
  CHECK(small.salesmen(0, 1) == 2.0);
  CHECK(std::abs(small.distances.mean() - 1.0) < 1e-12);
}

TEST_CASE("forward: shape, determinism and the residual path") {
  const NetworkParams p = NetworkParams::initialize(tiny_config(), 3);
  for (int n : {2, 5, 9}) {
    for (int m = 1; m < n && m <= 3; ++m) {
      const NetworkInput in = make_network_input(generate_instance(n, m, n * 10 + m), 4);
      const Tensor3 a = forward(p, in);
      CHECK(a.m() == m);
      CHECK(a.n() == n);
      CHECK(forward(p, in) == a);
    }
  }

  // Zero block maps: every block reduces to Norm(Norm(x)).
  NetworkParams z = NetworkParams::initialize(tiny_config(), 4);
  for (auto& b : z.blocks) {
    for (int g = 0; g < kGroupCount; ++g) {
      b.pool[g].weight.setZero();
      b.ff_out[g].weight.setZero();
    }
  }
  const NetworkInput in = make_network_input(generate_instance(7, 2, 5), 4);
  ForwardCache cache;
  forward(z, in, &cache);
  const std::array<const Eigen::MatrixXd*, kGroupCount> feats{&in.salesmen, &in.depot, &in.cities};
  for (int g = 0; g < kGroupCount; ++g) {
    Eigen::MatrixXd x = layer_norm((*feats[g] * z.embed[g].weight).rowwise() + z.embed[g].bias,
                                   z.embed_norm[g], nullptr);
    for (const auto& b : z.blocks) x = layer_norm(layer_norm(x, b.pool_norm[g], nullptr), b.ff_norm[g], nullptr);
    CHECK((cache.output[g] - x).norm() == 0.0);
  }
}

TEST_CASE("forward is equivariant under city permutations") {
  NetworkConfig cfg = tiny_config();
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.blocks = 3;
  const NetworkParams p = jittered(cfg, 5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + static_cast<int>(rng() % 8);
    const int m = 1 + static_cast<int>(rng() % 3);
    const Instance inst = generate_instance(n, m, rng());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    std::vector<Point> coords(n);
    for (int i = 0; i < n; ++i) coords[i] = inst.coord(perm[i]);
    const Tensor3 a = forward(p, make_network_input(inst, 4));
    const Tensor3 b = forward(p, make_network_input(Instance(coords, m), 4));
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) CHECK(std::abs(b(k, i, j) - a(k, perm[i], perm[j])) < 1e-5);
      }
    }
  }
}

TEST_CASE("backward matches central differences") {
  const NetworkConfig cfg = tiny_config();
  NetworkParams p = jittered(cfg, 7);
  std::mt19937_64 rng(8);
  const NetworkInput in = make_network_input(generate_instance(6, 2, 99), 4);
  const Tensor3 g = testing::random_tensor(2, 6, rng);

  ForwardCache cache;
  forward(p, in, &cache);
  NetworkParams grads = NetworkParams::zeros_like(p);
  InputGradients dx;
  backward(p, cache, g, grads, &dx);

  const double h = 1e-5;
  const auto analytic = grads.tensors();
  std::size_t checked = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t e = 0; e < analytic[t].size(); ++e) {
      NetworkParams plus = p;
      NetworkParams minus = p;
      plus.tensors()[t][e] += h;
      minus.tensors()[t][e] -= h;
      const double fd = (weighted_sum(forward(plus, in), g) - weighted_sum(forward(minus, in), g)) / (2 * h);
      const double an = analytic[t][e];
      const double err = std::abs(fd - an) / std::max(1.0, std::abs(an));
      worst = std::max(worst, err);
      ++checked;
    }
  }
  CHECK(checked == p.parameter_count());
  CHECK(worst < 1e-4);

  auto check_input = [&](Eigen::MatrixXd NetworkInput::*field, const Eigen::MatrixXd& grad) {
    for (Eigen::Index e = 0; e < (in.*field).size(); ++e) {
      NetworkInput plus = in;
      NetworkInput minus = in;
      (plus.*field).data()[e] += h;
      (minus.*field).data()[e] -= h;
      const double fd = (weighted_sum(forward(p, plus), g) - weighted_sum(forward(p, minus), g)) / (2 * h);
      CHECK(std::abs(fd - grad.data()[e]) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
  };
  check_input(&NetworkInput::salesmen, dx.salesmen);
  check_input(&NetworkInput::depot, dx.depot);
  check_input(&NetworkInput::cities, dx.cities);
}

TEST_CASE("backward: weighting gradients, zero upstream and stale caches") {
  const NetworkConfig cfg = tiny_config();
  NetworkParams p = jittered(cfg, 10);
  const NetworkInput in = make_network_input(generate_instance(6, 2, 11), 4);
  ForwardCache cache;
  forward(p, in, &cache);

  NetworkParams zero_grads = NetworkParams::zeros_like(p);
  backward(p, cache, Tensor3(2, 6), zero_grads);
  CHECK(zero_grads.squared_norm() == 0.0);

  std::mt19937_64 rng(12);
  const Tensor3 g = testing::random_tensor(2, 6, rng);
  NetworkParams grads = NetworkParams::zeros_like(p);
  backward(p, cache, g, grads);
  const double h = 1e-5;
  for (int site = 0; site < kWeightSiteCount; ++site) {
    double mass = 0.0;
    for (int c = 0; c < cfg.d_model; ++c) {
      NetworkParams plus = p;
      NetworkParams minus = p;
      plus.blocks[1].weighting[site].c(c) += h;
      minus.blocks[1].weighting[site].c(c) -= h;
      plus.touch();
      minus.touch();
      const double fd = (weighted_sum(forward(plus, in), g) - weighted_sum(forward(minus, in), g)) / (2 * h);
      const double an = grads.blocks[1].weighting[site].c(c);
      CHECK(std::abs(fd - an) / std::max(1.0, std::abs(an)) < 1e-4);
      mass += std::abs(an);
    }
    // The depot-from-depot site is a leave-one-out pool over a singleton.
    if (site == 0) CHECK(mass == 0.0);
    else CHECK(mass > 0.0);
  }

  // Backward accumulates.
  NetworkParams twice = NetworkParams::zeros_like(p);
  backward(p, cache, g, twice);
  backward(p, cache, g, twice);
  NetworkParams diff = twice;
  diff.add_scaled(grads, -2.0);
  CHECK(diff.squared_norm() < 1e-20 * std::max(1.0, grads.squared_norm()));

  p.tensors()[0][0] += 1.0;
  CHECK_THROWS_AS(backward(p, cache, g, grads), DataError);
  NetworkParams other = p;
  forward(p, in, &cache);
  CHECK_THROWS_AS(backward(other, cache, g, grads), DataError);
  CHECK_THROWS_AS(backward(p, cache, Tensor3(3, 6), grads), DataError);
}

TEST_CASE("forward rejects mismatched and non-finite inputs") {
  const NetworkParams p = NetworkParams::initialize(tiny_config(), 13);
  NetworkInput in = make_network_input(generate_instance(6, 2, 14), 4);
  NetworkInput wrong = in;
  wrong.cities.conservativeResize(Eigen::NoChange, 3);
  CHECK_THROWS_AS(forward(p, wrong), DataError);
  in.cities(0, 0) = std::nan("");
  CHECK_THROWS_AS(forward(p, in), NumericError);
}
