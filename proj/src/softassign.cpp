#include "mtsp/softassign.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr double kDenominatorFloor = 1e-300;

}  // namespace

int softassign_group(bool odd, int m, int k, int i, int j) {
  const int anchor = odd ? i : j;
  return anchor == 0 ? k : m + anchor - 1;
}

ConstraintResiduals constraint_residuals(const Tensor3& z) {
  const int m = z.m();
  const int n = z.n();
  ConstraintResiduals r;
  for (int k = 0; k < m; ++k) {
    double out = 0.0;
    double in = 0.0;
    for (int j = 1; j < n; ++j) out += z(k, 0, j);
    for (int i = 1; i < n; ++i) in += z(k, i, 0);
    r.from_depot = std::max(r.from_depot, std::abs(out - 1.0));
    r.to_depot = std::max(r.to_depot, std::abs(in - 1.0));
  }
  for (int c = 1; c < n; ++c) {
    double leave = 0.0;
    double enter = 0.0;
    for (int k = 0; k < m; ++k) {
      for (int j = 0; j < n; ++j) leave += z(k, c, j);
      for (int i = 0; i < n; ++i) enter += z(k, i, c);
    }
    r.leave = std::max(r.leave, std::abs(leave - 1.0));
    r.enter = std::max(r.enter, std::abs(enter - 1.0));
  }
  return r;
}

SoftassignTape::SoftassignTape(const Tensor3& scores, int iterations) {
  if (iterations < 1) {
    throw DataError("softassign needs at least one iteration, got " + std::to_string(iterations));
  }
  const int m = scores.m();
  const int n = scores.n();
  if (m < 1 || n < 2) throw DataError("softassign needs m >= 1 and n >= 2");

  double top = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double v = scores(k, i, j);
        if (!std::isfinite(v)) throw NumericError("softassign: non-finite score");
        if (i != j) top = std::max(top, v);
      }
    }
  }

  iterates_.reserve(iterations + 1);
  group_sums_.reserve(iterations);
  Tensor3 x(m, n);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) x(k, i, j) = i == j ? 0.0 : std::exp(scores(k, i, j) - top);
    }
  }
  iterates_.push_back(x);

  const int groups = m + n - 1;
  for (int r = 1; r <= iterations; ++r) {
    const bool odd = r % 2 == 1;
    std::vector<double> sums(groups, 0.0);
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) sums[softassign_group(odd, m, k, i, j)] += x(k, i, j);
      }
    }
    for (double& s : sums) s = std::max(s, kDenominatorFloor);
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) x(k, i, j) /= sums[softassign_group(odd, m, k, i, j)];
      }
    }
    iterates_.push_back(x);
    group_sums_.push_back(std::move(sums));
  }
}

Tensor3 SoftassignTape::backward(const Tensor3& upstream) const {
  const Tensor3& out = output();
  if (!upstream.same_shape(out)) throw DataError("softassign backward: upstream shape mismatch");
  const int m = out.m();
  const int n = out.n();
  const int groups = m + n - 1;

  // y = x / s(group) with s = Σ_group x gives  x̄ = (ȳ - Σ_group ȳ y) / s.
  Tensor3 grad = upstream;
  for (int r = iterations(); r >= 1; --r) {
    const bool odd = r % 2 == 1;
    const Tensor3& y = iterates_[r];
    const std::vector<double>& sums = group_sums_[r - 1];
    std::vector<double> dots(groups, 0.0);
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          dots[softassign_group(odd, m, k, i, j)] += grad(k, i, j) * y(k, i, j);
        }
      }
    }
    for (int k = 0; k < m; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const int g = softassign_group(odd, m, k, i, j);
          grad(k, i, j) = (grad(k, i, j) - dots[g]) / sums[g];
        }
      }
    }
  }
  // x0 = exp(o - max): the max shift cancels in the first normalization.
  const Tensor3& x0 = iterates_.front();
  for (std::size_t e = 0; e < grad.size(); ++e) grad.storage()[e] *= x0.storage()[e];
  return grad;
}

SoftTensor softassign(const Tensor3& scores, int iterations) {
  SoftassignTape tape(scores, iterations);
  return {tape.output(), iterations};
}

Tensor3 softassign_vjp(const Tensor3& scores, int iterations, const Tensor3& upstream) {
  return SoftassignTape(scores, iterations).backward(upstream);
}

}  // namespace mtsp
