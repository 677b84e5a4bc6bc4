#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtsp/tensor.hpp"

namespace mtsp {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// A single-depot mTSP instance. City 0 is always the depot.
class Instance {
 public:
  static constexpr int kDepot = 0;

  /// Throws DataError unless n >= 2, 1 <= m <= n - 1 and all coordinates are finite.
  Instance(std::vector<Point> coords, int m);

  int n() const { return static_cast<int>(coords_.size()); }
  int m() const { return m_; }
  const std::vector<Point>& coords() const { return coords_; }
  const Point& coord(int i) const { return coords_[i]; }

  friend bool operator==(const Instance&, const Instance&) = default;

 private:
  std::vector<Point> coords_;
  int m_ = 1;
};

/// n i.i.d. points uniform in the unit square; the first sample is the depot.
Instance generate_instance(int n, int m, std::uint64_t seed);

/// Symmetric n x n matrix of pairwise Euclidean distances.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(Eigen::MatrixXd values);

  int n() const { return static_cast<int>(values_.rows()); }
  double operator()(int i, int j) const { return values_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }
  double mean() const { return values_.mean(); }

 private:
  Eigen::MatrixXd values_;
};

DistanceMatrix distance_matrix(const Instance& instance);

/// Divides every entry by the mean over all n^2 entries (diagonal included).
/// Throws DataError for the all-zero matrix.
DistanceMatrix normalize_by_mean(const DistanceMatrix& d);

/// Eigen-decomposition of a symmetric matrix via cyclic Jacobi rotations.
/// Eigenvalues are returned unsorted, columns of `vectors` are unit eigenvectors.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, double tol = 1e-15, int max_sweeps = 100);

/// Truncated SVD of a symmetric matrix. U and V are n x rank, S holds the
/// singular values in descending order.
struct TruncatedSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
};

/// Singular values are |eigenvalues| ordered descending (index tie-break);
/// each singular pair is sign-flipped so the largest-magnitude entry of u is
/// positive (lowest index wins ties).
TruncatedSvd symmetric_svd(const Eigen::MatrixXd& a, int rank);

/// Rows of U*S for the rank-`d_svd` approximation; n x d_svd.
Eigen::MatrixXd svd_city_embedding(const DistanceMatrix& d, int d_svd);

inline constexpr int kDefaultSvdRank = 4;

/// (k/m, m) for 1-based salesman index k.
std::array<double, 2> salesman_features(int k, int m);

/// m rows of salesman_features, one per salesman.
Eigen::MatrixXd salesman_feature_matrix(int m);

/// Salesman k travels depot -> routes[k][0] -> ... -> routes[k].back() -> depot.
struct Solution {
  std::vector<std::vector<int>> routes;
  friend bool operator==(const Solution&, const Solution&) = default;
  friend auto operator<=>(const Solution&, const Solution&) = default;
};

/// Σ over routes of the closed depot loop lengths. Throws DataError if the
/// solution does not validate for the instance.
double solution_cost(const Instance& instance, const Solution& solution);

/// Same sum without validation; route lists may be partial.
double routes_cost(const DistanceMatrix& d, const Solution& solution);
double route_cost(const DistanceMatrix& d, const std::vector<int>& route);

/// Orients every route so its first city is not larger than its last and
/// sorts the routes. Two solutions equal up to salesman relabeling and route
/// reversal share a canonical form.
Solution canonicalize(Solution solution);

/// Binary δ tensor: delta(k, i, j) = 1 iff salesman k travels i -> j.
Tensor3 to_tensor(const Solution& solution, int n);

/// Inverse of to_tensor. Throws DataError if the tensor is not an encoding.
Solution from_tensor(const Tensor3& delta);

/// Which of the ILP degree and subtour constraints a δ tensor satisfies.
struct ValidityReport {
  bool binary = true;
  bool from_depot = true;      // each salesman leaves the depot exactly once
  bool to_depot = true;        // each salesman returns to the depot exactly once
  bool leave_once = true;      // each non-depot city is left exactly once
  bool enter_once = true;      // each non-depot city is entered exactly once
  bool flow_conserved = true;  // per salesman, in-degree == out-degree at each city
  bool no_subtour = true;      // every arc of a layer lies on its single depot cycle
  std::string detail;

  bool ok() const {
    return binary && from_depot && to_depot && leave_once && enter_once && flow_conserved &&
           no_subtour;
  }
};

/// Throws DataError on a shape mismatch with the instance.
ValidityReport validate_solution(const Instance& instance, const Tensor3& delta);

/// Route-list form: also rejects out-of-range indices, empty routes and
/// repeated or missing cities before checking the tensor encoding.
ValidityReport validate_solution(const Instance& instance, const Solution& solution);

}  // namespace mtsp
