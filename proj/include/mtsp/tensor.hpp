#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mtsp {

/// Dense m x n x n tensor of doubles, indexed (salesman, from-city, to-city),
/// stored row-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int m, int n, double fill = 0.0)
      : m_(m), n_(n), data_(static_cast<std::size_t>(m) * n * n, fill) {}

  int m() const { return m_; }
  int n() const { return n_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::size_t index(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * n_ + i) * n_ + j;
  }

  bool same_shape(const Tensor3& other) const { return m_ == other.m_ && n_ == other.n_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  int m_ = 0;
  int n_ = 0;
  std::vector<double> data_;
};

}  // namespace mtsp
