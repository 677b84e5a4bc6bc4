#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtsp/instance.hpp"
#include "mtsp/tensor.hpp"

namespace mtsp {

/// The three element groups of an mTSP instance.
enum class Group : int { kSalesmen = 0, kDepot = 1, kCities = 2 };
inline constexpr int kGroupCount = 3;

struct NetworkConfig {
  int d_svd = 4;
  int d_model = 256;
  int d_ff = 1024;
  int blocks = 7;
  bool weighted_pooling = true;
  bool leave_one_out = true;

  /// d_model = 64, d_ff = 256, 3 blocks.
  static NetworkConfig desk();
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// y = x * weight + bias, applied row-wise; weight is (in x out).
struct Affine {
  Eigen::MatrixXd weight;
  Eigen::RowVectorXd bias;
};

struct LayerNormParams {
  Eigen::RowVectorXd gain;
  Eigen::RowVectorXd bias;
};

/// w(d) = a ⊙ exp(-c * d) + b, one scale per feature.
struct SpatialWeighting {
  Eigen::RowVectorXd a;
  Eigen::RowVectorXd b;
  Eigen::RowVectorXd c;
};

/// Weighted pooling sites: target <- source over {depot, cities}.
enum class WeightSite : int { kDepotFromDepot = 0, kDepotFromCities = 1, kCitiesFromDepot = 2, kCitiesFromCities = 3 };
inline constexpr int kWeightSiteCount = 4;

struct BlockParams {
  std::array<Affine, kGroupCount> pool;  // (1 + groups) * d_model -> d_model
  std::array<LayerNormParams, kGroupCount> pool_norm;
  std::array<Affine, kGroupCount> ff_in;   // d_model -> d_ff
  std::array<Affine, kGroupCount> ff_out;  // d_ff -> d_model
  std::array<LayerNormParams, kGroupCount> ff_norm;
  std::array<SpatialWeighting, kWeightSiteCount> weighting;
};

class NetworkParams {
 public:
  NetworkParams() = default;
  /// All weights zero, norms at gain 1 / bias 0, weighting at a = 1, b = 0, c = 1.
  explicit NetworkParams(const NetworkConfig& config);

  /// Uniform fan-in/fan-out scaled weights, zero biases.
  static NetworkParams initialize(const NetworkConfig& config, std::uint64_t seed);
  /// Same shapes as `like`, every entry zero.
  static NetworkParams zeros_like(const NetworkParams& like);

  const NetworkConfig& config() const { return config_; }

  /// Every parameter array in checkpoint order. The mutable overload bumps
  /// version(), which invalidates forward caches taken earlier.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;

  void set_zero();
  /// this += scale * other (same shapes).
  void add_scaled(const NetworkParams& other, double scale);
  double squared_norm() const;

  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  std::array<Affine, kGroupCount> embed;  // salesmen 2 -> d, depot/cities d_svd -> d
  std::array<LayerNormParams, kGroupCount> embed_norm;
  std::vector<BlockParams> blocks;
  Affine head_hidden;  // 3 d_model -> d_model over (city i, city j, salesman k)
  Affine head_out;     // d_model -> 1

 private:
  NetworkConfig config_;
  std::uint64_t version_ = 0;
};

/// Per-sample network input.
struct NetworkInput {
  Eigen::MatrixXd salesmen;   // m x 2
  Eigen::MatrixXd depot;      // 1 x d_svd
  Eigen::MatrixXd cities;     // (n-1) x d_svd
  Eigen::MatrixXd distances;  // n x n, mean-normalized

  int m() const { return static_cast<int>(salesmen.rows()); }
  int n() const { return static_cast<int>(cities.rows()) + 1; }
};

/// Mean-normalized distances, their SVD city rows and the salesman features.
NetworkInput make_network_input(const Instance& instance, int d_svd);

struct NormCache {
  Eigen::MatrixXd normalized;   // (x - mean) / std, before gain and bias
  Eigen::VectorXd inv_std;
};

struct GroupBlockCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd concat;  // input | context from each group
  std::array<Eigen::MatrixXi, kGroupCount> argmax;  // source row per (row, feature); -1 when empty
  NormCache pool_norm;
  Eigen::MatrixXd mid;
  Eigen::MatrixXd ff_hidden;  // pre-ReLU
  NormCache ff_norm;
};

struct ForwardCache {
  const NetworkParams* params = nullptr;
  std::uint64_t params_version = 0;
  NetworkInput input;
  std::array<NormCache, kGroupCount> embed_norm;
  std::vector<std::array<GroupBlockCache, kGroupCount>> blocks;
  std::array<Eigen::MatrixXd, kGroupCount> output;
  Eigen::MatrixXd head_i;  // n x d: city rows through the first third of head_hidden
  Eigen::MatrixXd head_j;  // n x d
  Eigen::MatrixXd head_k;  // m x d, bias included
};

struct InputGradients {
  Eigen::MatrixXd salesmen;
  Eigen::MatrixXd depot;
  Eigen::MatrixXd cities;
};

/// Layer normalization with eps = 1e-5 inside the square root.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LayerNormParams& p, NormCache* cache);

/// Max-pooled context of every target row over `source`, optionally scaled
/// per pair by w(distances(target_row, source_row)). With `exclude_self`,
/// row r skips source row r (an empty pool yields zeros). `distances` is
/// only read when `weighting` is non-null. Ties pick the lowest source row.
Eigen::MatrixXd pool_context(const Eigen::MatrixXd& source, int target_rows, bool exclude_self,
                             const SpatialWeighting* weighting, const Eigen::MatrixXd& distances,
                             Eigen::MatrixXi* argmax);

/// Scores for every (salesman k, city i, city j); the depot is city 0.
/// Throws NumericError if an activation becomes non-finite.
Tensor3 forward(const NetworkParams& params, const NetworkInput& input, ForwardCache* cache = nullptr);

/// Accumulates d<dscore, forward>/dparams into `grads`. Throws DataError if
/// the cache was produced by different or since-modified parameters.
void backward(const NetworkParams& params, const ForwardCache& cache, const Tensor3& dscore,
              NetworkParams& grads, InputGradients* input_grads = nullptr);

}  // namespace mtsp
