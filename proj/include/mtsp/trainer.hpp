#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtsp/instance.hpp"
#include "mtsp/loss.hpp"
#include "mtsp/parallel.hpp"
#include "mtsp/poolnet.hpp"
#include "mtsp/softassign.hpp"

namespace mtsp {

/// An instance with its optimal solution and cost.
struct LabeledSample {
  Instance instance;
  Solution solution;
  double cost = 0.0;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter arrays.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Throws NumericError on a non-finite gradient (parameters untouched) and
  /// DataError if the layout differs from the first call.
  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);
  void step(NetworkParams& params, const NetworkParams& grads);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct TrainConfig {
  int batch_size = 128;
  AdamConfig adam;
  int epochs = 50;
  std::int64_t max_steps = 0;  // 0 = no limit
  int iterations = kDefaultSoftassignIterations;
  LossConfig loss;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables
  int patience = 5;         // epochs without validation improvement; <= 0 disables
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  std::filesystem::path log_path;        // empty = no CSV log
};

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double mean_loss = 0.0;
  double validation_loss = 0.0;  // NaN without a validation set
  double wall_seconds = 0.0;
};

struct TrainResult {
  NetworkParams params;  // best validation epoch, or the last one without validation
  std::vector<EpochLog> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Loss of one sample and, if `grads` is non-null, its gradient added to `grads`.
double sample_loss(const NetworkParams& params, const NetworkInput& input, const Tensor3& target,
                   const TrainConfig& config, NetworkParams* grads);

/// Minimizes the mean invariant loss with Adam over minibatches of samples
/// sharing (n, m). Throws DataError on an empty or inconsistent dataset.
TrainResult train(const std::vector<LabeledSample>& data, const std::vector<LabeledSample>& validation,
                  const NetworkConfig& net, const TrainConfig& config);

/// Continues from `start` instead of a fresh initialization.
TrainResult train_from(NetworkParams start, const std::vector<LabeledSample>& data,
                       const std::vector<LabeledSample>& validation, const TrainConfig& config);

/// Mean invariant loss over a dataset.
double mean_loss(const NetworkParams& params, const std::vector<LabeledSample>& data,
                 const TrainConfig& config);

/// softassign(forward(instance)).
Tensor3 predict(const NetworkParams& params, const Instance& instance, int iterations);

struct BeamError {
  int beam = 0;
  double mean_error = 0.0;  // mean of cost / optimal - 1 over decoded samples
  int decoded = 0;
  int failures = 0;
};

struct EvalReport {
  std::vector<BeamError> beams;
  std::vector<std::vector<double>> costs;  // costs[b][sample], NaN on failure
};

using ScoreFn = std::function<Tensor3(const LabeledSample&)>;

/// Decodes the tensor from `scores` at every beam width and compares with the label cost.
EvalReport evaluate_with(const std::vector<LabeledSample>& data, const std::vector<int>& beams,
                         const ScoreFn& scores, int threads = 0);

EvalReport evaluate(const NetworkParams& params, const std::vector<LabeledSample>& data,
                    const std::vector<int>& beams, int iterations = kDefaultSoftassignIterations,
                    int threads = 0);

/// "MTSPNET1", six int64 config fields, the int64 parameter count, then every
/// parameter as a little-endian double in NetworkParams::tensors() order.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mtsp
