#include "mtsp/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>

#include "mtsp/decoder.hpp"
#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr char kMagic[8] = {'M', 'T', 'S', 'P', 'N', 'E', 'T', '1'};

void scale(NetworkParams& p, double s) {
  for (auto t : p.tensors()) {
    for (double& v : t) v *= s;
  }
}

struct Prepared {
  NetworkInput input;
  Tensor3 target;
};

std::vector<Prepared> prepare(const std::vector<LabeledSample>& data, int d_svd) {
  std::vector<Prepared> out;
  out.reserve(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const LabeledSample& sample = data[s];
    const ValidityReport report = validate_solution(sample.instance, sample.solution);
    if (!report.ok()) {
      throw DataError("sample " + std::to_string(s) + " has an invalid label: " + report.detail);
    }
    out.push_back({make_network_input(sample.instance, d_svd), encode_target(sample.solution, sample.instance.n())});
  }
  return out;
}

double mean_prepared_loss(const NetworkParams& params, const std::vector<Prepared>& data,
                          const TrainConfig& config) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(data.size());
  parallel_for(static_cast<int>(data.size()), config.threads, [&](int s) {
    losses[s] = sample_loss(params, data[s].input, data[s].target, config, nullptr);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(data.size());
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[b];
  return v;
}

}  // namespace

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) throw DataError("adam: parameter and gradient lists differ");
  if (first_.empty()) {
    for (const auto& p : params) {
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(p.size(), 0.0);
    }
  }
  if (first_.size() != params.size()) throw DataError("adam: parameter layout changed");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != first_[t].size() || grads[t].size() != first_[t].size()) {
      throw DataError("adam: tensor size changed");
    }
    for (double g : grads[t]) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
    }
  }
  ++step_;
  const AdamConfig& c = config_;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(step_));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m1 = first_[t];
    auto& m2 = second_[t];
    for (std::size_t e = 0; e < m1.size(); ++e) {
      const double g = grads[t][e];
      m1[e] = c.beta1 * m1[e] + (1.0 - c.beta1) * g;
      m2[e] = c.beta2 * m2[e] + (1.0 - c.beta2) * g * g;
      const double mhat = m1[e] / correction1;
      const double vhat = m2[e] / correction2;
      params[t][e] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

void Adam::step(NetworkParams& params, const NetworkParams& grads) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g));
}

double sample_loss(const NetworkParams& params, const NetworkInput& input, const Tensor3& target,
                   const TrainConfig& config, NetworkParams* grads) {
  ForwardCache cache;
  const Tensor3 scores = forward(params, input, grads ? &cache : nullptr);
  const SoftassignTape tape(scores, config.iterations);
  if (!grads) return invariant_loss(tape.output(), target, config.loss).value;
  const LossAndGradient lg = loss_and_gradient(tape.output(), target, config.loss);
  backward(params, cache, tape.backward(lg.gradient), *grads);
  return lg.breakdown.value;
}

TrainResult train(const std::vector<LabeledSample>& data, const std::vector<LabeledSample>& validation,
                  const NetworkConfig& net, const TrainConfig& config) {
  return train_from(NetworkParams::initialize(net, config.seed), data, validation, config);
}

TrainResult train_from(NetworkParams start, const std::vector<LabeledSample>& data,
                       const std::vector<LabeledSample>& validation, const TrainConfig& config) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (config.batch_size < 1) throw DataError("train: batch size must be positive");
  const int d_svd = start.config().d_svd;
  const std::vector<Prepared> train_set = prepare(data, d_svd);
  const std::vector<Prepared> val_set = prepare(validation, d_svd);

  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (int s = 0; s < static_cast<int>(data.size()); ++s) {
    cells[{data[s].instance.n(), data[s].instance.m()}].push_back(s);
  }

  const int workers = resolve_threads(config.threads);
  std::vector<NetworkParams> buffers(std::min(workers, config.batch_size), NetworkParams::zeros_like(start));
  NetworkParams grads = NetworkParams::zeros_like(start);
  Adam adam(config.adam);
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  result.params = start;
  NetworkParams params = std::move(start);
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::int64_t step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  std::ofstream csv;
  if (!config.log_path.empty()) {
    csv.open(config.log_path);
    if (!csv) throw DataError("train: cannot write log " + config.log_path.string());
    csv << "epoch,step,mean_loss,validation_loss,wall_seconds\n";
  }
  if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);

  bool out_of_steps = false;
  for (int epoch = 1; epoch <= config.epochs && !out_of_steps; ++epoch) {
    std::vector<std::vector<int>> batches;
    for (auto& [shape, members] : cells) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t b = 0; b < members.size(); b += config.batch_size) {
        const auto end = std::min(members.size(), b + static_cast<std::size_t>(config.batch_size));
        batches.emplace_back(members.begin() + b, members.begin() + end);
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng);

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (const auto& batch : batches) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        out_of_steps = true;
        break;
      }
      grads.set_zero();
      std::vector<double> losses(batch.size());
      const int width = static_cast<int>(buffers.size());
      // Waves of `width` samples; buffers are reduced in sample order.
      for (std::size_t w = 0; w < batch.size(); w += width) {
        const int wave = static_cast<int>(std::min<std::size_t>(width, batch.size() - w));
        parallel_for(wave, workers, [&](int t) {
          buffers[t].set_zero();
          const Prepared& p = train_set[batch[w + t]];
          losses[w + t] = sample_loss(params, p.input, p.target, config, &buffers[t]);
        });
        for (int t = 0; t < wave; ++t) grads.add_scaled(buffers[t], 1.0);
      }
      scale(grads, 1.0 / static_cast<double>(batch.size()));
      if (config.clip_norm > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > config.clip_norm) scale(grads, config.clip_norm / norm);
      }
      adam.step(params, grads);
      ++step;
      for (double l : losses) epoch_loss += l;
      epoch_samples += batch.size();
    }
    if (epoch_samples == 0) break;

    EpochLog entry;
    entry.epoch = epoch;
    entry.step = step;
    entry.mean_loss = epoch_loss / static_cast<double>(epoch_samples);
    entry.validation_loss = mean_prepared_loss(params, val_set, config);
    entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (csv) {
      csv << std::setprecision(17) << entry.epoch << ',' << entry.step << ',' << entry.mean_loss << ','
          << entry.validation_loss << ',' << entry.wall_seconds << '\n' << std::flush;
    }
    if (!config.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.bin", epoch);
      save_checkpoint(config.checkpoint_dir / name, params);
    }

    if (val_set.empty()) {
      result.params = params;
      result.best_epoch = epoch;
      continue;
    }
    if (entry.validation_loss < best_val) {
      best_val = entry.validation_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
      if (!config.checkpoint_dir.empty()) save_checkpoint(config.checkpoint_dir / "best.bin", params);
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.log.empty()) result.params = params;
  return result;
}

double mean_loss(const NetworkParams& params, const std::vector<LabeledSample>& data,
                 const TrainConfig& config) {
  return mean_prepared_loss(params, prepare(data, params.config().d_svd), config);
}

Tensor3 predict(const NetworkParams& params, const Instance& instance, int iterations) {
  const NetworkInput input = make_network_input(instance, params.config().d_svd);
  return softassign(forward(params, input), iterations).z;
}

EvalReport evaluate_with(const std::vector<LabeledSample>& data, const std::vector<int>& beams,
                         const ScoreFn& scores, int threads) {
  EvalReport report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.costs.assign(beams.size(), std::vector<double>(data.size(), nan));
  parallel_for(static_cast<int>(data.size()), threads, [&](int s) {
    const LabeledSample& sample = data[s];
    Tensor3 z;
    try {
      z = scores(sample);
    } catch (const NumericError&) {
      return;
    }
    for (std::size_t b = 0; b < beams.size(); ++b) {
      try {
        report.costs[b][s] = beam_search(z, sample.instance, beams[b]).best().cost;
      } catch (const NumericError&) {
      }
    }
  });
  for (std::size_t b = 0; b < beams.size(); ++b) {
    BeamError e;
    e.beam = beams[b];
    double total = 0.0;
    for (std::size_t s = 0; s < data.size(); ++s) {
      const double c = report.costs[b][s];
      if (std::isnan(c)) {
        ++e.failures;
        continue;
      }
      total += c / data[s].cost - 1.0;
      ++e.decoded;
    }
    e.mean_error = e.decoded > 0 ? total / e.decoded : nan;
    report.beams.push_back(e);
  }
  return report;
}

EvalReport evaluate(const NetworkParams& params, const std::vector<LabeledSample>& data,
                    const std::vector<int>& beams, int iterations, int threads) {
  return evaluate_with(
      data, beams, [&](const LabeledSample& s) { return predict(params, s.instance, iterations); }, threads);
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const NetworkConfig& c = params.config();
  for (std::int64_t v : {std::int64_t{c.d_svd}, std::int64_t{c.d_model}, std::int64_t{c.d_ff},
                         std::int64_t{c.blocks}, std::int64_t{c.weighted_pooling},
                         std::int64_t{c.leave_one_out},
                         static_cast<std::int64_t>(params.parameter_count())}) {
    write_u64(out, static_cast<std::uint64_t>(v));
  }
  for (const auto& t : params.tensors()) {
    for (double v : t) write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw DataError("not a checkpoint: " + path.string());
  std::int64_t f[7];
  for (auto& v : f) v = static_cast<std::int64_t>(read_u64(in));
  for (int i = 0; i < 4; ++i) {
    if (f[i] < 0 || f[i] > (1 << 20)) throw DataError("checkpoint config out of range");
  }
  NetworkConfig c;
  c.d_svd = static_cast<int>(f[0]);
  c.d_model = static_cast<int>(f[1]);
  c.d_ff = static_cast<int>(f[2]);
  c.blocks = static_cast<int>(f[3]);
  c.weighted_pooling = f[4] != 0;
  c.leave_one_out = f[5] != 0;
  NetworkParams params(c);
  if (static_cast<std::int64_t>(params.parameter_count()) != f[6]) {
    throw DataError("checkpoint parameter count does not match its config");
  }
  for (auto t : params.tensors()) {
    for (double& v : t) v = std::bit_cast<double>(read_u64(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");
  return params;
}

}  // namespace mtsp
