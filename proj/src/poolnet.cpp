#include "mtsp/poolnet.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mtsp/error.hpp"

namespace mtsp {
namespace {

constexpr double kNormEpsilon = 1e-5;
constexpr int kS = static_cast<int>(Group::kSalesmen);
constexpr int kD = static_cast<int>(Group::kDepot);
constexpr int kC = static_cast<int>(Group::kCities);

Affine make_affine(int in, int out) {
  return {Eigen::MatrixXd::Zero(in, out), Eigen::RowVectorXd::Zero(out)};
}

LayerNormParams make_norm(int d) {
  return {Eigen::RowVectorXd::Ones(d), Eigen::RowVectorXd::Zero(d)};
}

Eigen::MatrixXd apply(const Affine& a, const Eigen::MatrixXd& x) {
  return (x * a.weight).rowwise() + a.bias;
}

// Accumulates parameter gradients of y = x W + b and returns dL/dx.
Eigen::MatrixXd apply_backward(const Affine& a, const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy,
                               Affine& grad) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  return dy * a.weight.transpose();
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const NormCache& cache,
                                    const LayerNormParams& p, LayerNormParams& grad) {
  const Eigen::MatrixXd& xhat = cache.normalized;
  grad.gain += (dy.array() * xhat.array()).matrix().colwise().sum();
  grad.bias += dy.colwise().sum();
  const Eigen::MatrixXd dxhat = dy.array().rowwise() * p.gain.array();
  const double d = static_cast<double>(dy.cols());
  Eigen::MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_g = dxhat.row(r).sum() / d;
    const double mean_gx = dxhat.row(r).dot(xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_g - xhat.row(r).array() * mean_gx).matrix();
  }
  return dx;
}

int weight_site(int target, int source) {
  return (target == kC ? 2 : 0) + (source == kC ? 1 : 0);
}

bool is_weighted(const NetworkConfig& cfg, int target, int source) {
  return cfg.weighted_pooling && target != kS && source != kS;
}

// Distances between the rows of a target group and a source group.
Eigen::MatrixXd distance_block(const Eigen::MatrixXd& dist, int target, int source) {
  const int n = static_cast<int>(dist.rows());
  const auto span = [n](int g) { return g == kD ? std::pair{0, 1} : std::pair{1, n - 1}; };
  const auto [r0, rn] = span(target);
  const auto [c0, cn] = span(source);
  return dist.block(r0, c0, rn, cn);
}

void check_finite(const Eigen::MatrixXd& x, const char* where) {
  if (!x.allFinite()) throw NumericError(std::string("poolnet: non-finite activation in ") + where);
}

void fill_uniform(Eigen::MatrixXd& w, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index e = 0; e < w.size(); ++e) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    w.data()[e] = (2.0 * u - 1.0) * limit;
  }
}

}  // namespace

NetworkConfig NetworkConfig::desk() {
  NetworkConfig c;
  c.d_model = 64;
  c.d_ff = 256;
  c.blocks = 3;
  return c;
}

NetworkParams::NetworkParams(const NetworkConfig& config) : config_(config) {
  if (config.d_svd < 1 || config.d_model < 1 || config.d_ff < 1 || config.blocks < 0) {
    throw DataError("network config dimensions must be positive");
  }
  const int d = config.d_model;
  embed[kS] = make_affine(2, d);
  embed[kD] = make_affine(config.d_svd, d);
  embed[kC] = make_affine(config.d_svd, d);
  for (auto& n : embed_norm) n = make_norm(d);
  blocks.resize(config.blocks);
  for (auto& b : blocks) {
    for (int g = 0; g < kGroupCount; ++g) {
      b.pool[g] = make_affine((1 + kGroupCount) * d, d);
      b.pool_norm[g] = make_norm(d);
      b.ff_in[g] = make_affine(d, config.d_ff);
      b.ff_out[g] = make_affine(config.d_ff, d);
      b.ff_norm[g] = make_norm(d);
    }
    for (auto& w : b.weighting) {
      w = {Eigen::RowVectorXd::Ones(d), Eigen::RowVectorXd::Zero(d), Eigen::RowVectorXd::Ones(d)};
    }
  }
  head_hidden = make_affine(3 * d, d);
  head_out = make_affine(d, 1);
}

NetworkParams NetworkParams::initialize(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams p(config);
  std::mt19937_64 rng(seed);
  for (auto& a : p.embed) fill_uniform(a.weight, rng);
  for (auto& b : p.blocks) {
    for (int g = 0; g < kGroupCount; ++g) {
      fill_uniform(b.pool[g].weight, rng);
      fill_uniform(b.ff_in[g].weight, rng);
      fill_uniform(b.ff_out[g].weight, rng);
    }
  }
  fill_uniform(p.head_hidden.weight, rng);
  fill_uniform(p.head_out.weight, rng);
  return p;
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& like) {
  NetworkParams p = like;
  p.set_zero();
  return p;
}

namespace {

template <class Params, class Span>
std::vector<Span> collect(Params& p) {
  std::vector<Span> out;
  auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  auto add_affine = [&](auto& a) {
    add(a.weight);
    add(a.bias);
  };
  auto add_norm = [&](auto& n) {
    add(n.gain);
    add(n.bias);
  };
  for (auto& a : p.embed) add_affine(a);
  for (auto& n : p.embed_norm) add_norm(n);
  for (auto& b : p.blocks) {
    for (auto& a : b.pool) add_affine(a);
    for (auto& n : b.pool_norm) add_norm(n);
    for (auto& a : b.ff_in) add_affine(a);
    for (auto& a : b.ff_out) add_affine(a);
    for (auto& n : b.ff_norm) add_norm(n);
    for (auto& w : b.weighting) {
      add(w.a);
      add(w.b);
      add(w.c);
    }
  }
  add_affine(p.head_hidden);
  add_affine(p.head_out);
  return out;
}

}  // namespace

std::vector<std::span<double>> NetworkParams::tensors() {
  touch();
  return collect<NetworkParams, std::span<double>>(*this);
}

std::vector<std::span<const double>> NetworkParams::tensors() const {
  return collect<const NetworkParams, std::span<const double>>(*this);
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors()) total += t.size();
  return total;
}

void NetworkParams::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

void NetworkParams::add_scaled(const NetworkParams& other, double scale) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  if (mine.size() != theirs.size()) throw DataError("add_scaled: parameter layout mismatch");
  for (std::size_t t = 0; t < mine.size(); ++t) {
    if (mine[t].size() != theirs[t].size()) throw DataError("add_scaled: tensor size mismatch");
    for (std::size_t e = 0; e < mine[t].size(); ++e) mine[t][e] += scale * theirs[t][e];
  }
}

double NetworkParams::squared_norm() const {
  double total = 0.0;
  for (const auto& t : tensors()) {
    for (double v : t) total += v * v;
  }
  return total;
}

NetworkInput make_network_input(const Instance& instance, int d_svd) {
  const DistanceMatrix normalized = normalize_by_mean(distance_matrix(instance));
  const int n = instance.n();
  // Instances smaller than d_svd get zero-padded feature columns.
  const Eigen::MatrixXd us = svd_city_embedding(normalized, std::min(d_svd, n));
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(n, d_svd);
  features.leftCols(us.cols()) = us;
  NetworkInput in;
  in.salesmen = salesman_feature_matrix(instance.m());
  in.depot = features.topRows(1);
  in.cities = features.bottomRows(n - 1);
  in.distances = normalized.values();
  return in;
}

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LayerNormParams& p, NormCache* cache) {
  const Eigen::Index rows = x.rows();
  const double d = static_cast<double>(x.cols());
  Eigen::MatrixXd xhat(rows, x.cols());
  Eigen::VectorXd inv(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / d;
    const Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / d;
    inv(r) = 1.0 / std::sqrt(var + kNormEpsilon);
    xhat.row(r) = centered * inv(r);
  }
  Eigen::MatrixXd y = (xhat.array().rowwise() * p.gain.array()).rowwise() + p.bias.array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Eigen::MatrixXd pool_context(const Eigen::MatrixXd& source, int target_rows, bool exclude_self,
                             const SpatialWeighting* weighting, const Eigen::MatrixXd& distances,
                             Eigen::MatrixXi* argmax) {
  const int l = static_cast<int>(source.rows());
  const int d = static_cast<int>(source.cols());
  if (exclude_self && target_rows != l) {
    throw DataError("pool_context: leave-one-out needs target and source of equal size");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(target_rows, d);
  Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(target_rows, d, -1);

  if (weighting) {
    if (distances.rows() != target_rows || distances.cols() != l) {
      throw DataError("pool_context: distance block shape mismatch");
    }
    for (int r = 0; r < target_rows; ++r) {
      for (int c = 0; c < d; ++c) {
        const double a = weighting->a(c);
        const double b = weighting->b(c);
        const double k = weighting->c(c);
        double best = 0.0;
        int best_q = -1;
        for (int q = 0; q < l; ++q) {
          if (exclude_self && q == r) continue;
          const double v = source(q, c) * (a * std::exp(-k * distances(r, q)) + b);
          if (best_q < 0 || v > best) {
            best = v;
            best_q = q;
          }
        }
        out(r, c) = best;
        arg(r, c) = best_q;
      }
    }
  } else if (!exclude_self) {
    for (int c = 0; c < d; ++c) {
      int best_q = -1;
      for (int q = 0; q < l; ++q) {
        if (best_q < 0 || source(q, c) > source(best_q, c)) best_q = q;
      }
      if (best_q < 0) continue;
      out.col(c).setConstant(source(best_q, c));
      arg.col(c).setConstant(best_q);
    }
  } else {
    // Leave-one-out from the two largest entries of each feature.
    for (int c = 0; c < d; ++c) {
      int first = -1;
      int second = -1;
      for (int q = 0; q < l; ++q) {
        if (first < 0 || source(q, c) > source(first, c)) {
          second = first;
          first = q;
        } else if (second < 0 || source(q, c) > source(second, c)) {
          second = q;
        }
      }
      for (int r = 0; r < l; ++r) {
        const int q = r == first ? second : first;
        if (q < 0) continue;
        out(r, c) = source(q, c);
        arg(r, c) = q;
      }
    }
  }
  if (argmax) *argmax = std::move(arg);
  return out;
}

Tensor3 forward(const NetworkParams& params, const NetworkInput& input, ForwardCache* cache) {
  const NetworkConfig& cfg = params.config();
  const int d = cfg.d_model;
  const int m = input.m();
  const int n = input.n();
  if (m < 1 || n < 2 || input.salesmen.cols() != 2 || input.depot.rows() != 1 ||
      input.depot.cols() != cfg.d_svd || input.cities.cols() != cfg.d_svd ||
      input.distances.rows() != n || input.distances.cols() != n) {
    throw DataError("poolnet forward: input shapes do not match the network config");
  }
  if (cache) {
    cache->params = &params;
    cache->params_version = params.version();
    cache->input = input;
    cache->blocks.assign(cfg.blocks, {});
  }

  const std::array<const Eigen::MatrixXd*, kGroupCount> features{&input.salesmen, &input.depot,
                                                                 &input.cities};
  std::array<Eigen::MatrixXd, kGroupCount> x;
  for (int g = 0; g < kGroupCount; ++g) {
    x[g] = layer_norm(apply(params.embed[g], *features[g]), params.embed_norm[g],
                      cache ? &cache->embed_norm[g] : nullptr);
  }

  std::array<std::array<Eigen::MatrixXd, kGroupCount>, kGroupCount> dist;
  for (int t : {kD, kC}) {
    for (int s : {kD, kC}) dist[t][s] = distance_block(input.distances, t, s);
  }
  const Eigen::MatrixXd no_distances;

  for (int b = 0; b < cfg.blocks; ++b) {
    const BlockParams& blk = params.blocks[b];
    std::array<Eigen::MatrixXd, kGroupCount> next;
    for (int i = 0; i < kGroupCount; ++i) {
      GroupBlockCache local;
      GroupBlockCache& gc = cache ? cache->blocks[b][i] : local;
      const int l = static_cast<int>(x[i].rows());
      gc.input = x[i];
      gc.concat.resize(l, (1 + kGroupCount) * d);
      gc.concat.leftCols(d) = x[i];
      for (int j = 0; j < kGroupCount; ++j) {
        const bool weighted = is_weighted(cfg, i, j);
        const SpatialWeighting* w = weighted ? &blk.weighting[weight_site(i, j)] : nullptr;
        gc.concat.middleCols(d * (1 + j), d) =
            pool_context(x[j], l, i == j && cfg.leave_one_out, w,
                         weighted ? dist[i][j] : no_distances, &gc.argmax[j]);
      }
      const Eigen::MatrixXd pooled = apply(blk.pool[i], gc.concat) + x[i];
      gc.mid = layer_norm(pooled, blk.pool_norm[i], &gc.pool_norm);
      gc.ff_hidden = apply(blk.ff_in[i], gc.mid);
      const Eigen::MatrixXd ff = apply(blk.ff_out[i], gc.ff_hidden.cwiseMax(0.0)) + gc.mid;
      next[i] = layer_norm(ff, blk.ff_norm[i], &gc.ff_norm);
      check_finite(next[i], "pooling block");
    }
    x = std::move(next);
  }

  Eigen::MatrixXd cities(n, d);
  cities.topRows(1) = x[kD];
  cities.bottomRows(n - 1) = x[kC];
  const Eigen::MatrixXd& wh = params.head_hidden.weight;
  const Eigen::MatrixXd hi = cities * wh.topRows(d);
  const Eigen::MatrixXd hj = cities * wh.middleRows(d, d);
  const Eigen::MatrixXd hk = (x[kS] * wh.bottomRows(d)).rowwise() + params.head_hidden.bias;
  const Eigen::RowVectorXd wo = params.head_out.weight.col(0).transpose();
  const double bo = params.head_out.bias(0);

  Tensor3 scores(m, n);
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd base = hi.row(i) + hk.row(k);
      for (int j = 0; j < n; ++j) {
        scores(k, i, j) = (base + hj.row(j)).cwiseMax(0.0).dot(wo) + bo;
      }
    }
  }
  for (double v : scores.flat()) {
    if (!std::isfinite(v)) throw NumericError("poolnet: non-finite score");
  }
  if (cache) {
    cache->output = x;
    cache->head_i = hi;
    cache->head_j = hj;
    cache->head_k = hk;
  }
  return scores;
}

void backward(const NetworkParams& params, const ForwardCache& cache, const Tensor3& dscore,
              NetworkParams& grads, InputGradients* input_grads) {
  if (cache.params != &params || cache.params_version != params.version()) {
    throw DataError("poolnet backward: stale forward cache");
  }
  const NetworkConfig& cfg = params.config();
  const int d = cfg.d_model;
  const int m = cache.input.m();
  const int n = cache.input.n();
  if (dscore.m() != m || dscore.n() != n) throw DataError("poolnet backward: gradient shape mismatch");

  // Head.
  const Eigen::RowVectorXd wo = params.head_out.weight.col(0).transpose();
  Eigen::MatrixXd dhi = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd dhj = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd dhk = Eigen::MatrixXd::Zero(m, d);
  Eigen::RowVectorXd dwo = Eigen::RowVectorXd::Zero(d);
  double dbo = 0.0;
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd base = cache.head_i.row(i) + cache.head_k.row(k);
      for (int j = 0; j < n; ++j) {
        const double g = dscore(k, i, j);
        if (g == 0.0) continue;
        dbo += g;
        const Eigen::RowVectorXd pre = base + cache.head_j.row(j);
        for (int c = 0; c < d; ++c) {
          if (pre(c) <= 0.0) continue;
          dwo(c) += g * pre(c);
          const double dh = g * wo(c);
          dhi(i, c) += dh;
          dhj(j, c) += dh;
          dhk(k, c) += dh;
        }
      }
    }
  }
  grads.head_out.weight.col(0) += dwo.transpose();
  grads.head_out.bias(0) += dbo;

  const auto& x = cache.output;
  Eigen::MatrixXd cities(n, d);
  cities.topRows(1) = x[kD];
  cities.bottomRows(n - 1) = x[kC];
  const Eigen::MatrixXd& wh = params.head_hidden.weight;
  grads.head_hidden.weight.topRows(d).noalias() += cities.transpose() * dhi;
  grads.head_hidden.weight.middleRows(d, d).noalias() += cities.transpose() * dhj;
  grads.head_hidden.weight.bottomRows(d).noalias() += x[kS].transpose() * dhk;
  grads.head_hidden.bias += dhk.colwise().sum();
  const Eigen::MatrixXd dcities = dhi * wh.topRows(d).transpose() + dhj * wh.middleRows(d, d).transpose();

  std::array<Eigen::MatrixXd, kGroupCount> dx;
  dx[kS] = dhk * wh.bottomRows(d).transpose();
  dx[kD] = dcities.topRows(1);
  dx[kC] = dcities.bottomRows(n - 1);

  std::array<std::array<Eigen::MatrixXd, kGroupCount>, kGroupCount> dist;
  for (int t : {kD, kC}) {
    for (int s : {kD, kC}) dist[t][s] = distance_block(cache.input.distances, t, s);
  }

  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const BlockParams& blk = params.blocks[b];
    BlockParams& gblk = grads.blocks[b];
    const auto& bc = cache.blocks[b];
    std::array<Eigen::MatrixXd, kGroupCount> dprev;
    for (int g = 0; g < kGroupCount; ++g) dprev[g] = Eigen::MatrixXd::Zero(bc[g].input.rows(), d);

    for (int i = 0; i < kGroupCount; ++i) {
      const GroupBlockCache& gc = bc[i];
      const Eigen::MatrixXd dsum = layer_norm_backward(dx[i], gc.ff_norm, blk.ff_norm[i], gblk.ff_norm[i]);
      const Eigen::MatrixXd relu = gc.ff_hidden.cwiseMax(0.0);
      const Eigen::MatrixXd drelu = apply_backward(blk.ff_out[i], relu, dsum, gblk.ff_out[i]);
      const Eigen::MatrixXd dhidden =
          (gc.ff_hidden.array() > 0.0).select(drelu, Eigen::MatrixXd::Zero(drelu.rows(), drelu.cols()));
      const Eigen::MatrixXd dmid = dsum + apply_backward(blk.ff_in[i], gc.mid, dhidden, gblk.ff_in[i]);
      const Eigen::MatrixXd dpooled = layer_norm_backward(dmid, gc.pool_norm, blk.pool_norm[i], gblk.pool_norm[i]);
      const Eigen::MatrixXd dconcat = apply_backward(blk.pool[i], gc.concat, dpooled, gblk.pool[i]);
      dprev[i] += dpooled + dconcat.leftCols(d);

      const int l = static_cast<int>(gc.input.rows());
      for (int j = 0; j < kGroupCount; ++j) {
        const Eigen::MatrixXi& arg = gc.argmax[j];
        const auto dctx = dconcat.middleCols(d * (1 + j), d);
        const Eigen::MatrixXd& src = bc[j].input;
        if (!is_weighted(cfg, i, j)) {
          for (int r = 0; r < l; ++r) {
            for (int c = 0; c < d; ++c) {
              const int q = arg(r, c);
              if (q >= 0) dprev[j](q, c) += dctx(r, c);
            }
          }
          continue;
        }
        const int site = weight_site(i, j);
        const SpatialWeighting& w = blk.weighting[site];
        SpatialWeighting& gw = gblk.weighting[site];
        const Eigen::MatrixXd& dd = dist[i][j];
        for (int r = 0; r < l; ++r) {
          for (int c = 0; c < d; ++c) {
            const int q = arg(r, c);
            if (q < 0) continue;
            const double g = dctx(r, c);
            const double dist_rq = dd(r, q);
            const double e = std::exp(-w.c(c) * dist_rq);
            const double xv = src(q, c);
            dprev[j](q, c) += g * (w.a(c) * e + w.b(c));
            gw.a(c) += g * xv * e;
            gw.b(c) += g * xv;
            gw.c(c) += -g * xv * w.a(c) * dist_rq * e;
          }
        }
      }
    }
    dx = std::move(dprev);
  }

  const std::array<const Eigen::MatrixXd*, kGroupCount> features{&cache.input.salesmen, &cache.input.depot,
                                                                 &cache.input.cities};
  std::array<Eigen::MatrixXd, kGroupCount> dfeat;
  for (int g = 0; g < kGroupCount; ++g) {
    const Eigen::MatrixXd dpre =
        layer_norm_backward(dx[g], cache.embed_norm[g], params.embed_norm[g], grads.embed_norm[g]);
    dfeat[g] = apply_backward(params.embed[g], *features[g], dpre, grads.embed[g]);
  }
  if (input_grads) {
    input_grads->salesmen = std::move(dfeat[kS]);
    input_grads->depot = std::move(dfeat[kD]);
    input_grads->cities = std::move(dfeat[kC]);
  }
}

}  // namespace mtsp
