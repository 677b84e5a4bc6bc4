#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mtsp/error.hpp"
#include "mtsp/exact.hpp"
#include "mtsp/trainer.hpp"
#include "test_util.hpp"

using namespace mtsp;

namespace {

std::vector<LabeledSample> labeled(int count, int n, int m, std::uint64_t seed) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < count; ++i) {
    const Instance inst = generate_instance(n, m, seed + i);
    const ExactResult r = solve_exact(inst);
    out.push_back({inst, r.solution, r.cost});
  }
  return out;
}

NetworkConfig small_config() {
  NetworkConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.blocks = 2;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mtsp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("adam: defaults, zero gradients and a quadratic") {
  const AdamConfig c;
  CHECK(c.beta1 == 0.9);
  CHECK(c.beta2 == 0.999);
  CHECK(c.epsilon == 1e-8);
  CHECK(TrainConfig{}.batch_size == 128);
  CHECK(TrainConfig{}.adam.learning_rate == 1e-4);

  NetworkParams p = NetworkParams::initialize(small_config(), 1);
  const NetworkParams before = p;
  Adam adam;
  adam.step(p, NetworkParams::zeros_like(p));
  NetworkParams diff = p;
  diff.add_scaled(before, -1.0);
  CHECK(diff.squared_norm() == 0.0);

  // Oracle: the textbook recursion written out inline.
  double x = 1.0;
  double m1 = 0.0, m2 = 0.0, oracle = 1.0;
  Adam quad({0.1, 0.9, 0.999, 1e-8});
  int reached = -1;
  for (int t = 1; t <= 200; ++t) {
    const double g = 2.0 * x;
    double gx = g;
    std::span<double> px(&x, 1);
    std::span<const double> pg(&gx, 1);
    quad.step(std::span<const std::span<double>>(&px, 1), std::span<const std::span<const double>>(&pg, 1));
    const double go = 2.0 * oracle;
    m1 = 0.9 * m1 + 0.1 * go;
    m2 = 0.999 * m2 + 0.001 * go * go;
    oracle -= 0.1 * (m1 / (1 - std::pow(0.9, t))) / (std::sqrt(m2 / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(x == doctest::Approx(oracle).epsilon(1e-12));
    if (reached < 0 && std::abs(x) < 0.1) reached = t;
  }
  CHECK(reached > 0);
  CHECK(std::abs(x) < 0.1);

  double nan_grad = std::nan("");
  double y = 3.0;
  std::span<double> py(&y, 1);
  std::span<const double> pn(&nan_grad, 1);
  Adam bad;
  CHECK_THROWS_AS(bad.step(std::span<const std::span<double>>(&py, 1), std::span<const std::span<const double>>(&pn, 1)),
                  NumericError);
  CHECK(y == 3.0);
}

TEST_CASE("end-to-end gradient matches central differences") {
  const NetworkConfig cfg = small_config();
  NetworkParams p = NetworkParams::initialize(cfg, 2);
  const auto data = labeled(1, 6, 2, 40);
  const NetworkInput in = make_network_input(data[0].instance, cfg.d_svd);
  const Tensor3 target = encode_target(data[0].solution, 6);
  TrainConfig tc;
  tc.iterations = 20;
  NetworkParams grads = NetworkParams::zeros_like(p);
  const double loss = sample_loss(p, in, target, tc, &grads);
  CHECK(loss == doctest::Approx(sample_loss(p, in, target, tc, nullptr)).epsilon(1e-14));

  const double h = 1e-5;
  const auto analytic = grads.tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t e = 0; e < analytic[t].size(); ++e) {
      NetworkParams plus = p;
      NetworkParams minus = p;
      plus.tensors()[t][e] += h;
      minus.tensors()[t][e] -= h;
      const double fd = (sample_loss(plus, in, target, tc, nullptr) - sample_loss(minus, in, target, tc, nullptr)) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic[t][e]) / std::max(1.0, std::abs(analytic[t][e])));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("training memorizes a single sample") {
  const auto data = labeled(1, 6, 2, 50);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.epochs = 500;
  tc.adam.learning_rate = 1e-3;
  tc.iterations = 30;
  tc.threads = 1;
  NetworkConfig cfg = small_config();
  cfg.d_model = 16;
  cfg.d_ff = 32;
  const TrainResult r = train(data, {}, cfg, tc);
  REQUIRE(r.log.size() == 500);
  CHECK(r.log.back().step == 500);
  CHECK(r.log.back().mean_loss < 0.1 * r.log.front().mean_loss);
}

TEST_CASE("first batch loss equals an independent pipeline evaluation") {
  const auto data = labeled(6, 7, 2, 60);
  const NetworkConfig cfg = small_config();
  TrainConfig tc;
  tc.batch_size = 6;
  tc.epochs = 1;
  tc.iterations = 40;
  tc.seed = 77;
  const TrainResult r = train(data, {}, cfg, tc);

  const NetworkParams init = NetworkParams::initialize(cfg, 77);
  double total = 0.0;
  for (const auto& s : data) {
    const Tensor3 z = softassign(forward(init, make_network_input(s.instance, cfg.d_svd)), 40).z;
    total += invariant_loss(z, encode_target(s.solution, 7)).value;
  }
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].step == 1);
  CHECK(std::abs(r.log[0].mean_loss - total / 6) < 1e-12 * total);
  CHECK(std::isnan(r.log[0].validation_loss));
}

TEST_CASE("training is reproducible across thread counts and writes its artifacts") {
  auto data = labeled(10, 5, 2, 70);
  const auto more = labeled(8, 6, 1, 90);
  data.insert(data.end(), more.begin(), more.end());
  const auto val = labeled(4, 6, 2, 200);
  const auto dir1 = temp_dir("repro1");
  const auto dir3 = temp_dir("repro3");

  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 2;
  tc.iterations = 20;
  tc.adam.learning_rate = 1e-3;
  tc.threads = 1;
  tc.checkpoint_dir = dir1;
  tc.log_path = dir1 / "log.csv";
  const TrainResult a = train(data, val, small_config(), tc);
  tc.threads = 3;
  tc.checkpoint_dir = dir3;
  tc.log_path = dir3 / "log.csv";
  const TrainResult b = train(data, val, small_config(), tc);

  CHECK(read_bytes(dir1 / "epoch_0002.bin") == read_bytes(dir3 / "epoch_0002.bin"));
  CHECK(read_bytes(dir1 / "best.bin") == read_bytes(dir3 / "best.bin"));
  CHECK(a.log.back().step == 2 * (3 + 2));

  std::ifstream csv(dir1 / "log.csv");
  std::string header, row;
  std::getline(csv, header);
  CHECK(header == "epoch,step,mean_loss,validation_loss,wall_seconds");
  int rows = 0;
  while (std::getline(csv, row)) ++rows;
  CHECK(rows == 2);

  const NetworkParams loaded = load_checkpoint(dir1 / "best.bin");
  CHECK(loaded.config() == small_config());
  NetworkParams diff = loaded;
  diff.add_scaled(a.params, -1.0);
  CHECK(diff.squared_norm() == 0.0);
  (void)b;
}

TEST_CASE("early stopping and input errors") {
  const auto data = labeled(4, 5, 1, 300);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 20;
  tc.iterations = 10;
  tc.adam.learning_rate = 0.0;
  tc.patience = 3;
  const TrainResult r = train(data, data, small_config(), tc);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 1);
  CHECK(r.log.size() == 4);

  CHECK_THROWS_AS(train({}, {}, small_config(), tc), DataError);
  auto broken = data;
  broken[1].solution.routes[0].pop_back();
  CHECK_THROWS_AS(train(broken, {}, small_config(), tc), DataError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = temp_dir("ckpt");
  NetworkConfig cfg = small_config();
  cfg.leave_one_out = false;
  const NetworkParams p = NetworkParams::initialize(cfg, 5);
  save_checkpoint(dir / "a.bin", p);
  const std::string bytes = read_bytes(dir / "a.bin");
  CHECK(bytes.substr(0, 8) == "MTSPNET1");
  CHECK(bytes.size() == 8 + 7 * 8 + 8 * p.parameter_count());
  const NetworkParams q = load_checkpoint(dir / "a.bin");
  CHECK(q.config() == cfg);
  save_checkpoint(dir / "b.bin", q);
  CHECK(read_bytes(dir / "b.bin") == bytes);

  std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), DataError);
  std::ofstream(dir / "magic.bin", std::ios::binary) << "XTSPNET1" << bytes.substr(8);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), DataError);
}

TEST_CASE("evaluate") {
  const auto data = labeled(12, 7, 2, 400);
  const EvalReport oracle = evaluate_with(
      data, {1, 20}, [](const LabeledSample& s) { return encode_target(s.solution, s.instance.n()); });
  for (const auto& b : oracle.beams) {
    CHECK(b.mean_error == 0.0);
    CHECK(b.decoded == 12);
    CHECK(b.failures == 0);
  }

  const NetworkParams p = NetworkParams::initialize(small_config(), 6);
  const EvalReport base = evaluate(p, data, {1, 5});
  auto scaled = data;
  for (auto& s : scaled) {
    std::vector<Point> c = s.instance.coords();
    for (auto& pt : c) pt = {pt.x * 3.7, pt.y * 3.7};
    s.instance = Instance(c, s.instance.m());
    s.cost *= 3.7;
  }
  const EvalReport big = evaluate(p, scaled, {1, 5});
  for (int b = 0; b < 2; ++b) {
    CHECK(base.beams[b].mean_error >= 0.0);
    CHECK(std::abs(base.beams[b].mean_error - big.beams[b].mean_error) < 1e-9);
  }

  const EvalReport failing = evaluate_with(data, {3}, [](const LabeledSample& s) -> Tensor3 {
    if (s.instance.coord(0).x < 0.5) throw NumericError("boom");
    return Tensor3(s.instance.m(), s.instance.n(), 0.5);
  });
  CHECK(failing.beams[0].decoded + failing.beams[0].failures == 12);
  CHECK(failing.beams[0].failures > 0);
}
