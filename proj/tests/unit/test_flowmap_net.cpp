#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sdeflow/common.hpp"
#include "sdeflow/flowmap_net.hpp"

using namespace sdeflow;

namespace {

FlowMapModel random_model(std::size_t d, std::size_t h, Activation act, std::uint64_t seed) {
  FlowMapModel m = FlowMapModel::zeros(d, h, 0.01);
  m.activation = act;
  Rng rng(seed, 0);
  for (double& p : m.params) p = rng.uniform(-1.0, 1.0);
  return m;
}

TrainingData random_training_data(std::size_t d, std::size_t n, std::uint64_t seed) {
  TrainingData data;
  data.in_dim = 2 * d;
  data.out_dim = d;
  Rng rng(seed, 1);
  for (std::size_t i = 0; i < n * 2 * d; ++i) data.inputs.push_back(rng.normal());
  for (std::size_t i = 0; i < n * d; ++i) data.targets.push_back(rng.normal());
  return data;
}

/// Labels from the exact OU transition: y = theta'(mu - x) dt + sigma_eff z.
LabeledSet ou_exact_labels(std::size_t J, std::uint64_t seed, double scale = 1.0) {
  const double theta = 1.0, mu = 1.2, sigma = 0.3, dt = 0.01;
  const double decay = std::exp(-theta * dt);
  const double s_eff = sigma * std::sqrt((1.0 - std::exp(-2.0 * theta * dt)) / (2.0 * theta));
  LabeledSet l;
  l.dim = 1;
  l.meta.dt = dt;
  Rng rng(seed, 0);
  for (std::size_t j = 0; j < J; ++j) {
    const double x = rng.uniform(0.0, 2.5);
    const double z = rng.normal();
    l.x.push_back(scale * x);
    l.z.push_back(z);
    l.y.push_back(scale * ((mu + (x - mu) * decay - x) + s_eff * z));
  }
  return l;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

TEST_CASE("parameter layout") {
  const FlowMapModel m = FlowMapModel::zeros(3, 8, 0.01);
  CHECK(FlowMapModel::parameter_count(3, 8) == 6 * 8 + 8 + 8 * 3 + 3);
  CHECK(m.params.size() == FlowMapModel::parameter_count(3, 8));
  CHECK(m.b1_offset() == 48);
  CHECK(m.w2_offset() == 56);
  CHECK(m.b2_offset() == 80);
}

TEST_CASE("gradient matches central finite differences") {
  for (Activation act : {Activation::tanh, Activation::relu}) {
    for (std::size_t d = 1; d <= 3; ++d) {
      for (std::size_t h : {1u, 3u, 8u}) {
        FlowMapModel m = random_model(d, h, act, 10 * d + h);
        const TrainingData data = random_training_data(d, 7, d + h);
        const auto rows = all_rows(7);
        std::vector<double> grad;
        loss_and_gradient(m, data, rows, &grad);
        REQUIRE(grad.size() == m.params.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < m.params.size(); ++i) {
          const double keep = m.params[i];
          const double eps = 1e-6 * std::max(1.0, std::abs(keep));
          m.params[i] = keep + eps;
          const double up = loss_and_gradient(m, data, rows, nullptr);
          m.params[i] = keep - eps;
          const double down = loss_and_gradient(m, data, rows, nullptr);
          m.params[i] = keep;
          const double fd = (up - down) / (2.0 * eps);
          worst = std::max(worst, std::abs(grad[i] - fd) / std::max(std::abs(fd), 1e-3));
        }
        CAPTURE(d);
        CAPTURE(h);
        CHECK(worst <= 1e-5);
      }
    }
  }
}

TEST_CASE("zero network predicts zero and freezes trajectories") {
  const FlowMapModel m = FlowMapModel::zeros(2, 4, 0.01);
  const std::vector<double> x{0.3, -0.4}, z{1.0, 2.0};
  CHECK(m.predict(x, z) == std::vector<double>{0.0, 0.0});
  CHECK(predict_increment(m, x, z) == std::vector<double>{0.0, 0.0});
  const TrajectoryBatch b = simulate_surrogate(m, x, 20, 5, 1);
  for (std::size_t p = 0; p < 5; ++p) {
    for (std::size_t l = 0; l <= 20; ++l) {
      CHECK(b.state(p, l)[0] == 0.3);
      CHECK(b.state(p, l)[1] == -0.4);
    }
  }
}

TEST_CASE("scaler round trip and degenerate spread") {
  const std::vector<double> rows{1.0, 5.0, 3.0, 5.0, 2.0, 5.0};
  const std::vector<std::size_t> sel{0, 1, 2};
  const AffineScaler s = AffineScaler::fit(rows, 2, sel);
  CHECK(s.mean[0] == doctest::Approx(2.0));
  CHECK(s.stdev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.mean[1] == 5.0);
  CHECK(s.stdev[1] == 1.0);
  Rng rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> v{1e3 * rng.normal(), rng.normal()};
    std::vector<double> u(2), back(2);
    s.apply(v, u);
    s.invert(u, back);
    CHECK(std::abs(back[0] - v[0]) <= 1e-12 * std::max(1.0, std::abs(v[0])));
    CHECK(std::abs(back[1] - v[1]) <= 1e-12);
  }
}

TEST_CASE("split is a deterministic partition") {
  const auto [tr, va] = split_rows(101, 0.8, 7);
  CHECK(tr.size() == 81);
  CHECK(va.size() == 20);
  std::vector<std::size_t> all = tr;
  all.insert(all.end(), va.begin(), va.end());
  std::sort(all.begin(), all.end());
  CHECK(all == all_rows(101));
  CHECK(split_rows(101, 0.8, 7) == std::make_pair(tr, va));
  CHECK(split_rows(101, 0.8, 8) != std::make_pair(tr, va));
  const auto [one, none] = split_rows(1, 0.8, 7);
  CHECK(one.size() == 1);
  CHECK(none.empty());
}

TEST_CASE("a single label is interpolated") {
  LabeledSet l;
  l.dim = 1;
  l.meta.dt = 0.01;
  l.x = {1.3};
  l.z = {-0.4};
  l.y = {0.027};
  TrainOptions opt;
  opt.widths = {16};
  opt.seed = 1;
  const FlowMapModel m = train(l, opt);
  CHECK(prediction_mse(m, l, all_rows(1)) <= 1e-6);
  CHECK(std::abs(m.predict(l.x, l.z)[0] - 0.027) <= 1e-3);
}

TEST_CASE("zero targets give a zero map") {
  LabeledSet l = ou_exact_labels(300, 4);
  std::fill(l.y.begin(), l.y.end(), 0.0);
  TrainOptions opt;
  opt.widths = {16};
  opt.seed = 1;
  // Run to convergence: Adam at lr 0.01 leaves a max error of a few 1e-3 after 2000 epochs.
  opt.epochs = 20000;
  const FlowMapModel m = train(l, opt);
  const auto [tr, va] = split_rows(l.size(), opt.split, opt.seed);
  double worst = 0.0;
  for (std::size_t r : va) {
    worst = std::max(worst, std::abs(m.predict(std::vector<double>{l.x[r]},
                                               std::vector<double>{l.z[r]})[0]));
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("exact OU flow map is learned") {
  const LabeledSet l = ou_exact_labels(2000, 6);
  TrainOptions opt;
  opt.widths = {16};
  opt.seed = 2;
  const FlowMapModel m = train(l, opt);
  const auto [tr, va] = split_rows(l.size(), opt.split, opt.seed);
  CHECK(std::sqrt(prediction_mse(m, l, va)) <= 1e-3);

  // E_z[G(1.5, z)] by trapezoid quadrature against the normal density. Sampling z would
  // add a Monte Carlo error of sigma_eff / (dt sqrt(n)), larger than the tolerance at n = 1e5.
  const double theta_eff = (1.0 - std::exp(-0.01)) / 0.01;
  double expectation = 0.0;
  const double h = 1e-3;
  for (int i = -8000; i <= 8000; ++i) {
    const double z = i * h;
    const double w = (i == -8000 || i == 8000 ? 0.5 : 1.0) * h * std::exp(-0.5 * z * z) /
                     std::sqrt(2.0 * oracle::kPi);
    expectation += w * m.predict(std::vector<double>{1.5}, std::vector<double>{z})[0];
  }
  CHECK(std::abs(expectation / 0.01 - theta_eff * (1.2 - 1.5)) <= 5e-3);
}

TEST_CASE("training is deterministic and keeps its best checkpoint") {
  const LabeledSet l = ou_exact_labels(400, 8);
  TrainOptions opt;
  opt.widths = {4, 8};
  opt.epochs = 300;
  opt.seed = 3;
  opt.workers = 1;
  const FlowMapModel a = train(l, opt);
  opt.workers = 2;
  const FlowMapModel b = train(l, opt);
  CHECK(a.params == b.params);
  CHECK(a.hidden == b.hidden);
  CHECK(a.meta.width_scores.size() == 2);
  CHECK(a.meta.best_val_loss <= a.meta.final_val_loss);
  for (const auto& [w, s] : a.meta.width_scores) CHECK(a.meta.best_val_loss <= s);

  // The stored score is the validation MSE of the returned parameters.
  const auto [tr, va] = split_rows(l.size(), opt.split, opt.seed);
  const double mse = prediction_mse(a, l, va);
  const double scale = a.out_scaler.stdev[0];
  CHECK(mse == doctest::Approx(a.meta.best_val_loss * scale * scale).epsilon(1e-9));
}

TEST_CASE("mini-batches train too") {
  const LabeledSet l = ou_exact_labels(500, 9);
  TrainOptions opt;
  opt.widths = {8};
  opt.epochs = 100;
  opt.batch = 64;
  const FlowMapModel m = train(l, opt);
  CHECK(m.meta.batch == 64);
  CHECK(m.meta.best_val_loss < 0.5);
  CHECK(train(l, opt).params == m.params);
}

TEST_CASE("standardization makes training scale-equivariant") {
  const LabeledSet base = ou_exact_labels(500, 10);
  const LabeledSet big = ou_exact_labels(500, 10, 10.0);
  TrainOptions opt;
  opt.widths = {8};
  opt.epochs = 400;
  const FlowMapModel a = train(base, opt);
  const FlowMapModel b = train(big, opt);
  double se = 0.0;
  std::size_t n = 0;
  for (double x = 0.0; x <= 2.5; x += 0.05) {
    for (double z = -2.0; z <= 2.0; z += 0.5) {
      const double pa = a.predict(std::vector<double>{x}, std::vector<double>{z})[0];
      const double pb = b.predict(std::vector<double>{10.0 * x}, std::vector<double>{z})[0] / 10.0;
      se += (pa - pb) * (pa - pb);
      ++n;
    }
  }
  CHECK(std::sqrt(se / n) <= 1e-3);
}

TEST_CASE("divergent labels are reported") {
  LabeledSet l = ou_exact_labels(20, 11);
  l.y[3] = std::numeric_limits<double>::infinity();
  TrainOptions opt;
  opt.widths = {4};
  opt.epochs = 5;
  CHECK_THROWS_AS(train(l, opt), NumericalError);
}

TEST_CASE("surrogate simulation records failed paths") {
  // Increments explode once the state leaves [-1, 1].
  const IncrementSampler sampler = [](std::span<const double> x, std::span<const double> z,
                                      std::span<double> out) {
    out[0] = std::abs(x[0]) > 1.0 ? std::numeric_limits<double>::quiet_NaN() : 0.3 * z[0];
  };
  const std::vector<double> x0{0.0};
  const TrajectoryBatch a = simulate_surrogate(sampler, 1, 0.01, x0, 50, 40, 12, 1);
  const TrajectoryBatch b = simulate_surrogate(sampler, 1, 0.01, x0, 50, 40, 12, 4);
  CHECK(!a.failed_paths.empty());
  CHECK(a.failed_paths == b.failed_paths);
  CHECK(std::is_sorted(a.failed_paths.begin(), a.failed_paths.end()));
  const std::size_t f = a.failed_paths.front();
  CHECK(std::isnan(a.state(f, 50)[0]));
  for (std::size_t p = 0; p < 40; ++p) {
    if (std::find(a.failed_paths.begin(), a.failed_paths.end(), p) == a.failed_paths.end()) {
      CHECK(std::isfinite(a.state(p, 50)[0]));
    }
  }
}

TEST_CASE("surrogate simulation is deterministic") {
  const FlowMapModel m = random_model(1, 4, Activation::tanh, 13);
  FlowMapModel small = m;
  for (double& p : small.params) p *= 0.01;
  const std::vector<double> x0{0.5};
  const TrajectoryBatch a = simulate_surrogate(small, x0, 30, 64, 9, 1);
  const TrajectoryBatch b = simulate_surrogate(small, x0, 30, 64, 9, 8);
  CHECK(a.data == b.data);
  CHECK(simulate_surrogate(small, x0, 30, 64, 10, 1).data != a.data);
}

TEST_CASE("activation names") {
  CHECK(parse_activation("tanh") == Activation::tanh);
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK(std::string(activation_name(Activation::relu)) == "relu");
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}
