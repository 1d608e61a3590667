#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sdeflow/common.hpp"
#include "sdeflow/evalkit.hpp"

using namespace sdeflow;

namespace {

constexpr double kTheta = 1.0, kMu = 1.2, kSigma = 0.3, kDt = 0.01;

/// Analytic OU transition over one step: an affine map of z.
IncrementSampler ou_transition() {
  const double decay = std::exp(-kTheta * kDt);
  const double s = kSigma * std::sqrt((1.0 - std::exp(-2.0 * kTheta * kDt)) / (2.0 * kTheta));
  return [=](std::span<const double> x, std::span<const double> z, std::span<double> out) {
    out[0] = (kMu + (x[0] - kMu) * decay - x[0]) + s * z[0];
  };
}

CurveOnGrid curve(std::vector<double> grid, std::vector<double> values) {
  CurveOnGrid c;
  c.grid = std::move(grid);
  c.values = std::move(values);
  c.std_error.assign(c.values.size(), 0.0);
  c.n_samples_per_point.assign(c.values.size(), 0);
  return c;
}

TrajectoryBatch constant_batch(std::size_t paths, std::size_t steps, std::vector<double> x) {
  TrajectoryBatch b;
  b.paths = paths;
  b.steps = steps;
  b.dim = x.size();
  b.dt = kDt;
  for (std::size_t i = 0; i < paths * (steps + 1); ++i) b.data.insert(b.data.end(), x.begin(), x.end());
  return b;
}

}  // namespace

TEST_CASE("grids and ranges") {
  const auto g = uniform_grid(0.5, 2.0, 4);
  CHECK(g == std::vector<double>{0.5, 1.0, 1.5, 2.0});
  CHECK_THROWS(uniform_grid(1.0, 1.0, 10));
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 0.0);
  std::reverse(v.begin(), v.end());
  const auto [lo, hi] = central_range(v);
  CHECK(lo == doctest::Approx(5.0));
  CHECK(hi == doctest::Approx(95.0));
}

TEST_CASE("model-based coefficients of the analytic OU transition") {
  const auto grid = uniform_grid(0.5, 2.0, 16);
  const EffectiveCoefficients c =
      effective_coeffs_from_model(ou_transition(), grid, 100'000, kDt, EffectiveVariant::standard, 1);
  const double theta_eff = (1.0 - std::exp(-kTheta * kDt)) / kDt;
  const double b_eff =
      kSigma * std::sqrt((1.0 - std::exp(-2.0 * kTheta * kDt)) / (2.0 * kTheta * kDt));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(std::abs(c.drift.values[g] - theta_eff * (kMu - grid[g])) <= 3.0 * c.drift.std_error[g]);
    CHECK(std::abs(c.diffusion.values[g] - b_eff) <= 3.0 * c.diffusion.std_error[g]);
    CHECK(c.drift.n_samples_per_point[g] == 100'000);
  }
}

TEST_CASE("zero model has zero coefficients") {
  const IncrementSampler zero = [](std::span<const double>, std::span<const double>,
                                   std::span<double> out) { out[0] = 0.0; };
  const auto grid = uniform_grid(-1.0, 1.0, 5);
  const auto c = effective_coeffs_from_model(zero, grid, 1000, kDt, EffectiveVariant::standard, 2);
  for (std::size_t g = 0; g < 5; ++g) {
    CHECK(c.drift.values[g] == 0.0);
    CHECK(c.diffusion.values[g] == 0.0);
  }
  CHECK_THROWS(effective_coeffs_from_model(zero, grid, 999, kDt, EffectiveVariant::standard, 2));
}

TEST_CASE("model-based coefficients are pure and worker independent") {
  const auto grid = uniform_grid(0.5, 2.0, 9);
  const auto a = effective_coeffs_from_model(ou_transition(), grid, 2000, kDt,
                                             EffectiveVariant::standard, 3, 1);
  const auto b = effective_coeffs_from_model(ou_transition(), grid, 2000, kDt,
                                             EffectiveVariant::standard, 3, 4);
  CHECK(a.drift.values == b.drift.values);
  CHECK(a.diffusion.values == b.diffusion.values);
}

TEST_CASE("lognormal variant against the exact simulator") {
  const SdeSpec spec = make_benchmark("lognormal_noise");
  const auto grid = uniform_grid(0.2, 1.5, 8);
  const auto est = effective_coeffs_from_model(exact_flow_sampler(spec, kDt), grid, 200'000, kDt,
                                               EffectiveVariant::lognormal, 4);
  const auto truth = exact_effective_coeffs(spec, grid, kDt);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(std::abs(est.drift.values[g] - truth.drift.values[g]) <= 4.0 * est.drift.std_error[g]);
    CHECK(std::abs(est.diffusion.values[g] - truth.diffusion.values[g]) <=
          4.0 * est.diffusion.std_error[g]);
  }
  const IncrementSampler collapse = [](std::span<const double> x, std::span<const double>,
                                       std::span<double> out) { out[0] = -2.0 * x[0]; };
  CHECK_THROWS_AS(effective_coeffs_from_model(collapse, grid, 1000, kDt,
                                              EffectiveVariant::lognormal, 4),
                  NumericalError);
  const std::vector<double> bad{-0.1, 0.5};
  CHECK_THROWS(effective_coeffs_from_model(collapse, bad, 1000, kDt, EffectiveVariant::lognormal, 4));
}

TEST_CASE("exponential-noise effective drift through the exact simulator") {
  const SdeSpec spec = make_benchmark("exp_noise");
  const auto grid = uniform_grid(0.2, 0.9, 6);
  const auto est = effective_coeffs_from_model(exact_flow_sampler(spec, kDt), grid, 200'000, kDt,
                                               EffectiveVariant::standard, 5);
  const auto truth = exact_effective_coeffs(spec, grid, kDt);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(std::abs(est.drift.values[g] - truth.drift.values[g]) <= 4.0 * est.drift.std_error[g]);
    CHECK(std::abs(est.diffusion.values[g] - truth.diffusion.values[g]) <=
          4.0 * est.diffusion.std_error[g]);
  }
}

TEST_CASE("binned coefficients of deterministic increments") {
  ObservationSet obs;
  obs.dim = 1;
  obs.dt = kDt;
  Rng rng(6, 0);
  for (int m = 0; m < 20'000; ++m) {
    obs.x.push_back(rng.uniform(-1.0, 1.0));
    obs.dx.push_back(0.7 * kDt);
  }
  const auto c = effective_coeffs_from_trajectories(obs, 10, 200);
  CHECK(c.drift.grid.size() == 10);
  for (std::size_t i = 0; i < c.drift.values.size(); ++i) {
    CHECK(c.drift.values[i] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(c.diffusion.values[i] <= 1e-12);
  }
}

TEST_CASE("binned coefficients of OU simulator pairs") {
  const SdeSpec ou = make_benchmark("ou1d");
  const ObservationSet obs =
      build_observation_set(simulate(ou, {{0.0}, {2.5}}, 10'000, 100, kDt, 7));
  REQUIRE(obs.size() == 1'000'000);
  const auto c = effective_coeffs_from_trajectories(obs, 40, 200);
  CHECK(c.drift.grid.size() == 40);
  for (std::size_t i = 0; i < c.drift.grid.size(); ++i) {
    const double x = c.drift.grid[i];
    CHECK(std::abs(c.drift.values[i] - kTheta * (kMu - x)) <= 3.0 * c.drift.std_error[i]);
    CHECK(std::abs(c.diffusion.values[i] - kSigma) <= 3.0 * c.diffusion.std_error[i]);
  }

  ObservationSet shuffled = obs;
  std::vector<std::size_t> perm(obs.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(8, 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.x[i] = obs.x[perm[i]];
    shuffled.dx[i] = obs.dx[perm[i]];
  }
  const auto s = effective_coeffs_from_trajectories(shuffled, 40, 200);
  CHECK(s.drift.values == c.drift.values);
  CHECK(s.diffusion.values == c.diffusion.values);
  CHECK_THROWS_AS(effective_coeffs_from_trajectories(obs, 40, 10'000'000), std::runtime_error);
}

TEST_CASE("model-based and binned estimators agree on one surrogate") {
  const IncrementSampler flow = ou_transition();
  const TrajectoryBatch ens = simulate_surrogate(flow, 1, kDt, std::vector<double>{1.5}, 400, 20'000, 9);
  const auto binned = effective_coeffs_from_trajectories(ens, 20, 2000);
  const auto model = effective_coeffs_from_model(flow, binned.drift.grid, 100'000, kDt,
                                                 EffectiveVariant::standard, 10);
  for (std::size_t i = 0; i < binned.drift.grid.size(); ++i) {
    const double se_a = std::hypot(binned.drift.std_error[i], model.drift.std_error[i]);
    const double se_b = std::hypot(binned.diffusion.std_error[i], model.diffusion.std_error[i]);
    // Half a bin of drift slope covers the within-bin offset of the state.
    const double width = binned.drift.grid.size() > 1 ? binned.drift.grid[1] - binned.drift.grid[0] : 0.0;
    CHECK(std::abs(binned.drift.values[i] - model.drift.values[i]) <= 4.0 * se_a + 0.5 * width);
    CHECK(std::abs(binned.diffusion.values[i] - model.diffusion.values[i]) <= 4.0 * se_b);
  }
}

TEST_CASE("relative curve error") {
  const auto t = curve({0.0, 1.0, 2.0}, {1.0, -2.0, 0.5});
  CHECK(relative_curve_error(t, t) == 0.0);
  CHECK(relative_curve_error(t, curve({0.0, 1.0, 2.0}, {2.0, -4.0, 1.0})) == doctest::Approx(1.0));
  CHECK(relative_curve_error(t, curve({0.0, 1.0, 2.0}, {1.0, -2.0, 0.0})) ==
        doctest::Approx(0.5 / std::sqrt(1.0 + 4.0 + 0.25)));
  CHECK_THROWS(relative_curve_error(curve({0.0, 1.0}, {0.0, 0.0}), curve({0.0, 1.0}, {1.0, 1.0})));
  CHECK_THROWS(relative_curve_error(t, curve({0.0, 1.5, 2.0}, {1.0, -2.0, 0.5})));
}

TEST_CASE("moments of constant and OU ensembles") {
  const TrajectoryBatch c = constant_batch(1, 5, {0.25, -1.0});
  const MomentSeries mc = ensemble_moments(c);
  CHECK(mc.times.size() == 6);
  CHECK(mc.mean_at(3)[1] == -1.0);
  CHECK(mc.std_at(3)[0] == 0.0);
  CHECK(mc.index_of(0.05) == 5);
  CHECK_THROWS_AS(mc.index_of(0.055), std::out_of_range);

  const SdeSpec ou = make_benchmark("ou1d");
  const std::size_t n = 50'000;
  const TrajectoryBatch b = simulate(ou, InitialDistribution::point({1.5}), n, 400, kDt, 11);
  const MomentSeries m = ensemble_moments(b);
  const oracle::Ou law{kTheta, kMu, kSigma};
  double worst = 0.0;
  for (std::size_t l = 1; l <= 400; ++l) {
    const double se = m.std_at(l)[0] / std::sqrt(double(n));
    worst = std::max(worst, std::abs(m.mean_at(l)[0] - law.mean(1.5, m.times[l])) / se);
    CHECK(m.std_at(l)[0] >= 0.0);
  }
  CHECK(worst <= 4.0);
}

TEST_CASE("moments skip failed paths") {
  TrajectoryBatch b = constant_batch(3, 2, {1.0});
  for (std::size_t l = 0; l < 3; ++l) b.state(1, l)[0] = std::numeric_limits<double>::quiet_NaN();
  b.failed_paths = {1};
  const MomentSeries m = ensemble_moments(b);
  CHECK(m.n_paths == 2);
  CHECK(m.mean_at(2)[0] == 1.0);
}

TEST_CASE("endpoint errors") {
  const SdeSpec ou2 = make_benchmark("ou2d");
  const TrajectoryBatch a = simulate(ou2, InitialDistribution::point({0.3, 0.4}), 4000, 100, kDt, 12);
  const MomentSeries ma = ensemble_moments(a);
  const EndpointErrors same = endpoint_moment_errors(ma, ma, 1.0);
  CHECK(same.mean_error == 0.0);
  CHECK(same.std_error == 0.0);
  CHECK(ma.times.size() == 101);
  CHECK(ma.mean.size() == 202);

  // Two disjoint halves of one ensemble.
  const SdeSpec ou = make_benchmark("ou1d");
  const std::size_t n = 40'000;
  const TrajectoryBatch full = simulate(ou, InitialDistribution::point({1.5}), n, 400, kDt, 13);
  TrajectoryBatch h1 = full, h2 = full;
  const std::size_t half = n / 2, row = full.times();
  h1.paths = h2.paths = half;
  h1.data.assign(full.data.begin(), full.data.begin() + half * row);
  h2.data.assign(full.data.begin() + half * row, full.data.end());
  const MomentSeries m1 = ensemble_moments(h1), m2 = ensemble_moments(h2);
  const EndpointErrors e = endpoint_moment_errors(m1, m2, 4.0);
  const double sd = m1.std_at(400)[0];
  CHECK(e.mean_error <= 3.0 * sd * std::sqrt(2.0 / half));
  CHECK(e.std_error <= 3.0 * sd * std::sqrt(1.0 / half));
  CHECK_THROWS(endpoint_moment_errors(m1, m2, 4.005));
}

TEST_CASE("kernel density estimates") {
  const std::vector<double> two{-1.0, 1.0};
  const std::vector<double> g{-0.5, 0.0, 0.5};
  const auto d = kde_density(two, g, 1.0);
  CHECK(d[0] == doctest::Approx(d[2]).epsilon(1e-15));
  const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * oracle::kPi);
  CHECK(d[1] == doctest::Approx(phi1).epsilon(1e-14));

  Rng rng(14, 0);
  std::vector<double> s(100'000);
  for (double& v : s) v = rng.normal();
  const double h = silverman_bandwidth(s);
  CHECK(h == doctest::Approx(1.06 * oracle::stdev(s) * std::pow(1e5, -0.2)).epsilon(1e-4));
  const auto grid = uniform_grid(-3.0, 3.0, 121);
  const auto dens = kde_density(s, grid);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double phi = std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2.0 * oracle::kPi);
    worst = std::max(worst, std::abs(dens[i] - phi));
  }
  CHECK(worst <= 0.01);

  const std::vector<double> few{0.1, 0.4, 0.45, 2.0, -1.0};
  const double hb = silverman_bandwidth(few);
  const auto wide = uniform_grid(-1.0 - 4.0 * hb, 2.0 + 4.0 * hb, 4001);
  const auto fd = kde_density(few, wide);
  double integral = 0.0;
  for (std::size_t i = 1; i < wide.size(); ++i) integral += 0.5 * (fd[i] + fd[i - 1]) * (wide[i] - wide[i - 1]);
  CHECK(std::abs(integral - 1.0) <= 1e-2);
  for (double v : fd) CHECK(v >= 0.0);

  const std::vector<double> flat{0.3, 0.3, 0.3};
  CHECK_THROWS(kde_density(flat, g));
  CHECK_THROWS(kde_density(std::vector<double>{1.0}, g));
  CHECK(kde_density(flat, g, 0.5)[0] > 0.0);
}

TEST_CASE("distribution distances") {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4};
  const auto uniform_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_statistic(s, uniform_cdf) == doctest::Approx(0.6));
  CHECK(ks_two_sample(s, s) == 0.0);
  CHECK(ks_two_sample(s, std::vector<double>{5.0, 6.0}) == 1.0);
  CHECK(ks_two_sample(std::vector<double>{1.0, 2.0}, std::vector<double>{1.5}) == doctest::Approx(0.5));
  CHECK(tv_distance(s, s) == 0.0);
  CHECK(tv_distance(std::vector<double>{0.0, 0.1}, std::vector<double>{5.0, 5.1}, 10) == 1.0);

  Rng rng(15, 0);
  std::vector<double> n(20'000);
  for (double& v : n) v = rng.normal();
  CHECK(ks_statistic(n, [](double x) { return oracle::normal_cdf(x); }) <= 1.36 / std::sqrt(20'000.0));
}

TEST_CASE("well occupancy") {
  TrajectoryBatch b = constant_batch(4, 2, {1.0});
  b.state(0, 2)[0] = -1.0;
  const WellOccupancy w = well_occupancy(b, 0.02);
  CHECK(w.left == 0.25);
  CHECK(w.right == 0.75);
  CHECK_THROWS(well_occupancy(b, 0.5));
}

TEST_CASE("exact flow sampler reproduces the simulator step") {
  const SdeSpec ou = make_benchmark("ou1d");
  const IncrementSampler s = exact_flow_sampler(ou, kDt);
  const double x = 1.5, z = 0.7;
  double y = 0.0;
  s({&x, 1}, {&z, 1}, {&y, 1});
  CHECK(y == doctest::Approx(kTheta * (kMu - x) * kDt + kSigma * std::sqrt(kDt) * z).epsilon(1e-14));
}
