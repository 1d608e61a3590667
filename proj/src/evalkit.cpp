#include "sdeflow/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

#include "sdeflow/common.hpp"
#include "sdeflow/parallel.hpp"
#include "sdeflow/random.hpp"

namespace sdeflow {

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_grid: need n >= 2 and hi > lo");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  g.back() = hi;
  return g;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

struct MeanStd {
  double mean;
  double sd;     // sample standard deviation
  double sd_se;  // delta-method standard error of sd from the fourth central moment
};

// Sums in sorted order so the result does not depend on input order.
MeanStd sorted_mean_std(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / n;
  double ss = 0.0;
  double s4 = 0.0;
  for (double x : v) {
    const double d2 = (x - mean) * (x - mean);
    ss += d2;
    s4 += d2 * d2;
  }
  if (v.size() < 2) return {mean, 0.0, 0.0};
  const double var = ss / (n - 1.0);
  const double m2 = ss / n;
  const double m4 = s4 / n;
  const double se = var > 0.0 ? std::sqrt(std::max(0.0, m4 - m2 * m2) / (4.0 * var * n)) : 0.0;
  return {mean, std::sqrt(var), se};
}

CurveOnGrid make_curve(std::span<const double> grid) {
  CurveOnGrid c;
  c.grid.assign(grid.begin(), grid.end());
  c.values.assign(grid.size(), 0.0);
  c.std_error.assign(grid.size(), 0.0);
  c.n_samples_per_point.assign(grid.size(), 0);
  return c;
}

}  // namespace

std::pair<double, double> central_range(std::span<const double> values, double lower, double upper) {
  if (values.empty()) throw std::invalid_argument("central_range: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile_sorted(sorted, lower), quantile_sorted(sorted, upper)};
}

EffectiveCoefficients effective_coeffs_from_model(const IncrementSampler& sampler,
                                                  std::span<const double> grid, std::size_t n_z,
                                                  double dt, EffectiveVariant variant,
                                                  std::uint64_t seed, std::size_t workers) {
  if (n_z < 1000) throw std::invalid_argument("effective_coeffs_from_model: n_z must be at least 1000");
  if (!(dt > 0.0)) throw std::invalid_argument("effective_coeffs_from_model: dt must be positive");
  if (variant == EffectiveVariant::lognormal) {
    for (double x : grid) {
      if (!(x > 0.0)) throw std::invalid_argument("lognormal effective coefficients need x > 0");
    }
  }
  EffectiveCoefficients out{make_curve(grid), make_curve(grid)};
  parallel_chunks(grid.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> samples(n_z);
    double z = 0.0;
    double y = 0.0;
    for (std::size_t g = begin; g < end; ++g) {
      Rng rng(seed, g);
      const double x = grid[g];
      for (std::size_t i = 0; i < n_z; ++i) {
        z = rng.normal();
        sampler({&x, 1}, {&z, 1}, {&y, 1});
        samples[i] = y;
      }
      const MeanStd ms = sorted_mean_std(samples);
      const double n = static_cast<double>(n_z);
      if (variant == EffectiveVariant::standard) {
        out.drift.values[g] = ms.mean / dt;
        out.drift.std_error[g] = ms.sd / std::sqrt(n) / dt;
        out.diffusion.values[g] = ms.sd / std::sqrt(dt);
      } else {
        const double ratio = (ms.mean + x) / x;
        if (!(ratio > 0.0)) {
          throw NumericalError("lognormal effective drift: nonpositive expectation at x=" +
                               std::to_string(x));
        }
        out.drift.values[g] = std::log(ratio) / dt;
        out.drift.std_error[g] = ms.sd / (x * std::sqrt(n)) / (ratio * dt);
        out.diffusion.values[g] = ms.sd;
      }
      out.diffusion.std_error[g] =
          variant == EffectiveVariant::standard ? ms.sd_se / std::sqrt(dt) : ms.sd_se;
      out.drift.n_samples_per_point[g] = n_z;
      out.diffusion.n_samples_per_point[g] = n_z;
      if (!std::isfinite(out.drift.values[g]) || !std::isfinite(out.diffusion.values[g])) {
        throw NumericalError("effective coefficients: non-finite value at x=" + std::to_string(x));
      }
    }
  });
  return out;
}

EffectiveCoefficients exact_effective_coeffs(const SdeSpec& spec, std::span<const double> grid,
                                             double dt) {
  if (!spec.effective_drift || !spec.effective_diffusion) {
    throw std::invalid_argument("benchmark '" + spec.name + "' has no closed-form effective coefficients");
  }
  EffectiveCoefficients out{make_curve(grid), make_curve(grid)};
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out.drift.values[g] = spec.effective_drift(grid[g], dt);
    out.diffusion.values[g] = spec.effective_diffusion(grid[g], dt);
  }
  return out;
}

EffectiveCoefficients effective_coeffs_from_trajectories(const ObservationSet& pairs,
                                                         std::size_t bins, std::size_t min_count) {
  if (pairs.dim != 1) throw std::invalid_argument("binned effective coefficients need a 1D state");
  if (bins < 2) throw std::invalid_argument("binned effective coefficients need at least 2 bins");
  if (!(pairs.dt > 0.0)) throw std::invalid_argument("binned effective coefficients need dt > 0");
  const std::size_t M = pairs.size();
  if (M == 0) throw std::invalid_argument("binned effective coefficients: no pairs");

  const auto [lo, hi] = central_range(pairs.x);
  if (!(hi > lo)) throw std::runtime_error("binned effective coefficients: degenerate state range");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::vector<double>> per_bin(bins);
  for (std::size_t m = 0; m < M; ++m) {
    const double x = pairs.x[m];
    if (x < lo || x > hi) continue;
    const std::size_t b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
    per_bin[b].push_back(pairs.dx[m]);
  }

  EffectiveCoefficients out;
  for (std::size_t b = 0; b < bins; ++b) {
    auto& v = per_bin[b];
    if (v.size() < min_count || v.size() < 2) continue;
    const MeanStd ms = sorted_mean_std(v);
    const double n = static_cast<double>(v.size());
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    out.drift.grid.push_back(center);
    out.drift.values.push_back(ms.mean / pairs.dt);
    out.drift.std_error.push_back(ms.sd / std::sqrt(n) / pairs.dt);
    out.drift.n_samples_per_point.push_back(v.size());
    out.diffusion.grid.push_back(center);
    out.diffusion.values.push_back(ms.sd / std::sqrt(pairs.dt));
    out.diffusion.std_error.push_back(ms.sd_se / std::sqrt(pairs.dt));
    out.diffusion.n_samples_per_point.push_back(v.size());
  }
  if (out.drift.grid.empty()) {
    throw std::runtime_error("binned effective coefficients: no bin reaches min_count=" +
                             std::to_string(min_count));
  }
  return out;
}

EffectiveCoefficients effective_coeffs_from_trajectories(const TrajectoryBatch& ensemble,
                                                         std::size_t bins, std::size_t min_count) {
  if (!ensemble.failed_paths.empty()) {
    TrajectoryBatch clean;
    clean.steps = ensemble.steps;
    clean.dim = ensemble.dim;
    clean.dt = ensemble.dt;
    std::size_t next_failed = 0;
    for (std::size_t p = 0; p < ensemble.paths; ++p) {
      if (next_failed < ensemble.failed_paths.size() && ensemble.failed_paths[next_failed] == p) {
        ++next_failed;
        continue;
      }
      const auto begin = ensemble.data.begin() + static_cast<std::ptrdiff_t>(p * ensemble.times() * ensemble.dim);
      clean.data.insert(clean.data.end(), begin, begin + static_cast<std::ptrdiff_t>(ensemble.times() * ensemble.dim));
      ++clean.paths;
    }
    return effective_coeffs_from_trajectories(build_observation_set(clean), bins, min_count);
  }
  return effective_coeffs_from_trajectories(build_observation_set(ensemble), bins, min_count);
}

double relative_curve_error(const CurveOnGrid& truth, const CurveOnGrid& est) {
  if (truth.values.size() != est.values.size() || truth.grid.size() != est.grid.size()) {
    throw std::invalid_argument("relative_curve_error: grids differ");
  }
  for (std::size_t i = 0; i < truth.grid.size(); ++i) {
    if (truth.grid[i] != est.grid[i]) throw std::invalid_argument("relative_curve_error: grids differ");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const double diff = truth.values[i] - est.values[i];
    num += diff * diff;
    den += truth.values[i] * truth.values[i];
  }
  if (!(den > 0.0)) throw std::invalid_argument("relative_curve_error: truth has zero norm");
  return std::sqrt(num) / std::sqrt(den);
}

std::size_t MomentSeries::index_of(double T) const {
  for (std::size_t l = 0; l < times.size(); ++l) {
    if (std::abs(times[l] - T) <= 1e-9 * std::max(1.0, std::abs(T))) return l;
  }
  throw std::out_of_range("time " + std::to_string(T) + " is not on the series grid");
}

MomentSeries ensemble_moments(const TrajectoryBatch& ensemble) {
  const std::size_t d = ensemble.dim;
  const std::size_t T = ensemble.times();
  std::vector<char> skip(ensemble.paths, 0);
  for (std::size_t p : ensemble.failed_paths) skip.at(p) = 1;
  std::size_t n = 0;
  for (char s : skip) n += s ? 0 : 1;
  if (n == 0) throw std::invalid_argument("ensemble_moments: no usable paths");

  MomentSeries out;
  out.dim = d;
  out.n_paths = n;
  out.times.resize(T);
  out.mean.assign(T * d, 0.0);
  out.stdev.assign(T * d, 0.0);
  for (std::size_t l = 0; l < T; ++l) {
    out.times[l] = ensemble.t0 + static_cast<double>(l) * ensemble.dt;
  }
  for (std::size_t p = 0; p < ensemble.paths; ++p) {
    if (skip[p]) continue;
    for (std::size_t l = 0; l < T; ++l) {
      const auto s = ensemble.state(p, l);
      for (std::size_t c = 0; c < d; ++c) out.mean[l * d + c] += s[c];
    }
  }
  for (double& v : out.mean) v /= static_cast<double>(n);
  for (std::size_t p = 0; p < ensemble.paths; ++p) {
    if (skip[p]) continue;
    for (std::size_t l = 0; l < T; ++l) {
      const auto s = ensemble.state(p, l);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = s[c] - out.mean[l * d + c];
        out.stdev[l * d + c] += diff * diff;
      }
    }
  }
  for (double& v : out.stdev) v = std::sqrt(v / static_cast<double>(n));
  return out;
}

EndpointErrors endpoint_moment_errors(const MomentSeries& surrogate, const MomentSeries& reference,
                                      double T) {
  if (surrogate.dim != reference.dim) throw std::invalid_argument("endpoint errors: dimension mismatch");
  const std::size_t ls = surrogate.index_of(T);
  const std::size_t lr = reference.index_of(T);
  EndpointErrors e;
  double sm = 0.0;
  double ss = 0.0;
  for (std::size_t c = 0; c < surrogate.dim; ++c) {
    const double dm = surrogate.mean_at(ls)[c] - reference.mean_at(lr)[c];
    const double ds = surrogate.std_at(ls)[c] - reference.std_at(lr)[c];
    e.mean_error_per_coord.push_back(std::abs(dm));
    e.std_error_per_coord.push_back(std::abs(ds));
    sm += dm * dm;
    ss += ds * ds;
  }
  e.mean_error = std::sqrt(sm);
  e.std_error = std::sqrt(ss);
  return e;
}

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("bandwidth: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

std::vector<double> kde_density(std::span<const double> samples, std::span<const double> grid,
                                std::optional<double> bandwidth) {
  if (samples.size() < 2) throw std::invalid_argument("kde: need at least 2 samples");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  if (!(h > 0.0)) throw std::invalid_argument("kde: degenerate samples need an explicit bandwidth");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : samples) {
      const double u = (grid[g] - s) / h;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks: no samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: no samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double tv_distance(std::span<const double> a, std::span<const double> b, std::size_t bins) {
  if (a.empty() || b.empty() || bins < 1) throw std::invalid_argument("tv: empty input");
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin);
  const double hi = std::max(*amax, *bmax);
  if (!(hi > lo)) return 0.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  auto histogram = [&](std::span<const double> v) {
    std::vector<double> h(bins, 0.0);
    for (double x : v) h[std::min(bins - 1, static_cast<std::size_t>((x - lo) / width))] += 1.0;
    for (double& c : h) c /= static_cast<double>(v.size());
    return h;
  };
  const auto ha = histogram(a);
  const auto hb = histogram(b);
  double tv = 0.0;
  for (std::size_t i = 0; i < bins; ++i) tv += std::abs(ha[i] - hb[i]);
  return 0.5 * tv;
}

IncrementSampler exact_flow_sampler(const SdeSpec& spec, double dt) {
  auto shared = std::make_shared<const SdeSpec>(spec);
  return [shared, dt](std::span<const double> x, std::span<const double> z, std::span<double> out) {
    thread_local std::vector<double> draw;
    thread_local std::vector<double> next;
    draw.resize(shared->noise_dim);
    next.resize(shared->dim);
    draw_from_gaussian(*shared, z, draw);
    step_with_draw(*shared, x, dt, draw, next);
    for (std::size_t c = 0; c < shared->dim; ++c) out[c] = next[c] - x[c];
  };
}

WellOccupancy well_occupancy(const TrajectoryBatch& ensemble, double T, double barrier) {
  const double steps = T / ensemble.dt;
  const std::size_t l = static_cast<std::size_t>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(l)) > 1e-6 || l > ensemble.steps) {
    throw std::out_of_range("well_occupancy: time not on the ensemble grid");
  }
  std::vector<char> skip(ensemble.paths, 0);
  for (std::size_t p : ensemble.failed_paths) skip.at(p) = 1;
  double left = 0.0;
  double right = 0.0;
  double n = 0.0;
  for (std::size_t p = 0; p < ensemble.paths; ++p) {
    if (skip[p]) continue;
    const double x = ensemble.state(p, l)[0];
    n += 1.0;
    if (x < barrier) left += 1.0;
    if (x > barrier) right += 1.0;
  }
  if (n == 0.0) throw std::invalid_argument("well_occupancy: no usable paths");
  return {left / n, right / n};
}

}  // namespace sdeflow
