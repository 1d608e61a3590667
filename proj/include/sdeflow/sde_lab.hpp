#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sdeflow/random.hpp"

namespace sdeflow {

enum class SdeKind { drift_diffusion, custom_step };

/// Law of the primitive per-step noise draw.
enum class NoiseLaw { gaussian, exponential, lognormal };

/// How effective drift/diffusion are read off a one-step increment model.
enum class EffectiveVariant { standard, lognormal };

/// Named scalar or matrix parameter (row-major values).
struct Param {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::vector<double> values;

  static Param scalar(double v) { return Param{1, 1, {v}}; }
  static Param matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Param{r, c, std::move(v)};
  }
  double value() const { return values.at(0); }
  bool is_scalar() const { return rows == 1 && cols == 1; }
};

using ParamMap = std::map<std::string, Param>;

using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;
using CustomStep = std::function<void(std::span<const double> x, double dt,
                                      std::span<const double> draw, std::span<double> out)>;
using ScalarCurve = std::function<double(double x, double dt)>;

/// A benchmark SDE: drift a(x), diffusion b(x) (d x m, row-major) or a custom update rule.
struct SdeSpec {
  std::string name;
  std::size_t dim = 1;
  std::size_t noise_dim = 1;
  SdeKind kind = SdeKind::drift_diffusion;
  NoiseLaw noise = NoiseLaw::gaussian;
  ParamMap params;

  VectorField drift;
  VectorField diffusion;
  CustomStep step;

  /// Exact effective coefficients for 1D benchmarks (empty for d > 1).
  ScalarCurve effective_drift;
  ScalarCurve effective_diffusion;
  EffectiveVariant variant = EffectiveVariant::standard;

  /// Positivity-constrained state (lognormal model).
  bool positive_state = false;
};

/// Experiment constants attached to a benchmark: initial region, time grid,
/// full-scale sizes and the prediction setup.
struct BenchmarkPreset {
  std::string name;
  std::vector<double> init_lo;
  std::vector<double> init_hi;
  double dt = 0.01;
  std::size_t steps = 100;  // L
  std::size_t full_trajectories = 0;  // H
  std::size_t full_labels = 0;        // J
  std::vector<double> x0;
  double horizon = 5.0;      // prediction horizon
  double metric_time = 4.0;  // end time for moment errors
  std::vector<double> conditional_x;
};

const std::vector<std::string>& benchmark_names();

/// Builds a registered benchmark with its published parameters, then applies overrides.
/// Throws ConfigError for unknown names, unknown parameters or shape mismatches.
SdeSpec make_benchmark(const std::string& name, const ParamMap& overrides = {});

const BenchmarkPreset& benchmark_preset(const std::string& name);

/// Fills `draw` (size noise_dim) with the primitive noise for one step.
void draw_noise(const SdeSpec& spec, Rng& rng, std::span<double> draw);

/// Maps standard-normal coordinates z (size >= noise_dim) to a primitive draw by
/// quantile transform: identity for Gaussian noise, -log(Phi(-z)) for Exp(1), e^z for Lognormal.
void draw_from_gaussian(const SdeSpec& spec, std::span<const double> z, std::span<double> draw);

/// One step from x with a given primitive draw. Throws NumericalError on non-finite output.
void step_with_draw(const SdeSpec& spec, std::span<const double> x, double dt,
                    std::span<const double> draw, std::span<double> out);

/// One Euler-Maruyama (or custom-scheme) step with fresh noise from rng.
std::vector<double> em_step(const SdeSpec& spec, std::span<const double> x, double dt, Rng& rng);

/// Uniform box [lo, hi]; a point mass when lo == hi.
struct InitialDistribution {
  std::vector<double> lo;
  std::vector<double> hi;

  static InitialDistribution point(std::vector<double> x) { return {x, x}; }
  void sample(Rng& rng, std::span<double> out) const;
};

/// H trajectories of L+1 states, stored path-major: data[(i*(L+1) + l)*d + c].
struct TrajectoryBatch {
  std::size_t paths = 0;
  std::size_t steps = 0;  // L
  std::size_t dim = 0;
  double dt = 0.0;
  double t0 = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> data;
  /// Paths whose integration was aborted (only surrogate simulation records these).
  std::vector<std::size_t> failed_paths;

  std::size_t times() const { return steps + 1; }
  std::span<const double> state(std::size_t path, std::size_t l) const {
    return {data.data() + (path * times() + l) * dim, dim};
  }
  std::span<double> state(std::size_t path, std::size_t l) {
    return {data.data() + (path * times() + l) * dim, dim};
  }
};

/// Simulates `paths` trajectories of `steps` steps; trajectory i uses stream (seed, i).
/// The result is independent of `workers`. Throws NumericalError naming the trajectory on blow-up.
TrajectoryBatch simulate(const SdeSpec& spec, const InitialDistribution& init, std::size_t paths,
                         std::size_t steps, double dt, std::uint64_t seed, std::size_t workers = 1);

/// Input/increment pairs (x_m, dx_m), both M x d row-major.
struct ObservationSet {
  std::size_t dim = 0;
  double dt = 0.0;
  std::vector<double> x;
  std::vector<double> dx;

  std::size_t size() const { return dim == 0 ? 0 : x.size() / dim; }
  std::span<const double> state(std::size_t m) const { return {x.data() + m * dim, dim}; }
  std::span<const double> increment(std::size_t m) const { return {dx.data() + m * dim, dim}; }
};

/// Pairs ordered by m = l*H + i.
ObservationSet build_observation_set(const TrajectoryBatch& batch);

/// SHA-256 over dimension, size, time step and both arrays.
std::string content_digest(const ObservationSet& obs);

}  // namespace sdeflow
