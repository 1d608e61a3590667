#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sdeflow/flowmap_net.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow {

struct CurveOnGrid {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> std_error;  // Monte Carlo or binning standard error per point (0 if exact)
  std::vector<std::size_t> n_samples_per_point;
};

struct EffectiveCoefficients {
  CurveOnGrid drift;
  CurveOnGrid diffusion;
};

/// n points evenly spaced over [lo, hi], endpoints included.
std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

/// Interval between the given lower and upper quantiles of the first coordinate of x.
std::pair<double, double> central_range(std::span<const double> values, double lower = 0.05,
                                        double upper = 0.95);

/// Monte Carlo effective coefficients of a one-step increment map on a 1D grid.
/// standard:  a = E_z[G]/dt,                 b = Std_z[G]/sqrt(dt)
/// lognormal: a = ln E_z[(G + x)/x] / dt,    b = Std_z[G]
/// Grid point g draws its n_z standard normals from stream (seed, g).
EffectiveCoefficients effective_coeffs_from_model(const IncrementSampler& sampler,
                                                  std::span<const double> grid, std::size_t n_z,
                                                  double dt, EffectiveVariant variant,
                                                  std::uint64_t seed, std::size_t workers = 1);

/// Closed-form effective coefficients of a 1D benchmark on a grid.
EffectiveCoefficients exact_effective_coeffs(const SdeSpec& spec, std::span<const double> grid,
                                             double dt);

/// Binned conditional moments of 1D pairs: uniform bins over the central 5-95% range of x,
/// drift = mean(dx)/dt, diffusion = std(dx)/sqrt(dt); bins under min_count are dropped.
/// Invariant to the order of the pairs. Throws std::runtime_error if no bin qualifies.
EffectiveCoefficients effective_coeffs_from_trajectories(const ObservationSet& pairs,
                                                         std::size_t bins = 40,
                                                         std::size_t min_count = 200);
EffectiveCoefficients effective_coeffs_from_trajectories(const TrajectoryBatch& ensemble,
                                                         std::size_t bins = 40,
                                                         std::size_t min_count = 200);

/// sqrt(sum (truth - est)^2) / sqrt(sum truth^2) over a shared grid.
double relative_curve_error(const CurveOnGrid& truth, const CurveOnGrid& est);

/// Per-time mean and population std across paths, row-major (times x dim).
/// Paths listed in failed_paths are excluded.
struct MomentSeries {
  std::size_t dim = 0;
  std::size_t n_paths = 0;
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> stdev;

  std::span<const double> mean_at(std::size_t l) const { return {mean.data() + l * dim, dim}; }
  std::span<const double> std_at(std::size_t l) const { return {stdev.data() + l * dim, dim}; }
  /// Index of time T (within 1e-9 relative); throws std::out_of_range if absent.
  std::size_t index_of(double T) const;
};

MomentSeries ensemble_moments(const TrajectoryBatch& ensemble);

struct EndpointErrors {
  double mean_error = 0.0;  // |E x_T - E x^_T|
  double std_error = 0.0;   // |Std x_T - Std x^_T|
  std::vector<double> mean_error_per_coord;
  std::vector<double> std_error_per_coord;
};

EndpointErrors endpoint_moment_errors(const MomentSeries& surrogate, const MomentSeries& reference,
                                      double T);

/// Silverman's rule 1.06 * sigma * n^(-1/5) with the sample standard deviation.
double silverman_bandwidth(std::span<const double> samples);

/// Gaussian kernel density evaluated on a grid. Throws std::invalid_argument for
/// fewer than 2 samples or zero-variance samples without an explicit bandwidth.
std::vector<double> kde_density(std::span<const double> samples, std::span<const double> grid,
                                std::optional<double> bandwidth = std::nullopt);

/// sup |F_n - F| for a continuous reference CDF.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// sup |F_a - F_b| between two empirical CDFs.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Half the L1 distance between normalized histograms on a common uniform binning.
double tv_distance(std::span<const double> a, std::span<const double> b, std::size_t bins = 50);

/// Increment map of the simulator itself: z is pushed through the noise law's quantile
/// transform and one exact-scheme step is taken. Serves as an oracle model.
IncrementSampler exact_flow_sampler(const SdeSpec& spec, double dt);

/// Fractions of paths with x < barrier and x > barrier at time T (first coordinate).
struct WellOccupancy {
  double left = 0.0;
  double right = 0.0;
};
WellOccupancy well_occupancy(const TrajectoryBatch& ensemble, double T, double barrier = 0.0);

}  // namespace sdeflow
