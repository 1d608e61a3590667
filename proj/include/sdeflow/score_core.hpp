#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sdeflow/sde_lab.hpp"

namespace sdeflow {

struct ScheduleCoefficients {
  double tau;     // clamped pseudo-time
  double alpha;   // 1 - tau
  double beta2;   // tau
  double b;       // -1 / (1 - tau)
  double sigma2;  // (1 + tau) / (1 - tau)
};

/// Forward noising schedule alpha = 1 - tau, beta^2 = tau, with the coefficients of
/// the forward SDE dZ = b Z dtau + sigma dW. Every evaluation clamps tau into
/// [eps_tau, 1 - eps_tau] so that b and sigma^2 stay finite at tau = 1.
struct DiffusionSchedule {
  double eps_tau = 1e-4;

  /// Throws std::invalid_argument for tau outside [0, 1].
  ScheduleCoefficients coefficients(double tau) const;
  double clamp(double tau) const;
};

/// k = ceil(fraction * M), clamped to [1, M].
std::size_t neighbor_count(std::size_t M, double fraction);

/// The observation pairs closest to a conditioning state, with their fixed spatial log-weights.
struct NeighborSubset {
  std::size_t dim = 0;
  double nu = 1.0;
  std::vector<double> x_query;
  std::vector<std::size_t> indices;   // ascending
  std::vector<double> spatial_logw;   // -|x - x_m|^2 / (2 nu^2), aligned with indices
  std::vector<double> increments;     // column-blocked: increments[c * size() + i]

  std::size_t size() const { return indices.size(); }
  /// SHA-256 over indices, spatial weights and the query.
  std::string digest() const;
};

/// Reference selection by a full sort of (distance, index). O(M log M) per query.
NeighborSubset select_neighbors(const ObservationSet& obs, std::span<const double> x,
                                double fraction = 0.01, double nu = 1.0);

/// Exact k-nearest selection over a fixed observation set. Distances run through the
/// SIMD kernel on a column-blocked copy of the states; a subsample quantile prunes
/// the candidate set before the exact partial selection. Results equal select_neighbors.
class NeighborIndex {
 public:
  explicit NeighborIndex(const ObservationSet& obs);

  NeighborSubset select(std::span<const double> x, double fraction = 0.01, double nu = 1.0) const;
  const ObservationSet& observations() const { return *obs_; }

 private:
  const ObservationSet* obs_;
  std::vector<double> columns_;  // columns_[c * M + m]
};

/// Monte Carlo conditional score at (z, tau):
///   S = -sum_m w_m (z - alpha dx_m) / beta^2,
///   w_m proportional to exp(-|z - alpha dx_m|^2 / (2 beta^2) + spatial_logw_m),
/// normalized over the subset with max-subtraction. Throws NumericalError on corrupt input.
void score(std::span<const double> z, double tau, const NeighborSubset& subset,
           const DiffusionSchedule& sched, std::span<double> out);

std::vector<double> score(std::span<const double> z, double tau, const NeighborSubset& subset,
                          const DiffusionSchedule& sched = {});

/// Normalized weights w_m of the estimator, aligned with subset.indices.
std::vector<double> score_weights(std::span<const double> z, double tau,
                                  const NeighborSubset& subset, const DiffusionSchedule& sched = {});

}  // namespace sdeflow
