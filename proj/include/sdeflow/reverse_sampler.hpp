#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdeflow/random.hpp"
#include "sdeflow/score_core.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow {

/// Called after every reverse step with the step index k (counting down from K),
/// the pseudo-time tau_k at which the coefficients were evaluated and the new state.
using ReverseObserver = std::function<void(std::size_t k, double tau, std::span<const double> z)>;

/// Euler scheme for the probability-flow ODE from tau = 1 to tau = 0:
///   z <- z - [b(tau_k) z - 0.5 sigma^2(tau_k) S(z, tau_k)] / K,  tau_k = k / K, k = K..1.
/// Throws NumericalError reporting k and tau if the state turns non-finite.
std::vector<double> reverse_ode_solve(std::span<const double> z1, std::size_t K,
                                      const NeighborSubset& subset,
                                      const DiffusionSchedule& sched = {},
                                      const ReverseObserver& observer = {});

/// Euler-Maruyama for the reverse SDE on the same grid:
///   z <- z - [b z - sigma^2 S] / K + sigma sqrt(1/K) xi.
std::vector<double> reverse_sde_solve(std::span<const double> z1, std::size_t K,
                                      const NeighborSubset& subset, Rng& rng,
                                      const DiffusionSchedule& sched = {},
                                      const ReverseObserver& observer = {});

struct LabelMeta {
  std::size_t K = 0;
  std::uint64_t seed = 0;
  double fraction = 0.01;
  double nu = 1.0;
  double dt = 0.0;  // time step of the source observations
  std::string source_digest;
};

/// Triples (x_j, z_j, y_j), each J x d row-major.
struct LabeledSet {
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<double> z;
  std::vector<double> y;
  LabelMeta meta;

  std::size_t size() const { return dim == 0 ? 0 : x.size() / dim; }
};

struct LabelOptions {
  std::size_t J = 1;
  std::size_t K = 10000;
  double fraction = 0.01;
  double nu = 1.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  DiffusionSchedule schedule{};
};

/// Label j draws x_j uniformly (with replacement) from the observed states and
/// z_j ~ N(0, I_d) from stream (seed, j), fixes the neighbor subset at x_j and
/// integrates the reverse ODE. Output is independent of the worker count.
/// Any failed label aborts the batch with the failing indices.
LabeledSet generate_labels(const ObservationSet& obs, const LabelOptions& options);

/// SHA-256 over shape, meta and the three arrays.
std::string content_digest(const LabeledSet& labels);

}  // namespace sdeflow
