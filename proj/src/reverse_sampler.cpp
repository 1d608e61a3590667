#include "sdeflow/reverse_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

#include "sdeflow/common.hpp"
#include "sdeflow/digest.hpp"
#include "sdeflow/parallel.hpp"

namespace sdeflow {
namespace {

void check_solve_args(std::span<const double> z1, std::size_t K, const NeighborSubset& subset) {
  if (K < 2) throw std::invalid_argument("reverse solve: K must be at least 2");
  if (z1.size() != subset.dim) throw std::invalid_argument("reverse solve: dimension mismatch");
  if (!all_finite(z1)) throw std::invalid_argument("reverse solve: non-finite initial noise");
}

[[noreturn]] void blow_up(const char* what, std::size_t k, double tau, const char* detail = nullptr) {
  throw NumericalError(std::string(what) + ": non-finite state at step k=" + std::to_string(k) +
                       ", tau=" + std::to_string(tau) + (detail ? std::string(" (") + detail + ")" : ""));
}

void step_score(const char* what, std::span<const double> z, std::size_t k, double tau,
                const NeighborSubset& subset, const DiffusionSchedule& sched, std::span<double> s) {
  try {
    score(z, tau, subset, sched, s);
  } catch (const NumericalError& e) {
    blow_up(what, k, tau, e.what());
  }
}

}  // namespace

std::vector<double> reverse_ode_solve(std::span<const double> z1, std::size_t K,
                                      const NeighborSubset& subset, const DiffusionSchedule& sched,
                                      const ReverseObserver& observer) {
  check_solve_args(z1, K, subset);
  const std::size_t d = subset.dim;
  const double dtau = 1.0 / static_cast<double>(K);
  std::vector<double> z(z1.begin(), z1.end());
  std::vector<double> s(d);
  for (std::size_t k = K; k >= 1; --k) {
    const double tau = static_cast<double>(k) * dtau;
    const ScheduleCoefficients c = sched.coefficients(tau);
    step_score("reverse ODE", z, k, tau, subset, sched, s);
    for (std::size_t i = 0; i < d; ++i) z[i] -= (c.b * z[i] - 0.5 * c.sigma2 * s[i]) * dtau;
    if (!all_finite(z)) blow_up("reverse ODE", k, tau);
    if (observer) observer(k, tau, z);
  }
  return z;
}

std::vector<double> reverse_sde_solve(std::span<const double> z1, std::size_t K,
                                      const NeighborSubset& subset, Rng& rng,
                                      const DiffusionSchedule& sched,
                                      const ReverseObserver& observer) {
  check_solve_args(z1, K, subset);
  const std::size_t d = subset.dim;
  const double dtau = 1.0 / static_cast<double>(K);
  const double sqrt_dtau = std::sqrt(dtau);
  std::vector<double> z(z1.begin(), z1.end());
  std::vector<double> s(d);
  for (std::size_t k = K; k >= 1; --k) {
    const double tau = static_cast<double>(k) * dtau;
    const ScheduleCoefficients c = sched.coefficients(tau);
    step_score("reverse SDE", z, k, tau, subset, sched, s);
    const double sigma = std::sqrt(c.sigma2);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] -= (c.b * z[i] - c.sigma2 * s[i]) * dtau;
      z[i] += sigma * sqrt_dtau * rng.normal();
    }
    if (!all_finite(z)) blow_up("reverse SDE", k, tau);
    if (observer) observer(k, tau, z);
  }
  return z;
}

LabeledSet generate_labels(const ObservationSet& obs, const LabelOptions& options) {
  if (options.J < 1) throw std::invalid_argument("generate_labels: J must be at least 1");
  if (obs.size() == 0) throw std::invalid_argument("generate_labels: empty observation set");
  const std::size_t d = obs.dim;
  const std::size_t M = obs.size();
  const std::size_t J = options.J;

  LabeledSet out;
  out.dim = d;
  out.x.resize(J * d);
  out.z.resize(J * d);
  out.y.resize(J * d);
  out.meta = {options.K, options.seed, options.fraction, options.nu, obs.dt, content_digest(obs)};

  const NeighborIndex index(obs);
  std::vector<std::pair<std::size_t, std::string>> failures;
  std::mutex failure_mutex;

  parallel_chunks(J, options.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      Rng rng(options.seed, j);
      const auto xj = obs.state(rng.index(M));
      double* x_out = out.x.data() + j * d;
      double* z_out = out.z.data() + j * d;
      std::copy(xj.begin(), xj.end(), x_out);
      for (std::size_t c = 0; c < d; ++c) z_out[c] = rng.normal();
      try {
        const NeighborSubset subset = index.select(xj, options.fraction, options.nu);
        const auto y = reverse_ode_solve({z_out, d}, options.K, subset, options.schedule);
        std::copy(y.begin(), y.end(), out.y.data() + j * d);
      } catch (const NumericalError& e) {
        std::scoped_lock lock(failure_mutex);
        failures.emplace_back(j, e.what());
      }
    }
  });

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::string msg = "generate_labels: " + std::to_string(failures.size()) + " label(s) failed:";
    for (std::size_t i = 0; i < failures.size() && i < 5; ++i) {
      msg += " [j=" + std::to_string(failures[i].first) + "] " + failures[i].second;
    }
    throw NumericalError(msg);
  }
  return out;
}

std::string content_digest(const LabeledSet& labels) {
  Sha256 h;
  h.update("SDELAB1");
  h.update_u64(labels.dim).update_u64(labels.size());
  h.update_u64(labels.meta.K).update_u64(labels.meta.seed);
  h.update_f64(labels.meta.fraction).update_f64(labels.meta.nu).update_f64(labels.meta.dt);
  h.update(labels.meta.source_digest);
  h.update(std::span<const double>(labels.x));
  h.update(std::span<const double>(labels.z));
  h.update(std::span<const double>(labels.y));
  return h.hex();
}

}  // namespace sdeflow
