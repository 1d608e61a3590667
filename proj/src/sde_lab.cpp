#include "sdeflow/sde_lab.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sdeflow/common.hpp"
#include "sdeflow/digest.hpp"
#include "sdeflow/parallel.hpp"

namespace sdeflow {

void draw_noise(const SdeSpec& spec, Rng& rng, std::span<double> draw) {
  for (double& v : draw) {
    switch (spec.noise) {
      case NoiseLaw::gaussian: v = rng.normal(); break;
      case NoiseLaw::exponential: v = rng.exponential(); break;
      case NoiseLaw::lognormal: v = rng.lognormal(); break;
    }
  }
}

void draw_from_gaussian(const SdeSpec& spec, std::span<const double> z, std::span<double> draw) {
  for (std::size_t j = 0; j < draw.size(); ++j) {
    switch (spec.noise) {
      case NoiseLaw::gaussian: draw[j] = z[j]; break;
      case NoiseLaw::exponential:
        draw[j] = -std::log(0.5 * std::erfc(z[j] / std::numbers::sqrt2));
        break;
      case NoiseLaw::lognormal: draw[j] = std::exp(z[j]); break;
    }
  }
}

void step_with_draw(const SdeSpec& spec, std::span<const double> x, double dt,
                    std::span<const double> draw, std::span<double> out) {
  const std::size_t d = spec.dim;
  if (spec.kind == SdeKind::custom_step) {
    spec.step(x, dt, draw, out);
  } else {
    thread_local std::vector<double> drift;
    thread_local std::vector<double> diffusion;
    drift.resize(d);
    diffusion.resize(d * spec.noise_dim);
    spec.drift(x, drift);
    spec.diffusion(x, diffusion);
    const double sqrt_dt = std::sqrt(dt);
    for (std::size_t c = 0; c < d; ++c) {
      double noise = 0.0;
      for (std::size_t j = 0; j < spec.noise_dim; ++j) {
        noise += diffusion[c * spec.noise_dim + j] * draw[j];
      }
      out[c] = x[c] + drift[c] * dt + noise * sqrt_dt;
    }
  }
  if (!all_finite({out.data(), d})) {
    throw NumericalError("sde '" + spec.name + "': non-finite state after one step");
  }
}

std::vector<double> em_step(const SdeSpec& spec, std::span<const double> x, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
  if (!all_finite(x)) throw std::invalid_argument("em_step: non-finite input state");
  std::vector<double> draw(spec.noise_dim);
  draw_noise(spec, rng, draw);
  std::vector<double> out(spec.dim);
  step_with_draw(spec, x, dt, draw, out);
  return out;
}

void InitialDistribution::sample(Rng& rng, std::span<double> out) const {
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = lo[c] == hi[c] ? lo[c] : rng.uniform(lo[c], hi[c]);
  }
}

TrajectoryBatch simulate(const SdeSpec& spec, const InitialDistribution& init, std::size_t paths,
                         std::size_t steps, double dt, std::uint64_t seed, std::size_t workers) {
  if (paths < 1 || steps < 1) throw std::invalid_argument("simulate: need H >= 1 and L >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  if (init.lo.size() != spec.dim || init.hi.size() != spec.dim) {
    throw std::invalid_argument("simulate: initial distribution dimension mismatch");
  }
  TrajectoryBatch batch;
  batch.paths = paths;
  batch.steps = steps;
  batch.dim = spec.dim;
  batch.dt = dt;
  batch.seed = seed;
  batch.data.resize(paths * (steps + 1) * spec.dim);

  parallel_chunks(paths, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> draw(spec.noise_dim);
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(seed, i);
      init.sample(rng, batch.state(i, 0));
      for (std::size_t l = 0; l < steps; ++l) {
        draw_noise(spec, rng, draw);
        try {
          step_with_draw(spec, batch.state(i, l), dt, draw, batch.state(i, l + 1));
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " (trajectory " + std::to_string(i) +
                               ", step " + std::to_string(l) + ")");
        }
      }
    }
  });
  return batch;
}

ObservationSet build_observation_set(const TrajectoryBatch& batch) {
  if (batch.steps < 1) throw std::invalid_argument("build_observation_set: need L >= 1");
  if (batch.data.size() != batch.paths * batch.times() * batch.dim) {
    throw std::invalid_argument("build_observation_set: batch shape mismatch");
  }
  const std::size_t d = batch.dim;
  const std::size_t M = batch.paths * batch.steps;
  ObservationSet obs;
  obs.dim = d;
  obs.dt = batch.dt;
  obs.x.resize(M * d);
  obs.dx.resize(M * d);
  for (std::size_t l = 0; l < batch.steps; ++l) {
    for (std::size_t i = 0; i < batch.paths; ++i) {
      const std::size_t m = l * batch.paths + i;
      const auto from = batch.state(i, l);
      const auto to = batch.state(i, l + 1);
      for (std::size_t c = 0; c < d; ++c) {
        obs.x[m * d + c] = from[c];
        obs.dx[m * d + c] = to[c] - from[c];
      }
    }
  }
  return obs;
}

std::string content_digest(const ObservationSet& obs) {
  Sha256 h;
  h.update("SDEOBS1");
  h.update_u64(obs.dim).update_u64(obs.size()).update_f64(obs.dt);
  h.update(std::span<const double>(obs.x)).update(std::span<const double>(obs.dx));
  return h.hex();
}

}  // namespace sdeflow
