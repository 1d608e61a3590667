#include "sdeflow/score_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sdeflow/common.hpp"
#include "sdeflow/digest.hpp"
#include "sdeflow/simd/kernels.hpp"

namespace sdeflow {

double DiffusionSchedule::clamp(double tau) const {
  return std::min(std::max(tau, eps_tau), 1.0 - eps_tau);
}

ScheduleCoefficients DiffusionSchedule::coefficients(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("schedule: tau must lie in [0, 1], got " + std::to_string(tau));
  }
  const double t = clamp(tau);
  return {t, 1.0 - t, t, -1.0 / (1.0 - t), (1.0 + t) / (1.0 - t)};
}

std::size_t neighbor_count(std::size_t M, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("neighbor fraction must lie in (0, 1]");
  }
  // The relative nudge keeps exact products such as 0.01 * 1e6 from rounding up.
  const double k = std::ceil(fraction * static_cast<double>(M) * (1.0 - 1e-12));
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, M);
}

std::string NeighborSubset::digest() const {
  Sha256 h;
  h.update("NBR1").update_u64(dim).update_f64(nu);
  h.update(std::span<const double>(x_query));
  for (std::size_t m : indices) h.update_u64(m);
  h.update(std::span<const double>(spatial_logw));
  return h.hex();
}

namespace {

void check_query(const ObservationSet& obs, std::span<const double> x) {
  if (obs.size() == 0) throw std::invalid_argument("select_neighbors: empty observation set");
  if (x.size() != obs.dim) throw std::invalid_argument("select_neighbors: query dimension mismatch");
  if (!all_finite(x)) throw std::invalid_argument("select_neighbors: non-finite query");
}

NeighborSubset pack_subset(const ObservationSet& obs, std::span<const double> x, double nu,
                           std::vector<std::size_t> indices) {
  if (!(nu > 0.0)) throw std::invalid_argument("select_neighbors: nu must be positive");
  std::sort(indices.begin(), indices.end());
  const std::size_t d = obs.dim;
  const std::size_t k = indices.size();
  NeighborSubset s;
  s.dim = d;
  s.nu = nu;
  s.x_query.assign(x.begin(), x.end());
  s.spatial_logw.resize(k);
  s.increments.resize(k * d);
  const double scale = 1.0 / (2.0 * nu * nu);
  for (std::size_t i = 0; i < k; ++i) {
    const auto xm = obs.state(indices[i]);
    const auto dxm = obs.increment(indices[i]);
    double d2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x[c] - xm[c];
      d2 += diff * diff;
      s.increments[c * k + i] = dxm[c];
    }
    s.spatial_logw[i] = -d2 * scale;
  }
  s.indices = std::move(indices);
  return s;
}

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

std::vector<std::size_t> smallest_k(std::vector<Candidate>& cand, std::size_t k) {
  if (k < cand.size()) std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = cand[i].index;
  return out;
}

}  // namespace

NeighborSubset select_neighbors(const ObservationSet& obs, std::span<const double> x,
                                double fraction, double nu) {
  check_query(obs, x);
  const std::size_t M = obs.size();
  const std::size_t k = neighbor_count(M, fraction);
  std::vector<Candidate> all(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto xm = obs.state(m);
    double d2 = 0.0;
    for (std::size_t c = 0; c < obs.dim; ++c) {
      const double diff = xm[c] - x[c];
      d2 += diff * diff;
    }
    all[m] = {d2, m};
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = all[i].index;
  return pack_subset(obs, x, nu, std::move(idx));
}

NeighborIndex::NeighborIndex(const ObservationSet& obs) : obs_(&obs) {
  const std::size_t M = obs.size();
  const std::size_t d = obs.dim;
  columns_.resize(M * d);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t c = 0; c < d; ++c) columns_[c * M + m] = obs.x[m * d + c];
  }
}

NeighborSubset NeighborIndex::select(std::span<const double> x, double fraction, double nu) const {
  const ObservationSet& obs = *obs_;
  check_query(obs, x);
  const std::size_t M = obs.size();
  const std::size_t k = neighbor_count(M, fraction);

  thread_local std::vector<double> d2;
  d2.resize(M);
  simd::kernels().squared_distances(columns_.data(), M, M, obs.dim, x.data(), d2.data());

  std::vector<Candidate> cand;
  if (k < M / 4 && M > 4096) {
    // Threshold from a strided subsample at an inflated quantile; accepted only if
    // it keeps at least k candidates, which makes the pruning exact.
    const std::size_t stride = std::max<std::size_t>(1, M / 8192);
    std::vector<double> sample;
    sample.reserve(M / stride + 1);
    for (std::size_t m = 0; m < M; m += stride) sample.push_back(d2[m]);
    const double q = std::min(1.0, 2.0 * static_cast<double>(k) / static_cast<double>(M)) +
                     32.0 / static_cast<double>(sample.size());
    const std::size_t pos =
        std::min(sample.size() - 1, static_cast<std::size_t>(q * static_cast<double>(sample.size())));
    std::nth_element(sample.begin(), sample.begin() + pos, sample.end());
    const double threshold = sample[pos];
    cand.reserve(static_cast<std::size_t>(1.25 * static_cast<double>(k)) + 64);
    for (std::size_t m = 0; m < M; ++m) {
      if (d2[m] <= threshold) cand.push_back({d2[m], m});
    }
    if (cand.size() < k) cand.clear();
  }
  if (cand.empty()) {
    cand.resize(M);
    for (std::size_t m = 0; m < M; ++m) cand[m] = {d2[m], m};
  }
  return pack_subset(obs, x, nu, smallest_k(cand, k));
}

void score(std::span<const double> z, double tau, const NeighborSubset& subset,
           const DiffusionSchedule& sched, std::span<double> out) {
  const std::size_t d = subset.dim;
  const std::size_t k = subset.size();
  if (k == 0) throw std::invalid_argument("score: empty neighbor subset");
  if (z.size() != d || out.size() != d) throw std::invalid_argument("score: dimension mismatch");
  const ScheduleCoefficients c = sched.coefficients(tau);

  thread_local std::vector<double> scratch;
  thread_local std::vector<double> mean;
  scratch.resize(k);
  mean.resize(d);
  const simd::WeightedMean wm = simd::kernels().weighted_increment_mean(
      subset.increments.data(), k, d, subset.spatial_logw.data(), z.data(), c.alpha,
      0.5 / c.beta2, scratch.data(), mean.data());
  if (!(wm.weight_sum > 0.0) || !std::isfinite(wm.weight_sum)) {
    throw NumericalError("score: log-weights are NaN or -inf (corrupt input)");
  }
  for (std::size_t i = 0; i < d; ++i) out[i] = -(z[i] - c.alpha * mean[i]) / c.beta2;
}

std::vector<double> score(std::span<const double> z, double tau, const NeighborSubset& subset,
                          const DiffusionSchedule& sched) {
  std::vector<double> out(subset.dim);
  score(z, tau, subset, sched, out);
  return out;
}

std::vector<double> score_weights(std::span<const double> z, double tau,
                                  const NeighborSubset& subset, const DiffusionSchedule& sched) {
  const std::size_t d = subset.dim;
  const std::size_t k = subset.size();
  if (k == 0) throw std::invalid_argument("score_weights: empty neighbor subset");
  if (z.size() != d) throw std::invalid_argument("score_weights: dimension mismatch");
  const ScheduleCoefficients c = sched.coefficients(tau);
  std::vector<double> w(k);
  std::vector<double> mean(d);
  const simd::WeightedMean wm = simd::kernels().weighted_increment_mean(
      subset.increments.data(), k, d, subset.spatial_logw.data(), z.data(), c.alpha,
      0.5 / c.beta2, w.data(), mean.data());
  if (!(wm.weight_sum > 0.0) || !std::isfinite(wm.weight_sum)) {
    throw NumericalError("score_weights: corrupt log-weights");
  }
  for (double& v : w) v /= wm.weight_sum;
  return w;
}

}  // namespace sdeflow
