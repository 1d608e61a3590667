#pragma once
// Closed-form references used by the tests. Each is derived independently of
// the library code it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

/// Ornstein-Uhlenbeck dX = theta (mu - X) dt + sigma dW from a point x0.
struct Ou {
  double theta;
  double mu;
  double sigma;

  double mean(double x0, double t) const { return mu + (x0 - mu) * std::exp(-theta * t); }
  double var(double t) const {
    return sigma * sigma * (1.0 - std::exp(-2.0 * theta * t)) / (2.0 * theta);
  }
};

/// Moments of the Euler-Maruyama OU chain x' = x + theta (mu - x) dt + sigma sqrt(dt) xi,
/// which is an AR(1) recursion with coefficient r = 1 - theta dt.
inline std::pair<double, double> ou_euler_moments(const Ou& ou, double x0, double dt,
                                                  std::size_t steps) {
  const double r = 1.0 - ou.theta * dt;
  const double rn = std::pow(r, static_cast<double>(steps));
  const double mean = ou.mu + (x0 - ou.mu) * rn;
  const double var = ou.sigma * ou.sigma * dt * (1.0 - rn * rn) / (1.0 - r * r);
  return {mean, var};
}

/// Slope of the probability-flow Euler map for a point-mass increment distribution:
/// y - dx = z1 * prod_{k=1..K} (1 - 1/(2k)) = z1 * Gamma(K + 1/2) / (Gamma(1/2) Gamma(K + 1)).
inline double dirac_euler_slope(std::size_t K) {
  const double k = static_cast<double>(K);
  return std::exp(std::lgamma(k + 0.5) - std::lgamma(0.5) - std::lgamma(k + 1.0));
}

/// Score of N(alpha m, alpha^2 s^2 + beta^2) in 1D, alpha = 1 - tau, beta^2 = tau.
inline double gaussian_score(double z, double tau, double m, double s) {
  const double alpha = 1.0 - tau;
  return -(z - alpha * m) / (alpha * alpha * s * s + tau);
}

/// Indices of the k smallest squared distances, ties broken by index, sorted ascending.
inline std::vector<std::size_t> brute_force_knn(const std::vector<double>& x, std::size_t dim,
                                                const std::vector<double>& q, std::size_t k) {
  const std::size_t M = x.size() / dim;
  std::vector<std::pair<double, std::size_t>> d(M);
  for (std::size_t m = 0; m < M; ++m) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = x[m * dim + c] - q[c];
      s += diff * diff;
    }
    d[m] = {s, m};
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  std::sort(out.begin(), out.end());
  return out;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stdev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace oracle
