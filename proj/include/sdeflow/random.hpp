#pragma once

#include <cstdint>
#include <random>

namespace sdeflow {

/// Independent random stream keyed by (seed, stream index).
///
/// Every unit of parallel work (a trajectory, a label, a grid point) owns
/// the stream with its own index, so results never depend on how the work
/// is split across threads.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5de5eedu};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double exponential() { return exponential_(engine_); }
  double lognormal() { return lognormal_(engine_); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::exponential_distribution<double> exponential_{1.0};
  std::lognormal_distribution<double> lognormal_{0.0, 1.0};
};

}  // namespace sdeflow
