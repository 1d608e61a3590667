#pragma once

// Data-parallel inner loops of the Monte Carlo score estimator and the
// neighbor search. Each kernel has a scalar reference implementation and an
// AVX2+FMA implementation; the active one is chosen once at startup from
// CPUID and may be pinned with SDEFLOW_ISA=scalar|avx2.

#include <cstddef>

namespace sdeflow::simd {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
bool isa_supported(Isa isa);

/// Aggregate returned by the weighted-mean kernel.
struct WeightedMean {
  double max_logw;    // largest log-weight before normalization
  double weight_sum;  // sum of exp(logw - max_logw); NaN if any input was NaN
};

struct KernelTable {
  Isa isa;

  /// out[i] = sum_c (points[c*stride + i] - query[c])^2, i < count.
  /// Points are column-blocked (structure of arrays) with block stride `stride`.
  void (*squared_distances)(const double* points, std::size_t count, std::size_t stride,
                            std::size_t dim, const double* query, double* out);

  /// Self-normalized Gaussian-kernel mean of increments:
  ///   logw_i  = spatial_logw[i] - |z - alpha*inc_i|^2 * inv_two_beta2
  ///   w_i     = exp(logw_i - max_j logw_j)
  ///   mean[c] = sum_i w_i inc[c][i] / sum_i w_i
  /// Increments are column-blocked with stride `count`. `scratch` holds `count`
  /// doubles and receives the unnormalized weights w_i.
  WeightedMean (*weighted_increment_mean)(const double* increments, std::size_t count,
                                          std::size_t dim, const double* spatial_logw,
                                          const double* z, double alpha, double inv_two_beta2,
                                          double* scratch, double* mean);

  /// values[i] = exp(values[i]).
  void (*exp_inplace)(double* values, std::size_t count);
};

/// Kernels of the active ISA.
const KernelTable& kernels();

/// Kernels of a specific ISA; throws std::runtime_error if unsupported on this CPU/build.
const KernelTable& kernels_for(Isa isa);

Isa active_isa();

/// Pins the active ISA for the process (tests and benchmarks).
void set_active_isa(Isa isa);

/// Restores the previous ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when the AVX2 unit is not built
}  // namespace detail

}  // namespace sdeflow::simd
