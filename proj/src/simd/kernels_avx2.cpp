#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdeflow/simd/kernels.hpp"

namespace sdeflow::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// 2^k for integral k in [-1022, 1023].
inline __m256d pow2(__m256d k) {
  const __m256d magic = _mm256_set1_pd(0x1.8p52);
  const __m256i ki = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(k, magic)),
                                      _mm256_castpd_si256(magic));
  return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(ki, _mm256_set1_epi64x(1023)), 52));
}

// exp(x): Cody-Waite reduction by ln 2, degree-13 Taylor polynomial on
// |r| <= ln2/2, scaling by 2^n through the exponent field. NaN passes through.
inline __m256d exp_pd(__m256d x) {
  // Beyond [-746, 710] the result is 0 or inf either way; the clamp bounds n.
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d input = x;
  x = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-746.0)), _mm256_set1_pd(710.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^n applied as 2^h * 2^(n-h) so that n = 1024 and subnormal results stay exact.
  const __m256d h = _mm256_floor_pd(_mm256_mul_pd(n, _mm256_set1_pd(0.5)));
  const __m256d result = _mm256_mul_pd(_mm256_mul_pd(p, pow2(h)), pow2(_mm256_sub_pd(n, h)));
  return _mm256_blendv_pd(result, input, nan);
}

void squared_distances(const double* points, std::size_t count, std::size_t stride,
                       std::size_t dim, const double* query, double* out) {
  const std::size_t vec_end = count & ~std::size_t{3};
  for (std::size_t i = 0; i < vec_end; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t c = 0; c < dim; ++c) {
      const __m256d diff =
          _mm256_sub_pd(_mm256_loadu_pd(points + c * stride + i), _mm256_set1_pd(query[c]));
      acc = _mm256_fmadd_pd(diff, diff, acc);
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (std::size_t i = vec_end; i < count; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = points[c * stride + i] - query[c];
      acc = std::fma(diff, diff, acc);
    }
    out[i] = acc;
  }
}

WeightedMean weighted_increment_mean(const double* increments, std::size_t count,
                                     std::size_t dim, const double* spatial_logw,
                                     const double* z, double alpha, double inv_two_beta2,
                                     double* scratch, double* mean) {
  const std::size_t vec_end = count & ~std::size_t{3};
  const __m256d valpha = _mm256_set1_pd(alpha);
  const __m256d vscale = _mm256_set1_pd(inv_two_beta2);
  __m256d vmax = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  __m256d vnan = _mm256_setzero_pd();
  for (std::size_t i = 0; i < vec_end; i += 4) {
    __m256d q = _mm256_setzero_pd();
    for (std::size_t c = 0; c < dim; ++c) {
      const __m256d diff =
          _mm256_fnmadd_pd(valpha, _mm256_loadu_pd(increments + c * count + i),
                           _mm256_set1_pd(z[c]));
      q = _mm256_fmadd_pd(diff, diff, q);
    }
    const __m256d logw = _mm256_fnmadd_pd(q, vscale, _mm256_loadu_pd(spatial_logw + i));
    vnan = _mm256_or_pd(vnan, _mm256_cmp_pd(logw, logw, _CMP_UNORD_Q));
    vmax = _mm256_max_pd(vmax, logw);
    _mm256_storeu_pd(scratch + i, logw);
  }
  double max_logw = hmax(vmax);
  bool saw_nan = _mm256_movemask_pd(vnan) != 0;
  for (std::size_t i = vec_end; i < count; ++i) {
    double q = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = std::fma(-alpha, increments[c * count + i], z[c]);
      q = std::fma(diff, diff, q);
    }
    const double logw = std::fma(-q, inv_two_beta2, spatial_logw[i]);
    saw_nan |= std::isnan(logw);
    scratch[i] = logw;
    max_logw = std::max(max_logw, logw);
  }
  if (saw_nan) return {max_logw, std::numeric_limits<double>::quiet_NaN()};

  const __m256d vshift = _mm256_set1_pd(max_logw);
  __m256d vsum = _mm256_setzero_pd();
  for (std::size_t i = 0; i < vec_end; i += 4) {
    const __m256d w = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(scratch + i), vshift));
    _mm256_storeu_pd(scratch + i, w);
    vsum = _mm256_add_pd(vsum, w);
  }
  double weight_sum = hsum(vsum);
  for (std::size_t i = vec_end; i < count; ++i) {
    scratch[i] = std::exp(scratch[i] - max_logw);
    weight_sum += scratch[i];
  }

  for (std::size_t c = 0; c < dim; ++c) {
    const double* col = increments + c * count;
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= count; i += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(scratch + i), _mm256_loadu_pd(col + i), acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(scratch + i + 4), _mm256_loadu_pd(col + i + 4), acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < count; ++i) acc = std::fma(scratch[i], col[i], acc);
    mean[c] = acc / weight_sum;
  }
  return {max_logw, weight_sum};
}

void exp_inplace(double* values, std::size_t count) {
  const std::size_t vec_end = count & ~std::size_t{3};
  for (std::size_t i = 0; i < vec_end; i += 4) {
    _mm256_storeu_pd(values + i, exp_pd(_mm256_loadu_pd(values + i)));
  }
  for (std::size_t i = vec_end; i < count; ++i) values[i] = std::exp(values[i]);
}

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, &squared_distances, &weighted_increment_mean,
                                 &exp_inplace};
  return &table;
}
}  // namespace detail

}  // namespace sdeflow::simd
