#include <algorithm>
#include <cmath>
#include <limits>

#include "sdeflow/simd/kernels.hpp"

namespace sdeflow::simd {
namespace {

void squared_distances(const double* points, std::size_t count, std::size_t stride,
                       std::size_t dim, const double* query, double* out) {
  std::fill(out, out + count, 0.0);
  for (std::size_t c = 0; c < dim; ++c) {
    const double* col = points + c * stride;
    const double q = query[c];
    for (std::size_t i = 0; i < count; ++i) {
      const double diff = col[i] - q;
      out[i] += diff * diff;
    }
  }
}

WeightedMean weighted_increment_mean(const double* increments, std::size_t count,
                                     std::size_t dim, const double* spatial_logw,
                                     const double* z, double alpha, double inv_two_beta2,
                                     double* scratch, double* mean) {
  double max_logw = -std::numeric_limits<double>::infinity();
  bool saw_nan = false;
  for (std::size_t i = 0; i < count; ++i) {
    double q = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = z[c] - alpha * increments[c * count + i];
      q += diff * diff;
    }
    const double logw = spatial_logw[i] - q * inv_two_beta2;
    saw_nan |= std::isnan(logw);
    scratch[i] = logw;
    max_logw = std::max(max_logw, logw);
  }
  if (saw_nan) return {max_logw, std::numeric_limits<double>::quiet_NaN()};

  double weight_sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    scratch[i] = std::exp(scratch[i] - max_logw);
    weight_sum += scratch[i];
  }
  for (std::size_t c = 0; c < dim; ++c) {
    const double* col = increments + c * count;
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += scratch[i] * col[i];
    mean[c] = acc / weight_sum;
  }
  return {max_logw, weight_sum};
}

void exp_inplace(double* values, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) values[i] = std::exp(values[i]);
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, &squared_distances, &weighted_increment_mean,
                                 &exp_inplace};
  return table;
}
}  // namespace detail

}  // namespace sdeflow::simd
