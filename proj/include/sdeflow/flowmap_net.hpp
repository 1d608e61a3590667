#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdeflow/reverse_sampler.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow {

enum class Activation { tanh, relu };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Per-coordinate standardization u = (v - mean) / std.
struct AffineScaler {
  std::vector<double> mean;
  std::vector<double> stdev;

  static AffineScaler identity(std::size_t dim);
  /// Fits on the selected rows of a row-major matrix. A coordinate with zero spread gets std 1.
  static AffineScaler fit(std::span<const double> rows, std::size_t dim,
                          std::span<const std::size_t> selected);

  std::size_t dim() const { return mean.size(); }
  void apply(std::span<const double> v, std::span<double> out) const;
  void invert(std::span<const double> u, std::span<double> out) const;
};

struct TrainMeta {
  std::size_t epochs = 0;
  double lr = 0.0;
  double split = 0.0;
  std::size_t batch = 0;  // 0 means full batch
  std::uint64_t seed = 0;
  double best_val_loss = 0.0;   // standardized-space MSE at the retained checkpoint
  std::size_t best_epoch = 0;
  double final_val_loss = 0.0;  // standardized-space MSE after the last epoch
  std::vector<std::pair<std::size_t, double>> width_scores;  // (width, best validation MSE)
};

/// One-hidden-layer network G(x, z) = W2^T act(W1^T u + b1) + b2 on standardized
/// inputs u = scale(x, z), with de-standardized output.
/// Parameter layout: W1 (2d x h, row-major), b1 (h), W2 (h x d, row-major), b2 (d).
struct FlowMapModel {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  Activation activation = Activation::tanh;
  double dt = 0.0;
  std::vector<double> params;
  AffineScaler in_scaler;
  AffineScaler out_scaler;
  TrainMeta meta;

  static FlowMapModel zeros(std::size_t dim, std::size_t hidden, double dt);
  static std::size_t parameter_count(std::size_t dim, std::size_t hidden);

  std::size_t in_dim() const { return 2 * dim; }
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return in_dim() * hidden; }
  std::size_t w2_offset() const { return b1_offset() + hidden; }
  std::size_t b2_offset() const { return w2_offset() + hidden * dim; }

  /// De-scaled increment for (x, z). Reentrant.
  void predict(std::span<const double> x, std::span<const double> z, std::span<double> out) const;
  std::vector<double> predict(std::span<const double> x, std::span<const double> z) const;
};

/// Same as model.predict(x, z).
inline std::vector<double> predict_increment(const FlowMapModel& model, std::span<const double> x,
                                             std::span<const double> z) {
  return model.predict(x, z);
}

/// Standardized regression problem: rows of inputs (2d) and targets (d).
struct TrainingData {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  std::size_t size() const { return in_dim == 0 ? 0 : inputs.size() / in_dim; }
};

/// Mean squared error over the selected rows (averaged over rows and output coordinates)
/// in standardized space, ignoring the model's scalers. Fills `grad` (same layout as
/// params) when non-null.
double loss_and_gradient(const FlowMapModel& model, const TrainingData& data,
                         std::span<const std::size_t> rows, std::vector<double>* grad);

struct TrainOptions {
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::size_t epochs = 2000;
  double lr = 0.01;
  double split = 0.8;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  Activation activation = Activation::tanh;
  std::size_t workers = 1;  // widths trained concurrently
};

/// Adam on the MSE loss for every width; each width keeps its best-validation
/// parameters and the width with the lowest validation MSE is returned.
/// Throws NumericalError naming width and epoch if the loss turns NaN.
FlowMapModel train(const LabeledSet& labels, const TrainOptions& options);

/// Deterministic 80/20-style split: (train rows, validation rows). Validation is empty for n = 1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n,
                                                                         double split,
                                                                         std::uint64_t seed);

/// MSE of model predictions against labels in original units over the given rows.
double prediction_mse(const FlowMapModel& model, const LabeledSet& labels,
                      std::span<const std::size_t> rows);

/// One-step increment map (x, z) -> dx used for autoregressive simulation.
using IncrementSampler =
    std::function<void(std::span<const double> x, std::span<const double> z, std::span<double> out)>;

IncrementSampler model_sampler(const FlowMapModel& model);

/// x_{k+1} = x_k + G(x_k, z_k) with z_k ~ N(0, I_d) from stream (seed, path).
/// A path that turns non-finite is stopped; its index goes to failed_paths and its
/// remaining states are NaN.
TrajectoryBatch simulate_surrogate(const IncrementSampler& sampler, std::size_t dim, double dt,
                                   std::span<const double> x0, std::size_t steps,
                                   std::size_t n_paths, std::uint64_t seed,
                                   std::size_t workers = 1);

TrajectoryBatch simulate_surrogate(const FlowMapModel& model, std::span<const double> x0,
                                   std::size_t steps, std::size_t n_paths, std::uint64_t seed,
                                   std::size_t workers = 1);

}  // namespace sdeflow
