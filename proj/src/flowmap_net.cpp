#include "sdeflow/flowmap_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "sdeflow/common.hpp"
#include "sdeflow/parallel.hpp"
#include "sdeflow/random.hpp"

namespace sdeflow {

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

AffineScaler AffineScaler::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

AffineScaler AffineScaler::fit(std::span<const double> rows, std::size_t dim,
                               std::span<const std::size_t> selected) {
  if (selected.empty()) throw std::invalid_argument("scaler: no rows to fit");
  AffineScaler s = identity(dim);
  const double n = static_cast<double>(selected.size());
  for (std::size_t c = 0; c < dim; ++c) {
    double mean = 0.0;
    for (std::size_t r : selected) mean += rows[r * dim + c];
    mean /= n;
    double var = 0.0;
    for (std::size_t r : selected) {
      const double dv = rows[r * dim + c] - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / n);
    s.mean[c] = mean;
    s.stdev[c] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  return s;
}

void AffineScaler::apply(std::span<const double> v, std::span<double> out) const {
  for (std::size_t c = 0; c < mean.size(); ++c) out[c] = (v[c] - mean[c]) / stdev[c];
}

void AffineScaler::invert(std::span<const double> u, std::span<double> out) const {
  for (std::size_t c = 0; c < mean.size(); ++c) out[c] = u[c] * stdev[c] + mean[c];
}

std::size_t FlowMapModel::parameter_count(std::size_t dim, std::size_t hidden) {
  return 2 * dim * hidden + hidden + hidden * dim + dim;
}

FlowMapModel FlowMapModel::zeros(std::size_t dim, std::size_t hidden, double dt) {
  FlowMapModel m;
  m.dim = dim;
  m.hidden = hidden;
  m.dt = dt;
  m.params.assign(parameter_count(dim, hidden), 0.0);
  m.in_scaler = AffineScaler::identity(2 * dim);
  m.out_scaler = AffineScaler::identity(dim);
  return m;
}

namespace {

inline double activate(Activation a, double v) {
  return a == Activation::tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}

// Network output for one standardized input row; `hidden` receives the activations.
void forward(const FlowMapModel& m, const double* u, double* hidden, double* out) {
  const std::size_t h = m.hidden;
  const std::size_t d = m.dim;
  const double* W1 = m.params.data() + m.w1_offset();
  const double* b1 = m.params.data() + m.b1_offset();
  const double* W2 = m.params.data() + m.w2_offset();
  const double* b2 = m.params.data() + m.b2_offset();
  std::copy(b1, b1 + h, hidden);
  for (std::size_t i = 0; i < m.in_dim(); ++i) {
    const double ui = u[i];
    const double* row = W1 + i * h;
    for (std::size_t j = 0; j < h; ++j) hidden[j] += ui * row[j];
  }
  for (std::size_t j = 0; j < h; ++j) hidden[j] = activate(m.activation, hidden[j]);
  std::copy(b2, b2 + d, out);
  for (std::size_t j = 0; j < h; ++j) {
    const double aj = hidden[j];
    const double* row = W2 + j * d;
    for (std::size_t c = 0; c < d; ++c) out[c] += aj * row[c];
  }
}

}  // namespace

void FlowMapModel::predict(std::span<const double> x, std::span<const double> z,
                           std::span<double> out) const {
  thread_local std::vector<double> u;
  thread_local std::vector<double> raw;
  thread_local std::vector<double> act;
  u.resize(in_dim());
  raw.resize(dim);
  act.resize(hidden);
  std::copy(x.begin(), x.end(), u.begin());
  std::copy(z.begin(), z.end(), u.begin() + static_cast<std::ptrdiff_t>(dim));
  in_scaler.apply(u, u);
  forward(*this, u.data(), act.data(), raw.data());
  out_scaler.invert(raw, out);
}

std::vector<double> FlowMapModel::predict(std::span<const double> x,
                                          std::span<const double> z) const {
  std::vector<double> out(dim);
  predict(x, z, out);
  return out;
}

double loss_and_gradient(const FlowMapModel& m, const TrainingData& data,
                         std::span<const std::size_t> rows, std::vector<double>* grad) {
  const std::size_t h = m.hidden;
  const std::size_t d = m.dim;
  const std::size_t in = m.in_dim();
  if (data.in_dim != in || data.out_dim != d) throw std::invalid_argument("loss: shape mismatch");
  if (rows.empty()) throw std::invalid_argument("loss: no rows");
  if (grad) grad->assign(m.params.size(), 0.0);

  std::vector<double> act(h);
  std::vector<double> out(d);
  std::vector<double> g_out(d);
  std::vector<double> g_h(h);
  const double norm = 1.0 / static_cast<double>(rows.size() * d);
  const double* W2 = m.params.data() + m.w2_offset();
  double loss = 0.0;

  for (std::size_t r : rows) {
    const double* u = data.inputs.data() + r * in;
    const double* t = data.targets.data() + r * d;
    forward(m, u, act.data(), out.data());
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = out[c] - t[c];
      loss += diff * diff;
      g_out[c] = 2.0 * diff * norm;
    }
    if (!grad) continue;
    double* gW1 = grad->data() + m.w1_offset();
    double* gb1 = grad->data() + m.b1_offset();
    double* gW2 = grad->data() + m.w2_offset();
    double* gb2 = grad->data() + m.b2_offset();
    for (std::size_t c = 0; c < d; ++c) gb2[c] += g_out[c];
    for (std::size_t j = 0; j < h; ++j) {
      double ga = 0.0;
      const double* w2row = W2 + j * d;
      double* gw2row = gW2 + j * d;
      for (std::size_t c = 0; c < d; ++c) {
        gw2row[c] += act[j] * g_out[c];
        ga += w2row[c] * g_out[c];
      }
      const double deriv = m.activation == Activation::tanh ? 1.0 - act[j] * act[j]
                                                            : (act[j] > 0.0 ? 1.0 : 0.0);
      g_h[j] = ga * deriv;
      gb1[j] += g_h[j];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double ui = u[i];
      double* gw1row = gW1 + i * h;
      for (std::size_t j = 0; j < h; ++j) gw1row[j] += ui * g_h[j];
    }
  }
  return loss * norm;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n,
                                                                         double split,
                                                                         std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("split: no rows");
  if (!(split > 0.0 && split < 1.0)) throw std::invalid_argument("split must lie in (0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, 0x5b117ull);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::size_t n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n > 1 ? n - 1 : 1);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

namespace {

struct Prepared {
  TrainingData data;
  AffineScaler in_scaler;
  AffineScaler out_scaler;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
};

Prepared prepare(const LabeledSet& labels, double split, std::uint64_t seed) {
  const std::size_t d = labels.dim;
  const std::size_t n = labels.size();
  Prepared p;
  std::tie(p.train_rows, p.val_rows) = split_rows(n, split, seed);
  std::vector<double> inputs(n * 2 * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      inputs[r * 2 * d + c] = labels.x[r * d + c];
      inputs[r * 2 * d + d + c] = labels.z[r * d + c];
    }
  }
  p.in_scaler = AffineScaler::fit(inputs, 2 * d, p.train_rows);
  p.out_scaler = AffineScaler::fit(labels.y, d, p.train_rows);
  p.data.in_dim = 2 * d;
  p.data.out_dim = d;
  p.data.inputs.resize(n * 2 * d);
  p.data.targets.resize(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    p.in_scaler.apply({inputs.data() + r * 2 * d, 2 * d}, {p.data.inputs.data() + r * 2 * d, 2 * d});
    p.out_scaler.apply({labels.y.data() + r * d, d}, {p.data.targets.data() + r * d, d});
  }
  return p;
}

FlowMapModel train_width(const Prepared& p, std::size_t dim, double dt, std::size_t width,
                         const TrainOptions& opt) {
  FlowMapModel m = FlowMapModel::zeros(dim, width, dt);
  m.activation = opt.activation;
  m.in_scaler = p.in_scaler;
  m.out_scaler = p.out_scaler;

  Rng init(opt.seed, 0x1000000ull + width);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(m.in_dim() + width));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(width + dim));
  for (std::size_t i = 0; i < m.in_dim() * width; ++i) m.params[m.w1_offset() + i] = init.uniform(-lim1, lim1);
  for (std::size_t i = 0; i < width * dim; ++i) m.params[m.w2_offset() + i] = init.uniform(-lim2, lim2);

  const std::size_t P = m.params.size();
  std::vector<double> grad(P);
  std::vector<double> m1(P, 0.0);
  std::vector<double> m2(P, 0.0);
  const double beta1 = 0.9;
  const double beta2 = 0.999;
  const double eps = 1e-8;
  double beta1_t = 1.0;
  double beta2_t = 1.0;

  const std::vector<std::size_t>& val = p.val_rows.empty() ? p.train_rows : p.val_rows;
  std::vector<std::size_t> order = p.train_rows;
  const std::size_t n_train = order.size();
  const std::size_t batch = opt.batch == 0 || opt.batch >= n_train ? n_train : opt.batch;

  std::vector<double> best = m.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  double last_loss = best_loss;

  auto fail = [&](std::size_t epoch) {
    throw NumericalError("train: divergent loss at width " + std::to_string(width) + ", epoch " +
                         std::to_string(epoch));
  };

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    if (batch < n_train) {
      Rng shuffle(opt.seed, (static_cast<std::uint64_t>(width) << 32) + epoch);
      for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    }
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t stop = std::min(n_train, start + batch);
      const double loss = loss_and_gradient(
          m, p.data, std::span<const std::size_t>(order.data() + start, stop - start), &grad);
      if (!std::isfinite(loss)) fail(epoch);
      beta1_t *= beta1;
      beta2_t *= beta2;
      const double step = opt.lr * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      for (std::size_t i = 0; i < P; ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        m.params[i] -= step * m1[i] / (std::sqrt(m2[i]) + eps * std::sqrt(1.0 - beta2_t));
      }
    }
    last_loss = loss_and_gradient(m, p.data, val, nullptr);
    if (!std::isfinite(last_loss)) fail(epoch);
    if (last_loss < best_loss) {
      best_loss = last_loss;
      best_epoch = epoch;
      best = m.params;
    }
  }
  if (opt.epochs == 0) {
    best_loss = last_loss = loss_and_gradient(m, p.data, val, nullptr);
  }
  m.params = std::move(best);
  m.meta.epochs = opt.epochs;
  m.meta.lr = opt.lr;
  m.meta.split = opt.split;
  m.meta.batch = opt.batch;
  m.meta.seed = opt.seed;
  m.meta.best_val_loss = best_loss;
  m.meta.best_epoch = best_epoch;
  m.meta.final_val_loss = last_loss;
  return m;
}

}  // namespace

FlowMapModel train(const LabeledSet& labels, const TrainOptions& options) {
  if (labels.size() == 0) throw std::invalid_argument("train: empty labeled set");
  if (options.widths.empty()) throw std::invalid_argument("train: no hidden widths");
  for (std::size_t w : options.widths) {
    if (w == 0) throw std::invalid_argument("train: hidden width must be positive");
  }
  if (!(options.lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  const Prepared p = prepare(labels, options.split, options.seed);

  std::vector<FlowMapModel> models(options.widths.size());
  parallel_chunks(models.size(), options.workers,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      models[i] = train_width(p, labels.dim, labels.meta.dt, options.widths[i], options);
                    }
                  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (models[i].meta.best_val_loss < models[best].meta.best_val_loss) best = i;
  }
  FlowMapModel out = std::move(models[best]);
  for (std::size_t i = 0; i < options.widths.size(); ++i) {
    out.meta.width_scores.emplace_back(options.widths[i],
                                       i == best ? out.meta.best_val_loss : models[i].meta.best_val_loss);
  }
  return out;
}

double prediction_mse(const FlowMapModel& model, const LabeledSet& labels,
                      std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("prediction_mse: no rows");
  const std::size_t d = labels.dim;
  std::vector<double> out(d);
  double acc = 0.0;
  for (std::size_t r : rows) {
    model.predict({labels.x.data() + r * d, d}, {labels.z.data() + r * d, d}, out);
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = out[c] - labels.y[r * d + c];
      acc += diff * diff;
    }
  }
  return acc / static_cast<double>(rows.size() * d);
}

IncrementSampler model_sampler(const FlowMapModel& model) {
  auto shared = std::make_shared<const FlowMapModel>(model);
  return [shared](std::span<const double> x, std::span<const double> z, std::span<double> out) {
    shared->predict(x, z, out);
  };
}

TrajectoryBatch simulate_surrogate(const IncrementSampler& sampler, std::size_t dim, double dt,
                                   std::span<const double> x0, std::size_t steps,
                                   std::size_t n_paths, std::uint64_t seed, std::size_t workers) {
  if (steps < 1) throw std::invalid_argument("simulate_surrogate: steps must be at least 1");
  if (n_paths < 1) throw std::invalid_argument("simulate_surrogate: need at least one path");
  if (x0.size() != dim) throw std::invalid_argument("simulate_surrogate: x0 dimension mismatch");
  if (!all_finite(x0)) throw std::invalid_argument("simulate_surrogate: non-finite x0");
  TrajectoryBatch batch;
  batch.paths = n_paths;
  batch.steps = steps;
  batch.dim = dim;
  batch.dt = dt;
  batch.seed = seed;
  batch.data.resize(n_paths * (steps + 1) * dim);
  std::vector<char> failed(n_paths, 0);

  parallel_chunks(n_paths, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> z(dim);
    std::vector<double> dx(dim);
    for (std::size_t p = begin; p < end; ++p) {
      Rng rng(seed, p);
      auto s0 = batch.state(p, 0);
      std::copy(x0.begin(), x0.end(), s0.begin());
      for (std::size_t l = 0; l < steps; ++l) {
        for (double& v : z) v = rng.normal();
        const auto cur = batch.state(p, l);
        auto next = batch.state(p, l + 1);
        sampler(cur, z, dx);
        for (std::size_t c = 0; c < dim; ++c) next[c] = cur[c] + dx[c];
        if (!all_finite(next)) {
          failed[p] = 1;
          const auto tail_begin = batch.data.begin() + static_cast<std::ptrdiff_t>((p * (steps + 1) + l + 1) * dim);
          const auto tail_end = batch.data.begin() + static_cast<std::ptrdiff_t>((p + 1) * (steps + 1) * dim);
          std::fill(tail_begin, tail_end, std::numeric_limits<double>::quiet_NaN());
          break;
        }
      }
    }
  });
  for (std::size_t p = 0; p < n_paths; ++p) {
    if (failed[p]) batch.failed_paths.push_back(p);
  }
  return batch;
}

TrajectoryBatch simulate_surrogate(const FlowMapModel& model, std::span<const double> x0,
                                   std::size_t steps, std::size_t n_paths, std::uint64_t seed,
                                   std::size_t workers) {
  return simulate_surrogate(model_sampler(model), model.dim, model.dt, x0, steps, n_paths, seed,
                            workers);
}

}  // namespace sdeflow
