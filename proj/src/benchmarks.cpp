// Registry of the benchmark SDEs and their experiment presets.

#include <cmath>
#include <numbers>

#include "sdeflow/common.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow {
namespace {

double scalar(const ParamMap& p, const char* key) { return p.at(key).value(); }

// Linear SDE dX = B X dt + Sigma dW.
SdeSpec linear_sde(std::string name, const ParamMap& p) {
  const Param& B = p.at("B");
  const Param& S = p.at("Sigma");
  SdeSpec spec;
  spec.name = std::move(name);
  spec.dim = B.rows;
  spec.noise_dim = S.cols;
  spec.drift = [B](std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < B.rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < B.cols; ++c) acc += B.values[r * B.cols + c] * x[c];
      out[r] = acc;
    }
  };
  spec.diffusion = [S](std::span<const double>, std::span<double> out) {
    std::copy(S.values.begin(), S.values.end(), out.begin());
  };
  return spec;
}

// Effective coefficients of a 1D drift-diffusion SDE are its own a(x) and |b(x)|.
void attach_effective_from_coefficients(SdeSpec& spec) {
  VectorField drift = spec.drift;
  VectorField diffusion = spec.diffusion;
  spec.effective_drift = [drift](double x, double) {
    double out = 0.0;
    drift(std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
  };
  spec.effective_diffusion = [diffusion](double x, double) {
    double out = 0.0;
    diffusion(std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return std::abs(out);
  };
}

SdeSpec scalar_sde(std::string name, const ParamMap& p,
                   std::function<double(double)> a, std::function<double(double)> b) {
  SdeSpec spec;
  spec.name = std::move(name);
  spec.params = p;
  spec.drift = [a](std::span<const double> x, std::span<double> out) { out[0] = a(x[0]); };
  spec.diffusion = [b](std::span<const double> x, std::span<double> out) { out[0] = b(x[0]); };
  attach_effective_from_coefficients(spec);
  return spec;
}

ParamMap default_params(const std::string& name) {
  const auto s = Param::scalar;
  if (name == "ou1d") return {{"theta", s(1.0)}, {"mu", s(1.2)}, {"sigma", s(0.3)}};
  if (name == "gbm") return {{"mu", s(2.0)}, {"sigma", s(1.0)}};
  if (name == "exp_diffusion") return {{"mu", s(5.0)}, {"sigma", s(0.5)}};
  if (name == "trig") return {{"k", s(1.0)}, {"sigma", s(0.5)}};
  if (name == "double_well") return {{"sigma", s(0.5)}};
  if (name == "exp_noise") return {{"mu", s(-2.0)}, {"sigma", s(0.1)}};
  if (name == "lognormal_noise") {
    return {{"m", s(1.0 / std::sqrt(std::numbers::e))}, {"theta", s(1.0)}, {"sigma", s(0.3)}};
  }
  if (name == "ou2d") {
    return {{"B", Param::matrix(2, 2, {-1.0, -0.5, -1.0, -1.0})},
            {"Sigma", Param::matrix(2, 2, {1.0, 0.0, 0.0, 0.5})}};
  }
  if (name == "oscillator2d") {
    return {{"B", Param::matrix(2, 2, {0.0, 1.0, -1.0, 0.0})},
            {"Sigma", Param::matrix(2, 2, {0.0, 0.0, 0.0, 0.1})}};
  }
  if (name.starts_with("ou5d_sigma") && name.size() == 11) {
    const std::vector<double> B = {0.2,  1.0, 0.2,  0.4,  0.2,  -1.0, 0.0, 0.2,  0.8,
                                   -1.0, 0.2, 0.2,  -0.8, -1.2, 0.2,  -0.6, 0.0, 1.2,
                                   -0.2, 0.6, 0.2,  0.2,  0.6,  0.4,  0.0};
    std::vector<double> S(25, 0.0);
    switch (name.back()) {
      case '1': S[2 * 5 + 2] = 1.0; break;
      case '2':
        S[1 * 5 + 1] = 0.8;
        S[4 * 5 + 4] = -0.8;
        break;
      case '3':
        S = {0.8, 0.2, 0.0, 0.0, 0.0, -0.4, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
             0.0, 0.0, 0.0, 0.0, 0.0, 0.7,  0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        break;
      case '4':
        S = {0.7, 0.0, -0.4, 0.0,  0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.6,
             0.2, -0.1, 0.0, 0.0, 0.1, -0.6, 0.2, 0.0, 0.0, 0.0, 0.3, 0.8};
        break;
      case '5':
        S = {0.8, 0.2,  0.1, -0.3, 0.1, -0.3, 0.6, 0.1,  0.0, -0.1, 0.2, -0.1, 0.9,
             0.1, 0.2,  0.1, 0.1,  -0.2, 0.7, 0.0, -0.1, 0.1, 0.1,  -0.1, 0.5};
        break;
      default: throw ConfigError("unknown benchmark '" + name + "'");
    }
    return {{"B", Param::matrix(5, 5, B)}, {"Sigma", Param::matrix(5, 5, S)}};
  }
  throw ConfigError("unknown benchmark '" + name + "'");
}

SdeSpec build(const std::string& name, const ParamMap& p) {
  if (name == "ou1d") {
    const double theta = scalar(p, "theta"), mu = scalar(p, "mu"), sigma = scalar(p, "sigma");
    return scalar_sde(name, p, [=](double x) { return theta * (mu - x); },
                      [=](double) { return sigma; });
  }
  if (name == "gbm") {
    const double mu = scalar(p, "mu"), sigma = scalar(p, "sigma");
    return scalar_sde(name, p, [=](double x) { return mu * x; },
                      [=](double x) { return sigma * x; });
  }
  if (name == "exp_diffusion") {
    const double mu = scalar(p, "mu"), sigma = scalar(p, "sigma");
    return scalar_sde(name, p, [=](double x) { return -mu * x; },
                      [=](double x) { return sigma * std::exp(-x * x); });
  }
  if (name == "trig") {
    const double w = 2.0 * scalar(p, "k") * std::numbers::pi, sigma = scalar(p, "sigma");
    return scalar_sde(name, p, [=](double x) { return std::sin(w * x); },
                      [=](double x) { return sigma * std::cos(w * x); });
  }
  if (name == "double_well") {
    const double sigma = scalar(p, "sigma");
    return scalar_sde(name, p, [](double x) { return x - x * x * x; },
                      [=](double) { return sigma; });
  }
  if (name == "exp_noise") {
    // x + mu x dt + sigma sqrt(dt) eta, eta ~ Exp(1), uncentered.
    const double mu = scalar(p, "mu"), sigma = scalar(p, "sigma");
    SdeSpec spec;
    spec.name = name;
    spec.params = p;
    spec.kind = SdeKind::custom_step;
    spec.noise = NoiseLaw::exponential;
    spec.step = [=](std::span<const double> x, double dt, std::span<const double> draw,
                    std::span<double> out) {
      out[0] = x[0] + mu * x[0] * dt + sigma * std::sqrt(dt) * draw[0];
    };
    spec.effective_drift = [=](double x, double dt) { return mu * x + sigma / std::sqrt(dt); };
    spec.effective_diffusion = [=](double, double) { return sigma; };
    return spec;
  }
  if (name == "lognormal_noise") {
    // X' = m^dt X^(1 - theta dt) eta^(sigma sqrt(dt)), eta ~ Lognormal(0, 1).
    const double m = scalar(p, "m"), theta = scalar(p, "theta"), sigma = scalar(p, "sigma");
    SdeSpec spec;
    spec.name = name;
    spec.params = p;
    spec.kind = SdeKind::custom_step;
    spec.noise = NoiseLaw::lognormal;
    spec.positive_state = true;
    spec.variant = EffectiveVariant::lognormal;
    spec.step = [=](std::span<const double> x, double dt, std::span<const double> draw,
                    std::span<double> out) {
      out[0] = std::pow(m, dt) * std::pow(x[0], 1.0 - theta * dt) *
               std::pow(draw[0], sigma * std::sqrt(dt));
    };
    spec.effective_drift = [=](double x, double) {
      return std::log(m * std::pow(x, -theta)) + 0.5 * sigma * sigma;
    };
    spec.effective_diffusion = [=](double x, double dt) {
      return std::sqrt(std::expm1(sigma * sigma * dt)) *
             std::pow(m * std::exp(0.5 * sigma * sigma), dt) * std::pow(x, 1.0 - theta * dt);
    };
    return spec;
  }
  SdeSpec spec = linear_sde(name, p);
  spec.params = p;
  return spec;
}

std::vector<BenchmarkPreset> make_presets() {
  std::vector<BenchmarkPreset> out;
  auto add = [&](std::string name, std::vector<double> lo, std::vector<double> hi,
                 std::size_t steps, std::size_t H, std::size_t J, std::vector<double> x0,
                 double horizon, double metric_time, std::vector<double> cond) {
    out.push_back(BenchmarkPreset{std::move(name), std::move(lo), std::move(hi), 0.01, steps, H, J,
                                  std::move(x0), horizon, metric_time, std::move(cond)});
  };
  add("ou1d", {0.0}, {2.5}, 100, 15'000, 50'000, {1.5}, 5.0, 4.0, {1.5});
  add("gbm", {0.0}, {2.0}, 50, 100'000, 120'000, {0.5}, 1.0, 1.0, {5.0});
  add("exp_diffusion", {-1.0}, {1.0}, 100, 150'000, 60'000, {-0.4}, 10.0, 10.0, {-0.3});
  add("trig", {0.35}, {0.7}, 100, 200'000, 60'000, {0.6}, 10.0, 10.0, {0.5});
  add("double_well", {-2.5}, {2.5}, 100, 100'000, 60'000, {1.5}, 500.0, 300.0, {1.5});
  add("exp_noise", {0.2}, {0.9}, 100, 150'000, 60'000, {0.34}, 5.0, 5.0, {0.34});
  add("lognormal_noise", {0.1}, {2.0}, 100, 200'000, 60'000, {0.4}, 5.0, 5.0, {0.4});
  add("ou2d", {-4.0, -3.0}, {4.0, 3.0}, 100, 350'000, 120'000, {0.3, 0.4}, 5.0, 5.0, {0.0, 0.0});
  add("oscillator2d", {-1.5, -1.5}, {1.5, 1.5}, 100, 3'000'000, 50'000, {0.3, 0.4}, 6.5, 6.5,
      {-0.5, -0.5});
  for (int k = 1; k <= 5; ++k) {
    add("ou5d_sigma" + std::to_string(k), std::vector<double>(5, -1.0),
        std::vector<double>(5, 1.0), 100, 3'000'000, 50'000, {0.3, -0.2, -0.7, 0.5, 0.6}, 5.0,
        5.0, {0.3, -0.2, -0.7, 0.5, 0.6});
  }
  return out;
}

}  // namespace

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& p : make_presets()) v.push_back(p.name);
    return v;
  }();
  return names;
}

SdeSpec make_benchmark(const std::string& name, const ParamMap& overrides) {
  ParamMap params = default_params(name);
  for (const auto& [key, value] : overrides) {
    auto it = params.find(key);
    if (it == params.end()) {
      throw ConfigError("benchmark '" + name + "' has no parameter '" + key + "'");
    }
    if (value.rows != it->second.rows || value.cols != it->second.cols ||
        value.values.size() != value.rows * value.cols) {
      throw ConfigError("parameter '" + key + "' of '" + name + "' has the wrong shape");
    }
    it->second = value;
  }
  return build(name, params);
}

const BenchmarkPreset& benchmark_preset(const std::string& name) {
  static const std::vector<BenchmarkPreset> presets = make_presets();
  for (const auto& p : presets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown benchmark '" + name + "'");
}

}  // namespace sdeflow
