#include "sdeflow/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sdeflow/common.hpp"

namespace sdeflow::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kObsMagic[8] = {'S', 'D', 'E', 'O', 'B', 'S', '1', '\0'};
constexpr char kLabMagic[8] = {'S', 'D', 'E', 'L', 'A', 'B', '1', '\0'};
constexpr char kLabTrailer[8] = {'S', 'D', 'E', 'L', 'A', 'B', 'X', '\0'};
constexpr char kMlpMagic[8] = {'S', 'D', 'E', 'M', 'L', 'P', '1', '\0'};
constexpr char kEnsMagic[8] = {'S', 'D', 'E', 'E', 'N', 'S', '1', '\0'};
constexpr std::uint64_t kModelVersion = 1;
// Guards against absurd header values from corrupt files.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open for writing: " + path.string());
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void doubles(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path.string());
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated file: " + path_.string());
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v = 0;
    bytes(&v, sizeof v);
    return v;
  }
  std::vector<double> doubles(std::uint64_t n) {
    if (n > kMaxElements) throw IoError("implausible array length in " + path_.string());
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  void magic(const char (&expected)[8]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, expected, 8) != 0) {
      throw IoError("bad magic in " + path_.string() + " (expected " + std::string(expected) + ")");
    }
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  fs::path path_;
  std::ifstream in_;
};

std::uint64_t checked_product(std::uint64_t a, std::uint64_t b, const fs::path& path) {
  if (a != 0 && b > kMaxElements / a) throw IoError("implausible header in " + path.string());
  return a * b;
}

std::ofstream open_text(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_observations(const fs::path& path, const ObservationSet& obs) {
  Writer w(path);
  w.bytes(kObsMagic, 8);
  w.u64(obs.dim);
  w.u64(obs.size());
  w.f64(obs.dt);
  w.doubles(obs.x);
  w.doubles(obs.dx);
  w.finish();
}

ObservationSet read_observations(const fs::path& path) {
  Reader r(path);
  r.magic(kObsMagic);
  ObservationSet obs;
  obs.dim = r.u64();
  const std::uint64_t M = r.u64();
  obs.dt = r.f64();
  if (obs.dim == 0) throw IoError("zero dimension in " + path.string());
  const std::uint64_t n = checked_product(M, obs.dim, path);
  obs.x = r.doubles(n);
  obs.dx = r.doubles(n);
  return obs;
}

void write_labels(const fs::path& path, const LabeledSet& labels) {
  Writer w(path);
  w.bytes(kLabMagic, 8);
  w.u64(labels.dim);
  w.u64(labels.size());
  w.u64(labels.meta.K);
  w.u64(labels.meta.seed);
  w.doubles(labels.x);
  w.doubles(labels.z);
  w.doubles(labels.y);
  w.bytes(kLabTrailer, 8);
  w.f64(labels.meta.fraction);
  w.f64(labels.meta.nu);
  w.f64(labels.meta.dt);
  w.u64(labels.meta.source_digest.size());
  w.bytes(labels.meta.source_digest.data(), labels.meta.source_digest.size());
  w.finish();
}

LabeledSet read_labels(const fs::path& path) {
  Reader r(path);
  r.magic(kLabMagic);
  LabeledSet labels;
  labels.dim = r.u64();
  const std::uint64_t J = r.u64();
  labels.meta.K = r.u64();
  labels.meta.seed = r.u64();
  if (labels.dim == 0) throw IoError("zero dimension in " + path.string());
  const std::uint64_t n = checked_product(J, labels.dim, path);
  labels.x = r.doubles(n);
  labels.z = r.doubles(n);
  labels.y = r.doubles(n);
  if (!r.at_end()) {
    r.magic(kLabTrailer);
    labels.meta.fraction = r.f64();
    labels.meta.nu = r.f64();
    labels.meta.dt = r.f64();
    const std::uint64_t len = r.u64();
    if (len > 1024) throw IoError("implausible digest length in " + path.string());
    labels.meta.source_digest.resize(len);
    r.bytes(labels.meta.source_digest.data(), len);
  }
  return labels;
}

void write_model(const fs::path& path, const FlowMapModel& m) {
  Writer w(path);
  w.bytes(kMlpMagic, 8);
  w.u64(kModelVersion);
  w.u64(m.dim);
  w.u64(m.hidden);
  w.u64(m.activation == Activation::relu ? 1 : 0);
  w.f64(m.dt);
  w.u64(m.params.size());
  w.doubles(m.params);
  w.doubles(m.in_scaler.mean);
  w.doubles(m.in_scaler.stdev);
  w.doubles(m.out_scaler.mean);
  w.doubles(m.out_scaler.stdev);
  w.u64(m.meta.epochs);
  w.f64(m.meta.lr);
  w.f64(m.meta.split);
  w.u64(m.meta.batch);
  w.u64(m.meta.seed);
  w.f64(m.meta.best_val_loss);
  w.u64(m.meta.best_epoch);
  w.f64(m.meta.final_val_loss);
  w.u64(m.meta.width_scores.size());
  for (const auto& [width, score] : m.meta.width_scores) {
    w.u64(width);
    w.f64(score);
  }
  w.finish();
}

FlowMapModel read_model(const fs::path& path) {
  Reader r(path);
  r.magic(kMlpMagic);
  const std::uint64_t version = r.u64();
  if (version != kModelVersion) {
    throw IoError("unsupported model version " + std::to_string(version) + " in " + path.string());
  }
  FlowMapModel m;
  m.dim = r.u64();
  m.hidden = r.u64();
  m.activation = r.u64() == 1 ? Activation::relu : Activation::tanh;
  m.dt = r.f64();
  const std::uint64_t P = r.u64();
  if (m.dim == 0 || m.hidden == 0 || P != FlowMapModel::parameter_count(m.dim, m.hidden)) {
    throw IoError("inconsistent model shape in " + path.string());
  }
  m.params = r.doubles(P);
  m.in_scaler.mean = r.doubles(2 * m.dim);
  m.in_scaler.stdev = r.doubles(2 * m.dim);
  m.out_scaler.mean = r.doubles(m.dim);
  m.out_scaler.stdev = r.doubles(m.dim);
  m.meta.epochs = r.u64();
  m.meta.lr = r.f64();
  m.meta.split = r.f64();
  m.meta.batch = r.u64();
  m.meta.seed = r.u64();
  m.meta.best_val_loss = r.f64();
  m.meta.best_epoch = r.u64();
  m.meta.final_val_loss = r.f64();
  const std::uint64_t n_scores = r.u64();
  if (n_scores > 4096) throw IoError("implausible width grid in " + path.string());
  for (std::uint64_t i = 0; i < n_scores; ++i) {
    const std::uint64_t width = r.u64();
    m.meta.width_scores.emplace_back(width, r.f64());
  }
  if (!all_finite(m.params)) throw IoError("non-finite model parameters in " + path.string());
  return m;
}

void write_ensemble(const fs::path& path, const TrajectoryBatch& b) {
  Writer w(path);
  w.bytes(kEnsMagic, 8);
  w.u64(b.dim);
  w.u64(b.paths);
  w.u64(b.steps);
  w.f64(b.dt);
  w.f64(b.t0);
  w.u64(b.seed);
  w.u64(b.failed_paths.size());
  for (std::size_t p : b.failed_paths) w.u64(p);
  w.doubles(b.data);
  w.finish();
}

TrajectoryBatch read_ensemble(const fs::path& path) {
  Reader r(path);
  r.magic(kEnsMagic);
  TrajectoryBatch b;
  b.dim = r.u64();
  b.paths = r.u64();
  b.steps = r.u64();
  b.dt = r.f64();
  b.t0 = r.f64();
  b.seed = r.u64();
  const std::uint64_t n_failed = r.u64();
  if (n_failed > b.paths) throw IoError("implausible failure list in " + path.string());
  for (std::uint64_t i = 0; i < n_failed; ++i) b.failed_paths.push_back(r.u64());
  const std::uint64_t n = checked_product(checked_product(b.paths, b.steps + 1, path), b.dim, path);
  b.data = r.doubles(n);
  return b;
}

void write_observations_csv(const fs::path& path, const ObservationSet& obs) {
  auto out = open_text(path);
  for (std::size_t c = 0; c < obs.dim; ++c) out << (c ? "," : "") << "x_" << c + 1;
  for (std::size_t c = 0; c < obs.dim; ++c) out << ",dx_" << c + 1;
  out << '\n';
  for (std::size_t m = 0; m < obs.size(); ++m) {
    for (std::size_t c = 0; c < obs.dim; ++c) out << (c ? "," : "") << obs.x[m * obs.dim + c];
    for (std::size_t c = 0; c < obs.dim; ++c) out << ',' << obs.dx[m * obs.dim + c];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_labels_csv(const fs::path& path, const LabeledSet& labels) {
  auto out = open_text(path);
  const std::size_t d = labels.dim;
  for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << "x_" << c + 1;
  for (std::size_t c = 0; c < d; ++c) out << ",z_" << c + 1;
  for (std::size_t c = 0; c < d; ++c) out << ",y_" << c + 1;
  out << '\n';
  for (std::size_t j = 0; j < labels.size(); ++j) {
    for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << labels.x[j * d + c];
    for (std::size_t c = 0; c < d; ++c) out << ',' << labels.z[j * d + c];
    for (std::size_t c = 0; c < d; ++c) out << ',' << labels.y[j * d + c];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_moments_csv(const fs::path& path, const MomentSeries& s, const MomentSeries* ref) {
  auto out = open_text(path);
  out << "t";
  for (std::size_t c = 0; c < s.dim; ++c) out << ",mean_" << c + 1 << ",std_" << c + 1;
  if (ref) {
    for (std::size_t c = 0; c < s.dim; ++c) out << ",ref_mean_" << c + 1 << ",ref_std_" << c + 1;
  }
  out << '\n';
  for (std::size_t l = 0; l < s.times.size(); ++l) {
    out << s.times[l];
    for (std::size_t c = 0; c < s.dim; ++c) out << ',' << s.mean_at(l)[c] << ',' << s.std_at(l)[c];
    if (ref && l < ref->times.size()) {
      for (std::size_t c = 0; c < s.dim; ++c) out << ',' << ref->mean_at(l)[c] << ',' << ref->std_at(l)[c];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_curves_csv(const fs::path& path, const std::vector<double>& grid,
                      const std::vector<std::pair<std::string, const CurveOnGrid*>>& curves) {
  auto out = open_text(path);
  out << "x";
  for (const auto& [name, curve] : curves) {
    if (curve->values.size() != grid.size()) throw std::invalid_argument("curve length mismatch");
    out << ',' << name;
  }
  out << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << grid[i];
    for (const auto& [name, curve] : curves) out << ',' << curve->values[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path sidecar_path(const fs::path& artifact) {
  return fs::path(artifact.string() + ".meta.json");
}

void write_sidecar(const fs::path& artifact, const nlohmann::json& meta) {
  write_text(sidecar_path(artifact), meta.dump(2) + "\n");
}

nlohmann::json read_sidecar(const fs::path& artifact) {
  const fs::path p = sidecar_path(artifact);
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed metadata " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sdeflow::io
