#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sdeflow/common.hpp"
#include "sdeflow/io.hpp"

using namespace sdeflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "sdeflow_test_io";
  fs::create_directories(dir);
  return dir;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string head_bytes(const fs::path& p, std::size_t n) {
  std::ifstream in(p, std::ios::binary);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

ObservationSet sample_obs() {
  const SdeSpec s = make_benchmark("ou2d");
  return build_observation_set(simulate(s, {{-1.0, -1.0}, {1.0, 1.0}}, 7, 4, 0.01, 1));
}

}  // namespace

TEST_CASE("observation file round trip") {
  const fs::path p = scratch_dir() / "obs.sdeobs";
  const ObservationSet obs = sample_obs();
  io::write_observations(p, obs);
  CHECK(head_bytes(p, 8) == std::string("SDEOBS1\0", 8));
  CHECK(fs::file_size(p) == 8 + 3 * 8 + 2 * obs.x.size() * 8);
  const ObservationSet back = io::read_observations(p);
  CHECK(back.dim == 2);
  CHECK(back.dt == obs.dt);
  CHECK(back.x == obs.x);
  CHECK(back.dx == obs.dx);
  io::write_observations_csv(scratch_dir() / "obs.csv", obs);
  CHECK(first_line(scratch_dir() / "obs.csv") == "x_1,x_2,dx_1,dx_2");
}

TEST_CASE("label file round trip with and without provenance trailer") {
  LabeledSet l;
  l.dim = 1;
  l.x = {0.1, 0.2};
  l.z = {-1.0, 1.0};
  l.y = {0.01, -0.02};
  l.meta = {2000, 42, 0.01, 1.0, 0.01, "abc123"};
  const fs::path p = scratch_dir() / "labels.sdelab";
  io::write_labels(p, l);
  CHECK(head_bytes(p, 8) == std::string("SDELAB1\0", 8));
  const LabeledSet back = io::read_labels(p);
  CHECK(back.x == l.x);
  CHECK(back.z == l.z);
  CHECK(back.y == l.y);
  CHECK(back.meta.K == 2000);
  CHECK(back.meta.seed == 42);
  CHECK(back.meta.fraction == 0.01);
  CHECK(back.meta.dt == 0.01);
  CHECK(back.meta.source_digest == "abc123");
  CHECK(content_digest(back) == content_digest(l));

  // The core layout alone (header + three blocks) is a valid file.
  const std::size_t core = 8 + 4 * 8 + 3 * 2 * 8;
  const std::string bytes = head_bytes(p, core);
  const fs::path bare = scratch_dir() / "bare.sdelab";
  std::ofstream(bare, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  const LabeledSet plain = io::read_labels(bare);
  CHECK(plain.y == l.y);
  CHECK(plain.meta.K == 2000);
  CHECK(plain.meta.source_digest.empty());

  io::write_labels_csv(scratch_dir() / "labels.csv", l);
  CHECK(first_line(scratch_dir() / "labels.csv") == "x_1,z_1,y_1");
}

TEST_CASE("model file round trip") {
  FlowMapModel m = FlowMapModel::zeros(2, 3, 0.01);
  for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i] = 0.1 * static_cast<double>(i) - 1.0;
  m.activation = Activation::relu;
  m.in_scaler = {{0.1, 0.2, 0.0, 0.0}, {1.5, 2.0, 1.0, 1.0}};
  m.out_scaler = {{0.01, -0.02}, {0.03, 0.04}};
  m.meta.epochs = 2000;
  m.meta.lr = 0.01;
  m.meta.split = 0.8;
  m.meta.seed = 5;
  m.meta.best_val_loss = 1e-4;
  m.meta.best_epoch = 1999;
  m.meta.final_val_loss = 2e-4;
  m.meta.width_scores = {{3, 1e-4}, {5, 2e-4}};
  const fs::path p = scratch_dir() / "model.sdemlp";
  io::write_model(p, m);
  CHECK(head_bytes(p, 8) == std::string("SDEMLP1\0", 8));
  const FlowMapModel b = io::read_model(p);
  CHECK(b.dim == 2);
  CHECK(b.hidden == 3);
  CHECK(b.activation == Activation::relu);
  CHECK(b.dt == 0.01);
  CHECK(b.params == m.params);
  CHECK(b.in_scaler.mean == m.in_scaler.mean);
  CHECK(b.out_scaler.stdev == m.out_scaler.stdev);
  CHECK(b.meta.best_epoch == 1999);
  CHECK(b.meta.width_scores == m.meta.width_scores);
  const std::vector<double> x{0.3, 0.1}, z{-0.5, 0.5};
  CHECK(b.predict(x, z) == m.predict(x, z));
}

TEST_CASE("ensemble file round trip keeps failures") {
  TrajectoryBatch b;
  b.paths = 3;
  b.steps = 2;
  b.dim = 1;
  b.dt = 0.01;
  b.seed = 9;
  b.data = {0.0, 0.1, 0.2, 1.0, 1.1, 1.2, 2.0, 2.1, 2.2};
  b.failed_paths = {1};
  const fs::path p = scratch_dir() / "ens.sdeens";
  io::write_ensemble(p, b);
  const TrajectoryBatch r = io::read_ensemble(p);
  CHECK(r.paths == 3);
  CHECK(r.steps == 2);
  CHECK(r.seed == 9);
  CHECK(r.data == b.data);
  CHECK(r.failed_paths == b.failed_paths);
}

TEST_CASE("corrupt files are rejected") {
  const fs::path dir = scratch_dir();
  io::write_observations(dir / "good.sdeobs", sample_obs());
  CHECK_THROWS_AS(io::read_labels(dir / "good.sdeobs"), IoError);
  CHECK_THROWS_AS(io::read_observations(dir / "missing.sdeobs"), IoError);

  const std::string bytes = head_bytes(dir / "good.sdeobs", 60);
  std::ofstream(dir / "short.sdeobs", std::ios::binary).write(bytes.data(), 60);
  CHECK_THROWS_AS(io::read_observations(dir / "short.sdeobs"), IoError);

  std::string huge = head_bytes(dir / "good.sdeobs", 32);
  const std::uint64_t big = 1ull << 60;
  std::memcpy(huge.data() + 16, &big, 8);
  std::ofstream(dir / "huge.sdeobs", std::ios::binary).write(huge.data(), 32);
  CHECK_THROWS_AS(io::read_observations(dir / "huge.sdeobs"), IoError);
}

TEST_CASE("moment and curve exports") {
  MomentSeries m;
  m.dim = 1;
  m.n_paths = 2;
  m.times = {0.0, 0.01};
  m.mean = {1.0, 1.1};
  m.stdev = {0.0, 0.1};
  io::write_moments_csv(scratch_dir() / "moments.csv", m, &m);
  CHECK(first_line(scratch_dir() / "moments.csv").rfind("t,", 0) == 0);
  CurveOnGrid c;
  c.grid = {0.0, 1.0};
  c.values = {2.0, 3.0};
  io::write_curves_csv(scratch_dir() / "curves.csv", c.grid, {{"a", &c}});
  CHECK(first_line(scratch_dir() / "curves.csv") == "x,a");
}

TEST_CASE("sidecars") {
  const fs::path art = scratch_dir() / "thing.bin";
  io::write_text(art, "payload");
  io::write_sidecar(art, {{"stage", "simulate"}, {"n", 3}});
  CHECK(io::sidecar_path(art).filename() == "thing.bin.meta.json");
  const auto meta = io::read_sidecar(art);
  CHECK(meta.at("stage") == "simulate");
  CHECK(io::read_text(art) == "payload");
  io::write_text(io::sidecar_path(art), "{not json");
  CHECK_THROWS_AS(io::read_sidecar(art), IoError);
}
