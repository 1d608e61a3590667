#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "sdeflow/evalkit.hpp"
#include "sdeflow/flowmap_net.hpp"
#include "sdeflow/reverse_sampler.hpp"
#include "sdeflow/sde_lab.hpp"

namespace sdeflow::io {

namespace fs = std::filesystem;

// Binary formats are little-endian with 64-bit integers and IEEE doubles.
//   SDEOBS1\0: d, M, dt | x (M x d) | dx (M x d)
//   SDELAB1\0: d, J, K, seed | x | z | y  (J x d each) | optional trailer
//              "SDELABX\0", fraction, nu, dt, digest length, digest bytes
//   SDEMLP1\0: format version, then every FlowMapModel field
//   SDEENS1\0: d, paths, steps, dt, t0, seed, n_failed, failed indices | states

void write_observations(const fs::path& path, const ObservationSet& obs);
ObservationSet read_observations(const fs::path& path);

void write_labels(const fs::path& path, const LabeledSet& labels);
LabeledSet read_labels(const fs::path& path);

void write_model(const fs::path& path, const FlowMapModel& model);
FlowMapModel read_model(const fs::path& path);

void write_ensemble(const fs::path& path, const TrajectoryBatch& batch);
TrajectoryBatch read_ensemble(const fs::path& path);

void write_observations_csv(const fs::path& path, const ObservationSet& obs);
void write_labels_csv(const fs::path& path, const LabeledSet& labels);
void write_moments_csv(const fs::path& path, const MomentSeries& surrogate,
                       const MomentSeries* reference);
/// Columns: x, then one column per named curve (all on the same grid).
void write_curves_csv(const fs::path& path, const std::vector<double>& grid,
                      const std::vector<std::pair<std::string, const CurveOnGrid*>>& curves);

/// Provenance sidecar stored next to an artifact as <artifact>.meta.json.
fs::path sidecar_path(const fs::path& artifact);
void write_sidecar(const fs::path& artifact, const nlohmann::json& meta);
nlohmann::json read_sidecar(const fs::path& artifact);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace sdeflow::io
