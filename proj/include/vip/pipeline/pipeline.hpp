#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vip/analysis/spectrum.hpp"
#include "vip/calib/calibration.hpp"
#include "vip/detsim/simulator.hpp"
#include "vip/eventsel/clusters.hpp"
#include "vip/limits/limits.hpp"
#include "vip/model/types.hpp"

namespace vip::pipeline {

// ---------------------------------------------------------------------------
// In-memory processing (ensembles, acceptance studies)
// ---------------------------------------------------------------------------

struct ProcessedRun {
  RunMode mode = RunMode::current_on;
  std::size_t frames = 0;
  double exposure_min = 0.0;
  std::vector<eventsel::AcceptedEvent> events;
  // Per source: deposits generated, and deposits whose primary pixel lies in
  // an accepted cluster (each accepted cluster credited once).
  std::array<std::uint64_t, detsim::kSourceCount> injected{};
  std::array<std::uint64_t, detsim::kSourceCount> accepted{};
};

/// simulate -> find_clusters -> select for one run, without touching disk.
ProcessedRun process_run(const RunConfig& cfg, RunMode mode);

/// Truth matching for one frame.
void match_truth(const detsim::SimulatedFrame& frame, std::span<const eventsel::Cluster> clusters,
                 const SelectionPolicy& policy, const ResponseModel& response,
                 std::array<std::uint64_t, detsim::kSourceCount>& injected,
                 std::array<std::uint64_t, detsim::kSourceCount>& accepted);

/// ROI edges actually used: outer edges of the bins whose centres fall inside
/// the configured ROI.
std::pair<double, double> roi_bin_edges(const RunConfig& cfg);

/// Expected accepted background counts inside the ROI per minute of run
/// (all active CCDs, current off), from the source model.
double expected_roi_background_per_min(const RunConfig& cfg);

/// Background-limited expected bound for the configured run.
limits::SensitivityProjection analytic_sensitivity(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// On-disk stages
// ---------------------------------------------------------------------------

struct Artifact {
  std::string path;  // relative to the experiment directory when inside it
  std::string digest;
};

struct StageRecord {
  std::string name;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  double wall_s = 0.0;
};

/// Digest of a frame directory: every file, sorted by name.
std::string directory_digest(const std::filesystem::path& dir);
/// File digest, or directory digest for directories.
std::string artifact_digest(const std::filesystem::path& path);

/// Writes frames plus `run.json` (config echo, frame count, seed, mode,
/// exposure) into `out_dir`.
StageRecord stage_simulate(const RunConfig& cfg, RunMode mode, const std::filesystem::path& out_dir);
/// Clusters and selects every frame in `frame_dir`; writes the events CSV
/// and its `.json` sidecar (mode, exposure, policy).
StageRecord stage_select(const RunConfig& cfg, const std::filesystem::path& frame_dir,
                         const std::filesystem::path& out_csv);
StageRecord stage_calibrate(const RunConfig& cfg, const std::filesystem::path& events_csv,
                            std::span<const std::string> labels,
                            const std::filesystem::path& out_json);
StageRecord stage_spectra(const RunConfig& cfg, const std::filesystem::path& events_csv,
                          const std::filesystem::path& calib_json,
                          const std::filesystem::path& out_csv);
StageRecord stage_subtract(const RunConfig& cfg, const std::filesystem::path& on_csv,
                           const std::filesystem::path& off_csv,
                           const std::filesystem::path& out_csv);
StageRecord stage_roistats(const std::filesystem::path& subtracted_csv,
                           const std::filesystem::path& out_json);
StageRecord stage_linefit(const RunConfig& cfg, const std::filesystem::path& subtracted_csv,
                          const std::filesystem::path& out_json);
StageRecord stage_limit(const RunConfig& cfg, const std::filesystem::path& roistats_json,
                        const std::filesystem::path& out_json);
/// (x, y, yerr) triplets from a spectrum or subtracted-spectrum CSV.
StageRecord stage_plotdata(const std::filesystem::path& in_csv,
                           const std::filesystem::path& out_csv);

/// Full limit report: every LimitResult field plus locality bound,
/// projection, config digest and the reconstructed-input notes.
nlohmann::json limit_report(const RunConfig& cfg, const limits::LimitResult& result);

struct PipelineManifest {
  std::string config_digest;
  std::uint64_t master_seed = 0;
  std::vector<StageRecord> stages;
  std::string status = "ok";
  std::string failed_stage;
  std::string error;
};

nlohmann::json to_json(const PipelineManifest& m, bool with_timing = false);
PipelineManifest manifest_from_json(const nlohmann::json& j);

/// Every stage input must equal (path and digest) an output of an earlier
/// stage. Returns a description of the first broken link, or nullopt.
std::optional<std::string> check_digest_chain(const PipelineManifest& m);

struct ExperimentResult {
  PipelineManifest manifest;
  limits::LimitResult limit;
};

/// calibration run, current-on and current-off runs, full analysis, limit.
/// Writes manifest.json (no timestamps) and timing.json into `out_dir`.
/// On failure the manifest records the failing stage and the exception is
/// rethrown.
ExperimentResult run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir);
ExperimentResult run_experiment(const std::filesystem::path& config_path,
                                const std::filesystem::path& out_dir);

}  // namespace vip::pipeline
