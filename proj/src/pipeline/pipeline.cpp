#include "vip/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <unordered_map>

#include "vip/model/config.hpp"
#include "vip/model/digest.hpp"
#include "vip/model/errors.hpp"
#include "vip/model/io.hpp"
#include "vip/numeric/parallel.hpp"

namespace vip::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void match_truth(const detsim::SimulatedFrame& frame, std::span<const eventsel::Cluster> clusters,
                 const SelectionPolicy& policy, const ResponseModel& response,
                 std::array<std::uint64_t, detsim::kSourceCount>& injected,
                 std::array<std::uint64_t, detsim::kSourceCount>& accepted) {
  const auto band = eventsel::band_adu(policy, response);
  const int cols = frame.frame.cols;
  std::unordered_map<std::uint32_t, std::uint32_t> owner;
  for (std::uint32_t k = 0; k < clusters.size(); ++k) {
    if (!eventsel::is_xray_candidate(clusters[k], policy, band)) continue;
    for (const auto& px : clusters[k].pixels) owner[std::uint32_t(px.row) * cols + px.col] = k;
  }
  std::vector<bool> credited(clusters.size(), false);
  for (const auto& hit : frame.truth) {
    ++injected[std::size_t(hit.source)];
    auto it = owner.find(std::uint32_t(hit.row) * cols + std::uint32_t(hit.col));
    if (it == owner.end() || credited[it->second]) continue;
    credited[it->second] = true;
    ++accepted[std::size_t(hit.source)];
  }
}

ProcessedRun process_run(const RunConfig& cfg, RunMode mode) {
  ProcessedRun out;
  out.mode = mode;
  const double threshold = cfg.response.pixel_threshold_adu;
  detsim::simulate_run(cfg, cfg.sources, mode, [&](detsim::SimulatedFrame&& f) {
    const auto clusters = eventsel::find_clusters(f.frame, threshold, cfg.selection.connectivity);
    const auto events = eventsel::select_xray_events(clusters, cfg.selection, cfg.response);
    out.events.insert(out.events.end(), events.begin(), events.end());
    match_truth(f, clusters, cfg.selection, cfg.response, out.injected, out.accepted);
    out.exposure_min += double(f.frame.exposure_min);
    ++out.frames;
  });
  return out;
}

std::pair<double, double> roi_bin_edges(const RunConfig& cfg) {
  const auto& b = cfg.binning;
  const auto [first, last] = analysis::bins_with_centres_in(
      b.lo_eV, b.width_eV, std::size_t(b.n_bins), cfg.analysis.roi_eV.first,
      cfg.analysis.roi_eV.second);
  if (first == last)
    throw ValidationError("analysis.roi_outside_spectrum", "ROI contains no bin centres");
  return {b.lo_eV + double(first) * b.width_eV, b.lo_eV + double(last) * b.width_eV};
}

double expected_roi_background_per_min(const RunConfig& cfg) {
  auto rates = detsim::frame_rates(cfg, cfg.sources, RunMode::current_off);
  const double scale = cfg.thinning_scale();
  for (auto& m : rates.mean) m /= scale;
  const auto [lo, hi] = roi_bin_edges(cfg);
  const double per_real_frame =
      detsim::expected_xrays_in_window(cfg, rates, lo, hi) * cfg.sources.topology_acceptance;
  return per_real_frame * cfg.geometry.active_ccds / cfg.run.frame_exposure_min;
}

limits::SensitivityProjection analytic_sensitivity(const RunConfig& cfg) {
  return limits::sensitivity_projection(cfg.plan(RunMode::current_on), cfg.geometry, cfg.physics,
                                        expected_roi_background_per_min(cfg),
                                        cfg.limit.efficiency, cfg.limit.confidence_level);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& extension = "") {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && (extension.empty() || entry.path().extension() == extension))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

Artifact artifact(const fs::path& path) { return {path.string(), artifact_digest(path)}; }

template <typename Fn>
StageRecord timed(const std::string& name, Fn&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  StageRecord rec = body();
  rec.name = name;
  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::string frame_file_name(std::size_t k, const Frame& f) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frame_%07zu_ccd%02u_%06u.vipf", k, unsigned(f.ccd_id),
                unsigned(f.frame_index));
  return buf;
}

}  // namespace

std::string directory_digest(const fs::path& dir) {
  Sha256 h;
  for (const auto& file : sorted_files(dir)) {
    h.update(file.filename().string());
    h.update(std::string_view("\0", 1));
    h.update(sha256_file(file));
  }
  return h.hex_digest();
}

std::string artifact_digest(const fs::path& path) {
  return fs::is_directory(path) ? directory_digest(path) : sha256_file(path);
}

StageRecord stage_simulate(const RunConfig& cfg, RunMode mode, const fs::path& out_dir) {
  return timed("simulate", [&] {
    fs::create_directories(out_dir);
    for (const auto& old : sorted_files(out_dir))
      if (old.extension() == ".vipf" || old.filename() == "run.json") fs::remove(old);

    std::size_t k = 0;
    double exposure = 0.0;
    std::array<std::uint64_t, detsim::kSourceCount> injected{};
    detsim::simulate_run(cfg, cfg.sources, mode, [&](detsim::SimulatedFrame&& f) {
      for (const auto& hit : f.truth) ++injected[std::size_t(hit.source)];
      exposure += double(f.frame.exposure_min);
      write_frame(f.frame, out_dir / frame_file_name(k++, f.frame));
    });

    json truth = json::object();
    for (std::size_t s = 0; s < detsim::kSourceCount; ++s)
      truth[std::string(detsim::to_string(detsim::Source(s)))] = injected[s];
    write_json({{"config", to_json(cfg)},
                {"config_digest", config_digest(cfg)},
                {"mode", to_string(mode)},
                {"seed", cfg.run.seed},
                {"frame_count", k},
                {"exposure_min", exposure},
                {"thinning_scale", mode == RunMode::calibration ? 1.0 : cfg.thinning_scale()},
                {"injected_beta2_over_2", cfg.sources.injected_beta2_over_2},
                {"truth_counts", truth}},
               out_dir / "run.json");
    StageRecord rec;
    rec.outputs.push_back(artifact(out_dir));
    return rec;
  });
}

StageRecord stage_select(const RunConfig& cfg, const fs::path& frame_dir, const fs::path& out_csv) {
  return timed("select", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(frame_dir));
    const auto run = read_json(frame_dir / "run.json");
    const auto files = sorted_files(frame_dir, ".vipf");

    std::vector<eventsel::AcceptedEvent> events;
    double exposure = 0.0;
    const std::size_t batch = std::size_t(numeric::default_workers()) * 2;
    std::vector<std::vector<eventsel::AcceptedEvent>> per_frame;
    std::vector<double> exposures;
    for (std::size_t start = 0; start < files.size(); start += batch) {
      const std::size_t n = std::min(batch, files.size() - start);
      per_frame.assign(n, {});
      exposures.assign(n, 0.0);
      numeric::parallel_for(n, [&](std::size_t i) {
        const Frame f = read_frame(files[start + i]);
        f.validate(cfg.geometry);
        const auto clusters =
            eventsel::find_clusters(f, cfg.response.pixel_threshold_adu, cfg.selection.connectivity);
        per_frame[i] = eventsel::select_xray_events(clusters, cfg.selection, cfg.response);
        exposures[i] = double(f.exposure_min);
      });
      for (std::size_t i = 0; i < n; ++i) {
        events.insert(events.end(), per_frame[i].begin(), per_frame[i].end());
        exposure += exposures[i];
      }
    }
    fs::create_directories(out_csv.parent_path().empty() ? fs::path(".") : out_csv.parent_path());
    eventsel::write_events(events, out_csv);
    write_json({{"mode", run.at("mode")},
                {"exposure_min", exposure},
                {"frames", files.size()},
                {"selection_policy", eventsel::describe(cfg.selection)},
                {"n_events", events.size()}},
               sidecar_path(out_csv));
    rec.outputs.push_back(artifact(out_csv));
    rec.outputs.push_back(artifact(sidecar_path(out_csv)));
    return rec;
  });
}

StageRecord stage_calibrate(const RunConfig& cfg, const fs::path& events_csv,
                            std::span<const std::string> labels, const fs::path& out_json) {
  return timed("calibrate", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(events_csv));
    const auto events = eventsel::read_events(events_csv);
    const auto set = calib::calibrate_from_events(events, cfg, labels);
    write_json(calib::to_json(set), out_json);
    rec.outputs.push_back(artifact(out_json));
    return rec;
  });
}

StageRecord stage_spectra(const RunConfig& cfg, const fs::path& events_csv,
                          const fs::path& calib_json, const fs::path& out_csv) {
  return timed("spectra", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(events_csv));
    rec.inputs.push_back(artifact(sidecar_path(events_csv)));
    rec.inputs.push_back(artifact(calib_json));
    const auto events = eventsel::read_events(events_csv);
    const auto meta = read_json(sidecar_path(events_csv));
    const auto set = calib::calibration_set_from_json(read_json(calib_json));
    const auto spectrum = analysis::build_spectrum(
        events, set, cfg.binning, run_mode_from_string(meta.at("mode").get<std::string>()),
        meta.at("exposure_min").get<double>());
    write_spectrum(spectrum, out_csv);
    rec.outputs.push_back(artifact(out_csv));
    rec.outputs.push_back(artifact(sidecar_path(out_csv)));
    return rec;
  });
}

StageRecord stage_subtract(const RunConfig& cfg, const fs::path& on_csv, const fs::path& off_csv,
                           const fs::path& out_csv) {
  return timed("subtract", [&] {
    StageRecord rec;
    for (const auto& p : {on_csv, off_csv}) {
      rec.inputs.push_back(artifact(p));
      rec.inputs.push_back(artifact(sidecar_path(p)));
    }
    const auto sub = analysis::subtract(read_spectrum(on_csv), read_spectrum(off_csv), cfg.analysis);
    analysis::write_subtracted(sub, out_csv);
    rec.outputs.push_back(artifact(out_csv));
    rec.outputs.push_back(artifact(sidecar_path(out_csv)));
    return rec;
  });
}

StageRecord stage_roistats(const fs::path& subtracted_csv, const fs::path& out_json) {
  return timed("roistats", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(subtracted_csv));
    rec.inputs.push_back(artifact(sidecar_path(subtracted_csv)));
    const auto stats = analysis::roi_stats(analysis::read_subtracted(subtracted_csv));
    write_json(analysis::to_json(stats), out_json);
    rec.outputs.push_back(artifact(out_json));
    return rec;
  });
}

StageRecord stage_linefit(const RunConfig& cfg, const fs::path& subtracted_csv,
                          const fs::path& out_json) {
  return timed("linefit", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(subtracted_csv));
    rec.inputs.push_back(artifact(sidecar_path(subtracted_csv)));
    const auto sub = analysis::read_subtracted(subtracted_csv);
    const double e = cfg.lines.energy(line_label::cu_anomalous);
    const double sigma = cfg.response.sigma_eV(e, cfg.physics);
    const auto fit = analysis::fit_fixed_line(sub, e, sigma);
    write_json({{"line_energy_eV", e},
                {"sigma_eV", sigma},
                {"amplitude_counts", fit.amplitude},
                {"amplitude_error", fit.amplitude_error},
                {"background_per_bin", fit.background},
                {"slope_per_bin_per_eV", fit.slope},
                {"chi2", fit.chi2},
                {"ndf", fit.ndf}},
               out_json);
    rec.outputs.push_back(artifact(out_json));
    return rec;
  });
}

json limit_report(const RunConfig& cfg, const limits::LimitResult& result) {
  json j = limits::to_json(result);
  j["config_digest"] = config_digest(cfg);
  j["locality"] = limits::to_json(limits::locality_bound(
      result, cfg.limit.locality_reference_length_m, cfg.limit.locality_exponent));
  j["sensitivity_projection"] = limits::to_json(analytic_sensitivity(cfg));
  j["expected_roi_background_per_min"] = expected_roi_background_per_min(cfg);
  j["selection_policy"] = eventsel::describe(cfg.selection);
  j["normalization"] = to_string(cfg.analysis.normalization);
  j["thinning_scale"] = cfg.thinning_scale();
  j["reconstructed_inputs"] = {
      {"efficiency", cfg.limit.efficiency},
      {"electron_mfp_copper_m", cfg.physics.electron_mfp_copper_m},
      {"capture_factor", cfg.physics.capture_factor},
      {"conductor_length_m", cfg.geometry.conductor_length_m()},
      {"background_model", "simulated source mix; rates are not measured values"}};
  return j;
}

StageRecord stage_limit(const RunConfig& cfg, const fs::path& roistats_json,
                        const fs::path& out_json) {
  return timed("limit", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(roistats_json));
    const auto roi = analysis::roi_stats_from_json(read_json(roistats_json));
    const auto result =
        limits::rs_bound(roi, cfg.plan(RunMode::current_on), cfg.geometry, cfg.physics,
                         cfg.limit.efficiency, cfg.limit.method, cfg.limit.confidence_level);
    write_json(limit_report(cfg, result), out_json);
    rec.outputs.push_back(artifact(out_json));
    return rec;
  });
}

StageRecord stage_plotdata(const fs::path& in_csv, const fs::path& out_csv) {
  return timed("plotdata", [&] {
    StageRecord rec;
    rec.inputs.push_back(artifact(in_csv));
    rec.inputs.push_back(artifact(sidecar_path(in_csv)));
    const auto table = read_csv(in_csv);
    if (table.header == std::vector<std::string>{"bin_lo_eV", "counts"})
      analysis::write_plot_data(read_spectrum(in_csv), out_csv);
    else
      analysis::write_plot_data(analysis::read_subtracted(in_csv), out_csv);
    rec.outputs.push_back(artifact(out_csv));
    return rec;
  });
}

// ---------------------------------------------------------------------------

json to_json(const PipelineManifest& m, bool with_timing) {
  auto artifacts = [](const std::vector<Artifact>& list) {
    json a = json::array();
    for (const auto& x : list) a.push_back({{"path", x.path}, {"digest", x.digest}});
    return a;
  };
  json stages = json::array();
  for (const auto& s : m.stages) {
    json st = {{"name", s.name}, {"inputs", artifacts(s.inputs)}, {"outputs", artifacts(s.outputs)}};
    if (with_timing) st["wall_s"] = s.wall_s;
    stages.push_back(st);
  }
  json j = {{"config_digest", m.config_digest},
            {"master_seed", m.master_seed},
            {"stages", stages},
            {"status", m.status}};
  if (!m.failed_stage.empty()) {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  return j;
}

PipelineManifest manifest_from_json(const json& j) {
  PipelineManifest m;
  try {
    m.config_digest = j.at("config_digest").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.status = j.at("status").get<std::string>();
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
    for (const auto& st : j.at("stages")) {
      StageRecord s;
      s.name = st.at("name").get<std::string>();
      for (const auto& a : st.at("inputs"))
        s.inputs.push_back({a.at("path").get<std::string>(), a.at("digest").get<std::string>()});
      for (const auto& a : st.at("outputs"))
        s.outputs.push_back({a.at("path").get<std::string>(), a.at("digest").get<std::string>()});
      s.wall_s = st.value("wall_s", 0.0);
      m.stages.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::optional<std::string> check_digest_chain(const PipelineManifest& m) {
  std::map<std::string, std::string> produced;
  for (const auto& stage : m.stages) {
    for (const auto& in : stage.inputs) {
      auto it = produced.find(in.path);
      if (it == produced.end())
        return "stage '" + stage.name + "' consumes '" + in.path + "' which no earlier stage produced";
      if (it->second != in.digest)
        return "stage '" + stage.name + "' consumed '" + in.path + "' with digest " + in.digest +
               " but it was produced with digest " + it->second;
    }
    for (const auto& out : stage.outputs) produced[out.path] = out.digest;
  }
  return std::nullopt;
}

namespace {

void relativise(StageRecord& rec, const fs::path& root) {
  for (auto* list : {&rec.inputs, &rec.outputs})
    for (auto& a : *list) a.path = fs::path(a.path).lexically_proximate(root).generic_string();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const fs::path root = fs::absolute(out_dir);
  PipelineManifest manifest;
  manifest.config_digest = config_digest(cfg);
  manifest.master_seed = cfg.run.seed;
  const std::string started = utc_now();

  auto write_manifest = [&] {
    write_json(to_json(manifest), root / "manifest.json");
    json timing = {{"started_utc", started}, {"finished_utc", utc_now()}, {"stages", json::array()}};
    for (const auto& s : manifest.stages)
      timing["stages"].push_back({{"name", s.name}, {"wall_s", s.wall_s}});
    write_json(timing, root / "timing.json");
  };

  auto run = [&](const std::string& name, auto&& body) {
    try {
      StageRecord rec = body();
      rec.name = name;
      relativise(rec, root);
      manifest.stages.push_back(std::move(rec));
    } catch (const std::exception& e) {
      manifest.status = "failed";
      manifest.failed_stage = name;
      manifest.error = e.what();
      write_manifest();
      throw;
    }
  };

  write_json(to_json(cfg), root / "config.json");

  const auto calib_frames = root / "calibration" / "frames";
  const auto calib_events = root / "calibration" / "events.csv";
  const auto calib_json = root / "calib.json";
  run("simulate_calibration", [&] { return stage_simulate(cfg, RunMode::calibration, calib_frames); });
  run("select_calibration", [&] { return stage_select(cfg, calib_frames, calib_events); });
  run("calibrate",
      [&] { return stage_calibrate(cfg, calib_events, cfg.calibration.lines, calib_json); });

  for (RunMode mode : {RunMode::current_on, RunMode::current_off}) {
    const std::string tag = mode == RunMode::current_on ? "on" : "off";
    const auto dir = root / tag;
    run("simulate_" + tag, [&] { return stage_simulate(cfg, mode, dir / "frames"); });
    run("select_" + tag, [&] { return stage_select(cfg, dir / "frames", dir / "events.csv"); });
    run("spectra_" + tag,
        [&] { return stage_spectra(cfg, dir / "events.csv", calib_json, dir / "spectrum.csv"); });
    run("plotdata_" + tag,
        [&] { return stage_plotdata(dir / "spectrum.csv", root / ("plot_" + tag + ".csv")); });
  }

  const auto sub = root / "subtracted.csv";
  run("subtract",
      [&] { return stage_subtract(cfg, root / "on" / "spectrum.csv", root / "off" / "spectrum.csv", sub); });
  run("plotdata_subtracted", [&] { return stage_plotdata(sub, root / "plot_subtracted.csv"); });
  run("roistats", [&] { return stage_roistats(sub, root / "roistats.json"); });
  run("linefit", [&] { return stage_linefit(cfg, sub, root / "linefit.json"); });
  run("limit", [&] { return stage_limit(cfg, root / "roistats.json", root / "limit.json"); });

  write_manifest();

  const auto roi = analysis::roi_stats_from_json(read_json(root / "roistats.json"));
  ExperimentResult result{manifest,
                          limits::rs_bound(roi, cfg.plan(RunMode::current_on), cfg.geometry,
                                           cfg.physics, cfg.limit.efficiency, cfg.limit.method,
                                           cfg.limit.confidence_level)};
  return result;
}

ExperimentResult run_experiment(const fs::path& config_path, const fs::path& out_dir) {
  return run_experiment(load_config(config_path), out_dir);
}

}  // namespace vip::pipeline
