#include "vip/model/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vip/model/errors.hpp"
#include "vip/model/reference_data.hpp"

namespace vip {

namespace {

void require(bool ok, const char* invariant, const std::string& detail) {
  if (!ok) throw ValidationError(invariant, detail);
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2*sqrt(2 ln 2)

// Anchor for the locality power law.
constexpr double kLocalityAnchorBound = 4.5e-28;
constexpr double kLocalityAnchorLength_m = 1.35e-19;

}  // namespace

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::current_on: return "current_on";
    case RunMode::current_off: return "current_off";
    case RunMode::calibration: return "calibration";
  }
  return "unknown";
}

RunMode run_mode_from_string(std::string_view text) {
  if (text == "current_on" || text == "on") return RunMode::current_on;
  if (text == "current_off" || text == "off") return RunMode::current_off;
  if (text == "calibration" || text == "calib") return RunMode::calibration;
  throw ConfigError("unknown run mode '" + std::string(text) + "'");
}

void DetectorGeometry::validate() const {
  require(finite_positive(cylinder_radius_mm) && finite_positive(foil_thickness_um) &&
              finite_positive(cylinder_height_mm) && finite_positive(ccd_distance_mm) &&
              finite_positive(pixel_pitch_um),
          "geometry.positive_length", "all lengths must be strictly positive");
  require(!conductor_length_mm || finite_positive(*conductor_length_mm), "geometry.positive_length",
          "conductor_length_mm must be strictly positive");
  require(n_ccds > 0 && active_ccds > 0, "geometry.positive_count", "CCD counts must be positive");
  require(active_ccds <= n_ccds, "geometry.active_exceeds_installed",
          "active_ccds (" + std::to_string(active_ccds) + ") > n_ccds (" + std::to_string(n_ccds) +
              ")");
  require(n_ccds <= 256, "geometry.ccd_id_range", "ccd ids are stored as one byte");
  require(pixel_rows >= 8 && pixel_cols >= 8, "geometry.min_pixels", "pixel grid must be >= 8x8");
  require(pixel_rows <= 65535 && pixel_cols <= 65535, "geometry.max_pixels",
          "pixel grid dimensions are stored as u16");
}

PhysicsConstants::PhysicsConstants()
    : electron_mfp_copper_m(reference_data().electron_mfp_copper_m),
      capture_factor(reference_data().capture_factor),
      silicon_fano(reference_data().silicon_fano),
      pair_energy_eV(reference_data().pair_energy_eV) {}

void PhysicsConstants::validate() const {
  require(finite_positive(electron_charge_C) && finite_positive(electron_mfp_copper_m) &&
              finite_positive(capture_factor) && finite_positive(silicon_fano) &&
              finite_positive(pair_energy_eV),
          "physics.positive", "physical constants must be strictly positive");
  require(capture_factor <= 1.0, "physics.capture_factor_range", "capture_factor must be <= 1");
}

double ResponseModel::sigma_ref_eV() const { return fwhm_at_ref_eV / kFwhmPerSigma; }

double ResponseModel::sigma_eV(double energy_eV, const PhysicsConstants& consts) const {
  const double s_ref = sigma_ref_eV();
  if (resolution_scaling == ResolutionScaling::constant) return s_ref;
  const double fw = consts.silicon_fano * consts.pair_energy_eV;
  const double elec2 = s_ref * s_ref - fw * ref_energy_eV;
  return std::sqrt(std::max(0.0, elec2 + fw * std::max(energy_eV, 0.0)));
}

void ResponseModel::validate(const PhysicsConstants& consts) const {
  require(finite_positive(fwhm_at_ref_eV), "response.fwhm_positive", "fwhm_at_ref_eV must be > 0");
  require(finite_positive(ref_energy_eV), "response.ref_energy_positive",
          "ref_energy_eV must be > 0");
  require(finite_positive(adu_gain_eV_per_adu), "response.gain_positive",
          "adu_gain_eV_per_adu must be > 0");
  require(std::isfinite(adu_offset_eV), "response.offset_finite", "adu_offset_eV must be finite");
  require(std::isfinite(pixel_threshold_adu) && pixel_threshold_adu >= 0.0,
          "response.threshold_nonnegative", "pixel_threshold_adu must be >= 0");
  require(charge_sharing_fraction >= 0.0 && charge_sharing_fraction <= 1.0,
          "response.sharing_range", "charge_sharing_fraction must lie in [0,1]");
  require(std::isfinite(readout_noise_adu) && readout_noise_adu >= 0.0,
          "response.noise_nonnegative", "readout_noise_adu must be >= 0");
  if (resolution_scaling == ResolutionScaling::sqrt_energy) {
    const double s = sigma_ref_eV();
    require(s * s >= consts.silicon_fano * consts.pair_energy_eV * ref_energy_eV,
            "response.fwhm_below_fano_limit",
            "configured FWHM is narrower than the Fano limit at the reference energy");
  }
}

LineCatalog::LineCatalog() {
  lines_.push_back({std::string(line_label::cu_kalpha), kCuKalphaEnergy_eV, 1.0});
  lines_.push_back({std::string(line_label::cu_anomalous), kCuAnomalousEnergy_eV, 1.0});
  for (const auto& line : reference_data().lines) lines_.push_back(line);
  std::sort(lines_.begin(), lines_.end(),
            [](const XrayLine& a, const XrayLine& b) { return a.energy_eV < b.energy_eV; });
}

LineCatalog::LineCatalog(std::vector<XrayLine> lines) : lines_(std::move(lines)) {
  std::sort(lines_.begin(), lines_.end(),
            [](const XrayLine& a, const XrayLine& b) { return a.energy_eV < b.energy_eV; });
}

bool LineCatalog::contains(std::string_view label) const {
  return std::any_of(lines_.begin(), lines_.end(),
                     [&](const XrayLine& l) { return l.label == label; });
}

const XrayLine& LineCatalog::at(std::string_view label) const {
  for (const auto& line : lines_)
    if (line.label == label) return line;
  throw ValidationError("lines.missing_label", "no line labelled '" + std::string(label) + "'");
}

void LineCatalog::validate() const {
  for (const auto& line : lines_) {
    require(finite_positive(line.energy_eV), "lines.positive_energy",
            line.label + " energy must be > 0");
    require(finite_positive(line.relative_intensity), "lines.positive_intensity",
            line.label + " relative intensity must be > 0");
  }
  for (std::size_t i = 1; i < lines_.size(); ++i)
    require(lines_[i].energy_eV > lines_[i - 1].energy_eV, "lines.strictly_increasing",
            lines_[i - 1].label + " and " + lines_[i].label + " share an energy");
  for (auto label : {line_label::cu_kalpha, line_label::cu_kbeta, line_label::cu_anomalous,
                     line_label::mn_kalpha, line_label::mn_kbeta})
    require(contains(label), "lines.missing_label", std::string(label) + " is required");
}

std::int64_t RunPlan::readout_cycles() const {
  return std::llround(duration_min / frame_exposure_min);
}

void RunPlan::validate() const {
  require(std::isfinite(current_A) && current_A >= 0.0, "run.current_nonnegative",
          "current_A must be >= 0");
  require(finite_positive(frame_exposure_min), "run.exposure_positive",
          "frame_exposure_min must be > 0");
  require(std::isfinite(duration_min) && duration_min >= 0.0, "run.duration_nonnegative",
          "duration_min must be >= 0");
  const double cycles = duration_min / frame_exposure_min;
  require(std::abs(cycles - std::round(cycles)) <= 1e-9 * std::max(1.0, cycles),
          "run.duration_not_multiple",
          "duration_min must be an integer multiple of frame_exposure_min");
}

void SourceMix::validate() const {
  for (double r : {continuum_rate_per_frame, cu_kalpha_rate_per_frame, cu_kbeta_rate_per_frame,
                   cosmic_track_rate_per_frame, calibration_kalpha_rate_per_frame})
    require(std::isfinite(r) && r >= 0.0, "sources.rate_nonnegative", "rates must be >= 0");
  require(continuum_range_eV.first > 0.0 && continuum_range_eV.first < continuum_range_eV.second,
          "sources.continuum_range", "continuum range must satisfy 0 < lo < hi");
  require(injected_beta2_over_2 >= 0.0 && injected_beta2_over_2 <= 1.0,
          "sources.beta_range", "injected_beta2_over_2 must lie in [0,1]");
  require(track_pixel_energy_eV.first > 0.0 &&
              track_pixel_energy_eV.first <= track_pixel_energy_eV.second,
          "sources.track_energy_range", "track pixel energy range must satisfy 0 < lo <= hi");
  require(track_length_px.first >= 1 && track_length_px.first <= track_length_px.second,
          "sources.track_length_range", "track length range must satisfy 1 <= lo <= hi");
  require(topology_acceptance > 0.0 && topology_acceptance <= 1.0,
          "sources.topology_acceptance_range", "topology_acceptance must lie in (0,1]");
}

void SelectionPolicy::validate() const {
  require(connectivity == Connectivity::four || connectivity == Connectivity::eight,
          "selection.connectivity", "connectivity must be 4 or 8");
  require(band_eV.first < band_eV.second, "selection.band_order", "band lo must be < hi");
}

void Binning::validate() const {
  require(finite_positive(width_eV), "binning.width_positive", "bin width must be > 0");
  require(n_bins >= 1, "binning.nonempty", "at least one bin is required");
  require(std::isfinite(lo_eV), "binning.lo_finite", "bin_lo_eV must be finite");
}

void AnalysisSettings::validate() const {
  require(roi_eV.first < roi_eV.second, "analysis.roi_order", "ROI lo must be < hi");
  if (normalization == Normalization::sideband) {
    require(!sidebands_eV.empty(), "analysis.sidebands_missing",
            "sideband normalization needs at least one sideband");
    for (const auto& [lo, hi] : sidebands_eV)
      require(lo < hi, "analysis.sideband_order", "sideband lo must be < hi");
  }
}

LimitSettings::LimitSettings()
    : locality_reference_length_m(kLocalityAnchorLength_m /
                                  std::pow(kLocalityAnchorBound, 1.0 / 1.2)) {}

void LimitSettings::validate() const {
  require(efficiency > 0.0 && efficiency <= 1.0, "limit.efficiency_range",
          "efficiency must lie in (0,1]");
  require(confidence_level > 0.0 && confidence_level < 1.0, "limit.confidence_range",
          "confidence_level must lie in (0,1)");
  require(finite_positive(locality_exponent) && finite_positive(locality_reference_length_m),
          "limit.locality_mapping_positive", "locality mapping parameters must be > 0");
}

void CalibrationRunSettings::validate() const {
  require(frames >= 1, "calibration.frames_positive", "calibration run needs >= 1 frame");
  require(lines.size() >= 2, "calibration.min_lines", "calibration needs >= 2 lines");
  require(finite_positive(window_sigma), "calibration.window_positive",
          "window_sigma must be > 0");
}

RunPlan RunConfig::plan(RunMode mode) const {
  RunPlan p;
  p.current_A = run.current_A;
  p.duration_min = run.duration_min;
  p.frame_exposure_min = run.frame_exposure_min;
  p.mode = mode;
  p.rng_seed = run.seed;
  return p;
}

std::int64_t RunConfig::real_frames_per_mode() const {
  return plan(RunMode::current_on).readout_cycles() * geometry.active_ccds;
}

std::int64_t RunConfig::simulated_frames_per_mode() const {
  return run.frames_per_mode.value_or(real_frames_per_mode());
}

double RunConfig::thinning_scale() const {
  const auto simulated = simulated_frames_per_mode();
  if (simulated == 0) return 1.0;
  return double(real_frames_per_mode()) / double(simulated);
}

void RunConfig::validate() const {
  geometry.validate();
  physics.validate();
  response.validate(physics);
  lines.validate();
  plan(RunMode::current_on).validate();
  sources.validate();
  calibration.validate();
  for (const auto& label : calibration.lines)
    require(lines.contains(label), "calibration.unknown_line",
            "calibration line '" + label + "' is not in the catalog");
  selection.validate();
  binning.validate();
  analysis.validate();
  limit.validate();
  if (run.frames_per_mode) {
    require(*run.frames_per_mode >= 0, "run.frames_per_mode_nonnegative",
            "frames_per_mode must be >= 0");
    require(*run.frames_per_mode <= real_frames_per_mode(), "run.frames_per_mode_exceeds_real",
            "cannot simulate more frames than the run contains");
    require(*run.frames_per_mode > 0 || real_frames_per_mode() == 0,
            "run.frames_per_mode_nonnegative", "frames_per_mode must be > 0 for a non-empty run");
  }
}

void Frame::validate(const DetectorGeometry& geom) const {
  require(rows == geom.pixel_rows && cols == geom.pixel_cols, "frame.dimension_mismatch",
          "frame is " + std::to_string(rows) + "x" + std::to_string(cols) + ", geometry is " +
              std::to_string(geom.pixel_rows) + "x" + std::to_string(geom.pixel_cols));
  require(pixels.size() == std::size_t(rows) * cols, "frame.payload_size",
          "pixel payload does not match dimensions");
}

std::uint64_t Spectrum::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

void Spectrum::validate() const {
  require(finite_positive(bin_width_eV), "spectrum.width_positive", "bin width must be > 0");
  require(!counts.empty(), "spectrum.nonempty", "spectrum needs at least one bin");
  require(std::isfinite(exposure_min) && exposure_min >= 0.0, "spectrum.exposure_nonnegative",
          "exposure must be >= 0");
}

}  // namespace vip
