#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vip {

enum class RunMode { current_on, current_off, calibration };

std::string_view to_string(RunMode mode);
RunMode run_mode_from_string(std::string_view text);

// ---------------------------------------------------------------------------
// Apparatus
// ---------------------------------------------------------------------------

struct DetectorGeometry {
  double cylinder_radius_mm = 45.0;
  double foil_thickness_um = 50.0;
  double cylinder_height_mm = 88.0;
  int n_ccds = 16;
  double ccd_distance_mm = 23.0;
  int active_ccds = 14;
  int pixel_rows = 600;
  int pixel_cols = 600;
  double pixel_pitch_um = 22.5;
  // Length of the current path seen by the RS scattering count. Unset means
  // the cylinder height.
  std::optional<double> conductor_length_mm;

  double conductor_length_m() const {
    return conductor_length_mm.value_or(cylinder_height_mm) * 1e-3;
  }

  void validate() const;
  bool operator==(const DetectorGeometry&) const = default;
};

struct PhysicsConstants {
  double electron_charge_C = 1.602176634e-19;
  double electron_mfp_copper_m;
  double capture_factor;
  double silicon_fano;
  double pair_energy_eV;

  /// Values from the bundled reference-data file.
  PhysicsConstants();

  void validate() const;
  bool operator==(const PhysicsConstants&) const = default;
};

enum class ResolutionScaling { constant, sqrt_energy };

struct ResponseModel {
  double fwhm_at_ref_eV = 320.0;
  double ref_energy_eV = 8000.0;
  ResolutionScaling resolution_scaling = ResolutionScaling::sqrt_energy;
  double adu_gain_eV_per_adu = 5.9;
  double adu_offset_eV = 0.0;
  double pixel_threshold_adu = 25.0;
  double charge_sharing_fraction = 0.35;
  double readout_noise_adu = 3.0;

  /// Gaussian sigma at the reference energy.
  double sigma_ref_eV() const;

  /// Energy resolution (Gaussian sigma) at `energy_eV`. In sqrt_energy mode
  /// sigma^2 = sigma_elec^2 + F*w*E with sigma_elec anchored so that the
  /// reference point reproduces fwhm_at_ref_eV.
  double sigma_eV(double energy_eV, const PhysicsConstants& consts) const;

  double adu_from_energy(double energy_eV) const {
    return (energy_eV - adu_offset_eV) / adu_gain_eV_per_adu;
  }
  double energy_from_adu(double adu) const {
    return adu_gain_eV_per_adu * adu + adu_offset_eV;
  }

  void validate(const PhysicsConstants& consts) const;
  bool operator==(const ResponseModel&) const = default;
};

// Labels used throughout the pipeline.
namespace line_label {
inline constexpr std::string_view mn_kalpha = "Mn Ka";
inline constexpr std::string_view mn_kbeta = "Mn Kb";
inline constexpr std::string_view cu_kalpha = "Cu Ka";
inline constexpr std::string_view cu_kbeta = "Cu Kb";
inline constexpr std::string_view cu_anomalous = "Cu anomalous";
}  // namespace line_label

// Measured Cu K-alpha and the computed position of the Pauli-forbidden
// transition in copper.
inline constexpr double kCuKalphaEnergy_eV = 8040.0;
inline constexpr double kCuAnomalousEnergy_eV = 7729.0;

struct XrayLine {
  std::string label;
  double energy_eV;
  double relative_intensity;
  bool operator==(const XrayLine&) const = default;
};

class LineCatalog {
 public:
  /// Cu K-alpha and anomalous line plus the reference-data lines.
  LineCatalog();
  explicit LineCatalog(std::vector<XrayLine> lines);

  const std::vector<XrayLine>& lines() const { return lines_; }
  const XrayLine& at(std::string_view label) const;
  bool contains(std::string_view label) const;
  double energy(std::string_view label) const { return at(label).energy_eV; }

  void validate() const;
  bool operator==(const LineCatalog&) const = default;

 private:
  std::vector<XrayLine> lines_;  // sorted by energy
};

// ---------------------------------------------------------------------------
// Run description
// ---------------------------------------------------------------------------

struct RunPlan {
  double current_A = 40.0;
  double duration_min = 14510.0;
  double frame_exposure_min = 10.0;
  RunMode mode = RunMode::current_on;
  std::uint64_t rng_seed = 20051121;

  /// Current seen by the physics: zero unless the run is current_on.
  double effective_current_A() const {
    return mode == RunMode::current_on ? current_A : 0.0;
  }
  /// Readout cycles in the run (frames per CCD).
  std::int64_t readout_cycles() const;
  double duration_s() const { return duration_min * 60.0; }

  void validate() const;
  bool operator==(const RunPlan&) const = default;
};

/// Expected event rates are per real CCD frame (one CCD, one exposure).
struct SourceMix {
  double continuum_rate_per_frame = 2.8;
  std::pair<double, double> continuum_range_eV{2000.0, 12000.0};
  double cu_kalpha_rate_per_frame = 0.25;
  double cu_kbeta_rate_per_frame = 0.035;
  double cosmic_track_rate_per_frame = 1.0;
  double injected_beta2_over_2 = 0.0;
  bool calibration_source_active = false;
  // Mn K-alpha rate from the iron source; K-beta follows the catalog
  // intensity ratio.
  double calibration_kalpha_rate_per_frame = 1500.0;
  std::pair<double, double> track_pixel_energy_eV{13000.0, 30000.0};
  std::pair<int, int> track_length_px{5, 50};
  // Fraction of single/double X-ray deposits surviving topology selection,
  // measured on the default configuration. The anomalous photon rate is
  // divided by it so that `efficiency` stays the end-to-end value.
  double topology_acceptance = 0.95;

  void validate() const;
  bool operator==(const SourceMix&) const = default;
};

enum class Connectivity { four = 4, eight = 8 };

struct SelectionPolicy {
  Connectivity connectivity = Connectivity::four;
  bool accept_double = true;
  std::pair<double, double> band_eV{2000.0, 12000.0};

  void validate() const;
  bool operator==(const SelectionPolicy&) const = default;
};

struct Binning {
  double lo_eV = 2000.0;
  double width_eV = 32.0;
  int n_bins = 313;

  double hi_eV() const { return lo_eV + width_eV * n_bins; }
  void validate() const;
  bool operator==(const Binning&) const = default;
};

enum class Normalization { time, sideband };

struct AnalysisSettings {
  std::pair<double, double> roi_eV{7564.0, 7894.0};
  Normalization normalization = Normalization::time;
  std::vector<std::pair<double, double>> sidebands_eV{{2000.0, 7400.0},
                                                      {8200.0, 12000.0}};
  void validate() const;
  bool operator==(const AnalysisSettings&) const = default;
};

enum class LimitMethod { gaussian_3sigma, poisson_upper };

struct LimitSettings {
  double efficiency = 0.01;
  double confidence_level = 0.997;
  LimitMethod method = LimitMethod::gaussian_3sigma;
  // Power-law locality mapping, anchored at (4.5e-28, 1.35e-19 m).
  double locality_exponent = 1.2;
  double locality_reference_length_m;

  LimitSettings();
  void validate() const;
  bool operator==(const LimitSettings&) const = default;
};

struct CalibrationRunSettings {
  int frames = 14;
  std::vector<std::string> lines{std::string(line_label::mn_kalpha),
                                 std::string(line_label::mn_kbeta)};
  double window_sigma = 1.5;
  bool per_ccd = false;

  void validate() const;
  bool operator==(const CalibrationRunSettings&) const = default;
};

struct RunSettings {
  double current_A = 40.0;
  double duration_min = 14510.0;
  double frame_exposure_min = 10.0;
  std::uint64_t seed = 20051121;
  // Simulate this many frames per mode and scale per-frame rates so the
  // total exposure matches the full run. Unset means one simulated frame per
  // real frame.
  std::optional<std::int64_t> frames_per_mode;

  bool operator==(const RunSettings&) const = default;
};

struct RunConfig {
  DetectorGeometry geometry;
  ResponseModel response;
  PhysicsConstants physics;
  LineCatalog lines;
  RunSettings run;
  SourceMix sources;
  CalibrationRunSettings calibration;
  SelectionPolicy selection;
  Binning binning;
  AnalysisSettings analysis;
  LimitSettings limit;

  RunPlan plan(RunMode mode) const;

  /// Real frames in one mode (readout cycles times active CCDs).
  std::int64_t real_frames_per_mode() const;
  /// Frames actually simulated for a physics run.
  std::int64_t simulated_frames_per_mode() const;
  /// Real frames represented by each simulated frame.
  double thinning_scale() const;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Data products
// ---------------------------------------------------------------------------

struct Frame {
  std::uint8_t ccd_id = 0;
  std::uint32_t frame_index = 0;
  float exposure_min = 10.0f;
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::vector<std::uint16_t> pixels;  // row-major

  Frame() = default;
  Frame(std::uint8_t ccd, std::uint32_t index, float exposure, std::uint16_t n_rows,
        std::uint16_t n_cols)
      : ccd_id(ccd), frame_index(index), exposure_min(exposure), rows(n_rows),
        cols(n_cols), pixels(std::size_t(n_rows) * n_cols, 0) {}

  std::uint16_t at(int row, int col) const { return pixels[std::size_t(row) * cols + col]; }
  std::uint16_t& at(int row, int col) { return pixels[std::size_t(row) * cols + col]; }

  void validate(const DetectorGeometry& geom) const;
  bool operator==(const Frame&) const = default;
};

struct Spectrum {
  double bin_lo_eV = 0.0;
  double bin_width_eV = 1.0;
  std::vector<std::uint64_t> counts;
  double exposure_min = 0.0;
  RunMode mode = RunMode::current_on;

  double bin_center(std::size_t i) const { return bin_lo_eV + (double(i) + 0.5) * bin_width_eV; }
  double hi_eV() const { return bin_lo_eV + bin_width_eV * double(counts.size()); }
  std::uint64_t total() const;

  void validate() const;
  bool operator==(const Spectrum&) const = default;
};

}  // namespace vip
