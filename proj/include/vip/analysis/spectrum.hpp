#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vip/calib/calibration.hpp"
#include "vip/eventsel/clusters.hpp"
#include "vip/model/types.hpp"

namespace vip::analysis {

/// Histogram of calibrated event energies; events outside the binning are
/// dropped.
Spectrum build_spectrum(std::span<const eventsel::AcceptedEvent> events,
                        const calib::CalibrationSet& calibration, const Binning& binning,
                        RunMode mode, double exposure_min);

struct SubtractedSpectrum {
  double bin_lo_eV = 0.0;
  double bin_width_eV = 1.0;
  std::vector<double> diff_counts;
  std::vector<double> diff_errors;  // sqrt(N_on + r^2 N_off)
  std::vector<std::uint64_t> on_counts;
  std::vector<std::uint64_t> off_counts;
  double exposure_ratio = 1.0;  // r, the weight applied to the off run
  std::pair<double, double> roi_eV{7564.0, 7894.0};
  Normalization normalization = Normalization::time;

  std::size_t size() const { return diff_counts.size(); }
  double bin_center(std::size_t i) const {
    return bin_lo_eV + (double(i) + 0.5) * bin_width_eV;
  }
};

/// exposure_on / exposure_off.
double time_ratio(const Spectrum& on, const Spectrum& off);
/// Ratio of on to off counts summed over the sideband windows (bins whose
/// centres fall inside any window).
double sideband_ratio(const Spectrum& on, const Spectrum& off,
                      std::span<const std::pair<double, double>> sidebands);

/// diff = N_on - r N_off bin by bin. Throws ValidationError on binning
/// mismatch or non-positive exposure.
SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off, double ratio,
                            std::pair<double, double> roi_eV,
                            Normalization normalization = Normalization::time);
SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off);
SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off,
                            const AnalysisSettings& settings);

struct RoiStats {
  std::uint64_t n_on = 0;
  std::uint64_t n_off = 0;
  double exposure_ratio = 1.0;
  double delta = 0.0;
  double sigma_delta = 0.0;
  double z_score = 0.0;
  // Bins [first_bin, last_bin] have centres inside the ROI.
  std::size_t first_bin = 0;
  std::size_t last_bin = 0;
};

/// Raw ROI counting. With no counts sigma and z are reported as 0.
RoiStats roi_stats(const SubtractedSpectrum& sub);

/// Indices of bins whose centres fall in [lo, hi]; empty pair range when
/// none do.
std::pair<std::size_t, std::size_t> bins_with_centres_in(double bin_lo, double width,
                                                         std::size_t n, double lo, double hi);

struct LineAmplitude {
  double amplitude;
  double amplitude_error;
  double background;  // per bin at the line position
  double slope;       // per bin per eV
  double chi2;
  int ndf;
};

/// Fixed-centre, fixed-width Gaussian plus linear background fitted by
/// weighted linear least squares over bins with centres within
/// `half_window_sigma` sigmas of the line. The amplitude is unconstrained in
/// sign.
LineAmplitude fit_fixed_line(const SubtractedSpectrum& sub, double line_energy_eV, double sigma_eV,
                             double half_window_sigma = 5.0);

struct FreeLineFit {
  double center_eV;
  double center_error_eV;
  double amplitude;
  double amplitude_error;
};

/// Like fit_fixed_line but with the centre free (Levenberg-Marquardt).
FreeLineFit fit_free_line(const SubtractedSpectrum& sub, double guess_eV, double sigma_eV,
                          double half_window_sigma = 5.0);

// Persistence ---------------------------------------------------------------

/// CSV `bin_lo_eV,n_on,n_off,diff_counts,diff_error` plus a JSON sidecar.
void write_subtracted(const SubtractedSpectrum& sub, const std::filesystem::path& path);
SubtractedSpectrum read_subtracted(const std::filesystem::path& path);

nlohmann::json to_json(const RoiStats& s);
RoiStats roi_stats_from_json(const nlohmann::json& j);

/// `x,y,yerr` triplets (bin centre, content, error).
void write_plot_data(const Spectrum& spectrum, const std::filesystem::path& path);
void write_plot_data(const SubtractedSpectrum& sub, const std::filesystem::path& path);

}  // namespace vip::analysis
