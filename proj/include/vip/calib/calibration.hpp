#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vip/eventsel/clusters.hpp"
#include "vip/model/types.hpp"

namespace vip::calib {

struct LineCentroid {
  double centroid;
  double centroid_error;
  double amplitude;  // counts under the Gaussian
  double sigma;
  double background_per_unit;
  std::size_t n_in_window;
};

// A neighbouring line held fixed under the fit: `amplitude` counts in a
// Gaussian at `centroid` with width `sigma`.
struct KnownPeak {
  double amplitude;
  double centroid;
  double sigma;
};

struct CentroidFitOptions {
  // Histogram bin width inside the window; 0 picks window/60, rounded up to
  // a whole number when `integer_values` is set.
  double bin_width = 0.0;
  bool integer_values = false;
  std::size_t min_events = 50;
  // Gaussian width held fixed when > 0, fitted otherwise.
  double fixed_sigma = 0.0;
  // Tails of other lines reaching into the window, added to the background.
  std::vector<KnownPeak> known_peaks;
};

/// Binned Gaussian-plus-constant least-squares fit of the values inside
/// `window`. Variances come from the fitted model (refined twice after a
/// first pass with observed counts).
LineCentroid fit_line_centroid(std::span<const double> values, std::pair<double, double> window,
                               const CentroidFitOptions& options = {});

LineCentroid fit_line_centroid(std::span<const eventsel::AcceptedEvent> events,
                               std::pair<double, double> window_adu, double fixed_sigma_adu = 0.0,
                               std::span<const KnownPeak> known_peaks = {});

struct FitLine {
  std::string label;
  double adu_centroid;
  double adu_error;  // 0 when unknown
  double known_energy_eV;
  bool operator==(const FitLine&) const = default;
};

struct EnergyCalibration {
  double gain_eV_per_adu = 1.0;
  double offset_eV = 0.0;
  double residual_at_6keV_eV = 0.0;
  std::vector<FitLine> fit_lines;
  // Parameter covariance of (gain, offset).
  double var_gain = 0.0;
  double var_offset = 0.0;
  double cov_gain_offset = 0.0;

  double apply(double adu) const { return gain_eV_per_adu * adu + offset_eV; }
  /// Standard error of the predicted energy at `adu`.
  double prediction_error(double adu) const;

  bool operator==(const EnergyCalibration&) const = default;
};

inline constexpr double kResidualReferenceEnergy_eV = 6000.0;

/// Weighted straight-line fit E = gain * adu + offset. Point weights use the
/// centroid errors mapped through the gain; with no errors all points count
/// equally and the covariance is scaled by the residual variance.
EnergyCalibration calibrate(std::span<const FitLine> points);

/// Global calibration plus optional per-CCD ones.
struct CalibrationSet {
  EnergyCalibration global;
  std::map<int, EnergyCalibration> per_ccd;

  const EnergyCalibration& for_ccd(int ccd_id) const {
    auto it = per_ccd.find(ccd_id);
    return it == per_ccd.end() ? global : it->second;
  }
  double apply(int ccd_id, double adu) const { return for_ccd(ccd_id).apply(adu); }
};

/// Fit window of a line in ADU under the nominal response.
std::pair<double, double> line_window_adu(const RunConfig& cfg, std::string_view label);

/// Fit every configured calibration line and calibrate (globally, and per
/// CCD when the config asks for it).
CalibrationSet calibrate_from_events(std::span<const eventsel::AcceptedEvent> events,
                                     const RunConfig& cfg, std::span<const std::string> labels);
CalibrationSet calibrate_from_events(std::span<const eventsel::AcceptedEvent> events,
                                     const RunConfig& cfg);

nlohmann::json to_json(const EnergyCalibration& c);
nlohmann::json to_json(const CalibrationSet& c);
CalibrationSet calibration_set_from_json(const nlohmann::json& j);

}  // namespace vip::calib
