#include "vip/analysis/spectrum.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vip/model/config.hpp"
#include "vip/model/errors.hpp"
#include "vip/model/io.hpp"
#include "vip/numeric/least_squares.hpp"

namespace vip::analysis {

using numeric::normal_cdf;
using numeric::normal_pdf;

Spectrum build_spectrum(std::span<const eventsel::AcceptedEvent> events,
                        const calib::CalibrationSet& calibration, const Binning& binning,
                        RunMode mode, double exposure_min) {
  binning.validate();
  Spectrum s;
  s.bin_lo_eV = binning.lo_eV;
  s.bin_width_eV = binning.width_eV;
  s.counts.assign(std::size_t(binning.n_bins), 0);
  s.exposure_min = exposure_min;
  s.mode = mode;
  for (const auto& e : events) {
    const double energy = calibration.apply(e.ccd_id, double(e.adu));
    const double x = (energy - binning.lo_eV) / binning.width_eV;
    if (!(x >= 0.0)) continue;
    const auto bin = std::size_t(std::floor(x));
    if (bin < s.counts.size()) ++s.counts[bin];
  }
  return s;
}

namespace {

void require_same_binning(const Spectrum& on, const Spectrum& off) {
  if (on.counts.size() != off.counts.size() || on.bin_lo_eV != off.bin_lo_eV ||
      on.bin_width_eV != off.bin_width_eV)
    throw ValidationError("analysis.binning_mismatch",
                          "on and off spectra must share identical binning");
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

double time_ratio(const Spectrum& on, const Spectrum& off) {
  if (!(on.exposure_min > 0.0) || !(off.exposure_min > 0.0))
    throw ValidationError("analysis.exposure_positive", "both exposures must be > 0");
  return on.exposure_min / off.exposure_min;
}

std::pair<std::size_t, std::size_t> bins_with_centres_in(double bin_lo, double width,
                                                         std::size_t n, double lo, double hi) {
  std::size_t first = n, last = n;
  for (std::size_t i = 0; i < n; ++i) {
    const double centre = bin_lo + (double(i) + 0.5) * width;
    if (centre >= lo && centre <= hi) {
      if (first == n) first = i;
      last = i + 1;
    }
  }
  if (first == n) return {n, n};
  return {first, last};
}

double sideband_ratio(const Spectrum& on, const Spectrum& off,
                      std::span<const std::pair<double, double>> sidebands) {
  require_same_binning(on, off);
  double n_on = 0.0, n_off = 0.0;
  for (const auto& [lo, hi] : sidebands) {
    const auto [a, b] = bins_with_centres_in(on.bin_lo_eV, on.bin_width_eV, on.counts.size(), lo, hi);
    for (std::size_t i = a; i < b; ++i) {
      n_on += double(on.counts[i]);
      n_off += double(off.counts[i]);
    }
  }
  if (!(n_off > 0.0))
    throw ValidationError("analysis.sideband_empty", "off-run sidebands contain no counts");
  return n_on / n_off;
}

SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off, double ratio,
                            std::pair<double, double> roi_eV, Normalization normalization) {
  require_same_binning(on, off);
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw ValidationError("analysis.ratio_positive", "normalisation ratio must be > 0");
  SubtractedSpectrum sub;
  sub.bin_lo_eV = on.bin_lo_eV;
  sub.bin_width_eV = on.bin_width_eV;
  sub.exposure_ratio = ratio;
  sub.roi_eV = roi_eV;
  sub.normalization = normalization;
  sub.on_counts = on.counts;
  sub.off_counts = off.counts;
  const std::size_t n = on.counts.size();
  sub.diff_counts.resize(n);
  sub.diff_errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = double(on.counts[i]), b = double(off.counts[i]);
    sub.diff_counts[i] = a - ratio * b;
    sub.diff_errors[i] = std::sqrt(a + ratio * ratio * b);
  }
  return sub;
}

SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off) {
  return subtract(on, off, time_ratio(on, off), AnalysisSettings{}.roi_eV);
}

SubtractedSpectrum subtract(const Spectrum& on, const Spectrum& off,
                            const AnalysisSettings& settings) {
  const double r = settings.normalization == Normalization::time
                       ? time_ratio(on, off)
                       : sideband_ratio(on, off, settings.sidebands_eV);
  return subtract(on, off, r, settings.roi_eV, settings.normalization);
}

RoiStats roi_stats(const SubtractedSpectrum& sub) {
  const double spec_hi = sub.bin_lo_eV + sub.bin_width_eV * double(sub.size());
  const auto [lo, hi] = sub.roi_eV;
  if (lo < sub.bin_lo_eV || hi > spec_hi)
    throw ValidationError("analysis.roi_outside_spectrum", "ROI is not inside the spectrum range");
  const auto [first, last] = bins_with_centres_in(sub.bin_lo_eV, sub.bin_width_eV, sub.size(), lo, hi);
  if (first == last)
    throw ValidationError("analysis.roi_outside_spectrum", "ROI contains no bin centres");
  RoiStats s;
  s.exposure_ratio = sub.exposure_ratio;
  s.first_bin = first;
  s.last_bin = last - 1;
  for (std::size_t i = first; i < last; ++i) {
    s.n_on += sub.on_counts[i];
    s.n_off += sub.off_counts[i];
  }
  const double r = sub.exposure_ratio;
  s.delta = double(s.n_on) - r * double(s.n_off);
  s.sigma_delta = std::sqrt(double(s.n_on) + r * r * double(s.n_off));
  s.z_score = s.sigma_delta > 0.0 ? s.delta / s.sigma_delta : 0.0;
  return s;
}

namespace {

struct Window {
  std::size_t first, last;
};

Window fit_window(const SubtractedSpectrum& sub, double centre, double sigma, double half) {
  if (!(sigma > 0.0)) throw ValidationError("fit.sigma_positive", "line sigma must be > 0");
  const double spec_hi = sub.bin_lo_eV + sub.bin_width_eV * double(sub.size());
  if (centre < sub.bin_lo_eV || centre > spec_hi)
    throw ValidationError("fit.line_outside_spectrum", "line is outside the spectrum");
  const auto [a, b] = bins_with_centres_in(sub.bin_lo_eV, sub.bin_width_eV, sub.size(),
                                           centre - half * sigma, centre + half * sigma);
  if (b - a < 4) throw FitError(FitError::Kind::singular, "fewer than 4 bins in the fit window");
  return {a, b};
}

double bin_mass(double lo, double hi, double mu, double sigma) {
  return normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
}

}  // namespace

LineAmplitude fit_fixed_line(const SubtractedSpectrum& sub, double line_energy_eV, double sigma_eV,
                             double half_window_sigma) {
  const auto w = fit_window(sub, line_energy_eV, sigma_eV, half_window_sigma);
  const auto n = Eigen::Index(w.last - w.first);
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n), err(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = w.first + std::size_t(k);
    const double lo = sub.bin_lo_eV + double(i) * sub.bin_width_eV;
    design(k, 0) = bin_mass(lo, lo + sub.bin_width_eV, line_energy_eV, sigma_eV);
    design(k, 1) = 1.0;
    design(k, 2) = sub.bin_center(i) - line_energy_eV;
    y[k] = sub.diff_counts[i];
    err[k] = std::max(sub.diff_errors[i], 1.0);
  }
  const auto fit = numeric::weighted_linear_lsq(design, y, err);
  return {fit.params[0], std::sqrt(fit.covariance(0, 0)), fit.params[1], fit.params[2], fit.chi2,
          int(n) - 3};
}

FreeLineFit fit_free_line(const SubtractedSpectrum& sub, double guess_eV, double sigma_eV,
                          double half_window_sigma) {
  const auto w = fit_window(sub, guess_eV, sigma_eV, half_window_sigma);
  const auto n = Eigen::Index(w.last - w.first);
  Eigen::VectorXd y(n), err(n);
  std::vector<double> lo_edges(static_cast<std::size_t>(n)), centres(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = w.first + std::size_t(k);
    lo_edges[std::size_t(k)] = sub.bin_lo_eV + double(i) * sub.bin_width_eV;
    centres[std::size_t(k)] = sub.bin_center(i) - guess_eV;
    y[k] = sub.diff_counts[i];
    err[k] = std::max(sub.diff_errors[i], 1.0);
  }
  const double width = sub.bin_width_eV;
  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& value, Eigen::MatrixXd& jac) {
    const double amp = p[0], mu = p[1];
    for (Eigen::Index k = 0; k < n; ++k) {
      const double a = lo_edges[std::size_t(k)], b = a + width;
      const double za = (a - mu) / sigma_eV, zb = (b - mu) / sigma_eV;
      const double mass = normal_cdf(zb) - normal_cdf(za);
      value[k] = amp * mass + p[2] + p[3] * centres[std::size_t(k)];
      jac(k, 0) = mass;
      jac(k, 1) = -amp * (normal_pdf(zb) - normal_pdf(za)) / sigma_eV;
      jac(k, 2) = 1.0;
      jac(k, 3) = centres[std::size_t(k)];
    }
  };
  // Start from the fixed-centre linear solution.
  const auto seed = fit_fixed_line(sub, guess_eV, sigma_eV, half_window_sigma);
  Eigen::VectorXd start(4);
  start << seed.amplitude, guess_eV, seed.background, seed.slope;
  const auto fit = numeric::levenberg_marquardt(model, start, y, err);
  return {fit.params[1], std::sqrt(fit.covariance(1, 1)), fit.params[0],
          std::sqrt(fit.covariance(0, 0))};
}

void write_subtracted(const SubtractedSpectrum& sub, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "bin_lo_eV,n_on,n_off,diff_counts,diff_error\n";
  for (std::size_t i = 0; i < sub.size(); ++i)
    out << fmt(sub.bin_lo_eV + double(i) * sub.bin_width_eV) << ',' << sub.on_counts[i] << ','
        << sub.off_counts[i] << ',' << fmt(sub.diff_counts[i]) << ',' << fmt(sub.diff_errors[i])
        << '\n';
  write_json({{"bin_lo_eV", sub.bin_lo_eV},
              {"bin_width_eV", sub.bin_width_eV},
              {"n_bins", sub.size()},
              {"exposure_ratio", sub.exposure_ratio},
              {"normalization", to_string(sub.normalization)},
              {"roi_eV", {sub.roi_eV.first, sub.roi_eV.second}}},
             sidecar_path(path));
}

SubtractedSpectrum read_subtracted(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const auto meta = read_json(sidecar_path(path));
  SubtractedSpectrum sub;
  try {
    sub.bin_lo_eV = meta.at("bin_lo_eV").get<double>();
    sub.bin_width_eV = meta.at("bin_width_eV").get<double>();
    sub.exposure_ratio = meta.at("exposure_ratio").get<double>();
    sub.normalization = meta.at("normalization").get<std::string>() == "sideband"
                            ? Normalization::sideband
                            : Normalization::time;
    sub.roi_eV = {meta.at("roi_eV")[0].get<double>(), meta.at("roi_eV")[1].get<double>()};
    const auto c_on = table.column("n_on"), c_off = table.column("n_off"),
               c_diff = table.column("diff_counts"), c_err = table.column("diff_error");
    for (const auto& row : table.rows) {
      sub.on_counts.push_back(std::stoull(row[c_on]));
      sub.off_counts.push_back(std::stoull(row[c_off]));
      sub.diff_counts.push_back(std::stod(row[c_diff]));
      sub.diff_errors.push_back(std::stod(row[c_err]));
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (sub.size() != meta.value("n_bins", sub.size()))
    throw FormatError(path.string() + ": bin count disagrees with sidecar");
  return sub;
}

nlohmann::json to_json(const RoiStats& s) {
  return {{"n_on", s.n_on},
          {"n_off", s.n_off},
          {"exposure_ratio", s.exposure_ratio},
          {"delta", s.delta},
          {"sigma_delta", s.sigma_delta},
          {"z_score", s.z_score},
          {"first_bin", s.first_bin},
          {"last_bin", s.last_bin}};
}

RoiStats roi_stats_from_json(const nlohmann::json& j) {
  RoiStats s;
  try {
    s.n_on = j.at("n_on").get<std::uint64_t>();
    s.n_off = j.at("n_off").get<std::uint64_t>();
    s.exposure_ratio = j.at("exposure_ratio").get<double>();
    s.delta = j.at("delta").get<double>();
    s.sigma_delta = j.at("sigma_delta").get<double>();
    s.z_score = j.at("z_score").get<double>();
    s.first_bin = j.value("first_bin", std::size_t{0});
    s.last_bin = j.value("last_bin", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ROI statistics: ") + e.what());
  }
  return s;
}

void write_plot_data(const Spectrum& spectrum, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "x,y,yerr\n";
  for (std::size_t i = 0; i < spectrum.counts.size(); ++i)
    out << fmt(spectrum.bin_center(i)) << ',' << spectrum.counts[i] << ','
        << fmt(std::sqrt(double(spectrum.counts[i]))) << '\n';
}

void write_plot_data(const SubtractedSpectrum& sub, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "x,y,yerr\n";
  for (std::size_t i = 0; i < sub.size(); ++i)
    out << fmt(sub.bin_center(i)) << ',' << fmt(sub.diff_counts[i]) << ','
        << fmt(sub.diff_errors[i]) << '\n';
}

}  // namespace vip::analysis
