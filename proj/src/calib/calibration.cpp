#include "vip/calib/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vip/model/errors.hpp"
#include "vip/numeric/least_squares.hpp"

namespace vip::calib {

using numeric::normal_cdf;
using numeric::normal_pdf;

namespace {

// Counts per bin of A*N(mu, sigma) + C + known peaks, integrated over each
// bin. Parameters are (A, mu, sigma, C), or (A, mu, C) when the width is fixed.
struct GaussConstModel {
  const std::vector<double>& edges;
  double fixed_sigma = 0.0;
  Eigen::VectorXd known;  // fixed counts per bin

  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& value, Eigen::MatrixXd& jac) const {
    const bool free_width = fixed_sigma <= 0.0;
    const double amp = p[0], mu = p[1];
    const double sigma = free_width ? std::abs(p[2]) + 1e-12 : fixed_sigma;
    const double sign = free_width && p[2] < 0 ? -1.0 : 1.0;
    const double bkg = free_width ? p[3] : p[2];
    const Eigen::Index n = Eigen::Index(edges.size()) - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = edges[i], b = edges[i + 1];
      const double za = (a - mu) / sigma, zb = (b - mu) / sigma;
      const double mass = normal_cdf(zb) - normal_cdf(za);
      const double pa = normal_pdf(za), pb = normal_pdf(zb);
      value[i] = amp * mass + bkg * (b - a) + known[i];
      jac(i, 0) = mass;
      jac(i, 1) = -amp * (pb - pa) / sigma;
      if (free_width) jac(i, 2) = -amp * (zb * pb - za * pa) / sigma * sign;
      jac(i, free_width ? 3 : 2) = b - a;
    }
  }
};

}  // namespace

LineCentroid fit_line_centroid(std::span<const double> values, std::pair<double, double> window,
                               const CentroidFitOptions& options) {
  const auto [lo, hi] = window;
  if (!(hi > lo)) throw ValidationError("fit.window_order", "fit window must satisfy lo < hi");

  std::vector<double> inside;
  for (double v : values)
    if (v >= lo && v < hi) inside.push_back(v);
  if (inside.size() < options.min_events)
    throw FitError(FitError::Kind::insufficient_statistics,
                   std::to_string(inside.size()) + " events in fit window, need " +
                       std::to_string(options.min_events));

  // Integer values stand for the unit interval around them, so their bins
  // must start on a half-integer.
  const double first = options.integer_values ? std::ceil(lo) - 0.5 : lo;
  const double span = options.integer_values ? std::ceil(hi) - std::ceil(lo) : hi - lo;
  double width = options.bin_width > 0.0 ? options.bin_width : span / 60.0;
  if (options.integer_values) width = std::max(1.0, std::ceil(width));
  const int n_bins = std::max(4, int(std::floor(span / width + 1e-9)));
  std::vector<double> edges(std::size_t(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) edges[std::size_t(i)] = first + i * width;
  const double fit_hi = edges.back();

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_bins);
  double sum = 0.0, sum2 = 0.0;
  std::size_t used = 0;
  for (double v : inside) {
    if (v >= fit_hi) continue;
    const int bin = std::min(n_bins - 1, int((v - first) / width));
    counts[bin] += 1.0;
    sum += v;
    sum2 += v * v;
    ++used;
  }
  const double mean = sum / double(used);
  const double rms = std::sqrt(std::max(sum2 / double(used) - mean * mean, 0.0));

  const int edge_bins = std::max(1, n_bins / 10);
  const double edge_level =
      (counts.head(edge_bins).sum() + counts.tail(edge_bins).sum()) / (2.0 * edge_bins * width);
  const double bkg0 = std::max(0.0, std::min(edge_level, 0.5 * double(used) / (fit_hi - first)));

  Eigen::VectorXd known = Eigen::VectorXd::Zero(n_bins);
  for (const auto& k : options.known_peaks)
    for (int i = 0; i < n_bins; ++i)
      known[i] += k.amplitude * (normal_cdf((edges[std::size_t(i) + 1] - k.centroid) / k.sigma) -
                                 normal_cdf((edges[std::size_t(i)] - k.centroid) / k.sigma));

  const bool free_width = !(options.fixed_sigma > 0.0);
  const double amp0 = std::max(double(used) - bkg0 * (fit_hi - first) - known.sum(), 1.0);
  Eigen::VectorXd start(free_width ? 4 : 3);
  if (free_width)
    start << amp0, mean, std::max(rms, span / 20.0), bkg0;
  else
    start << amp0, mean, bkg0;

  GaussConstModel model{edges, free_width ? 0.0 : options.fixed_sigma, known};
  Eigen::VectorXd sigma = counts.cwiseMax(1.0).cwiseSqrt();
  numeric::LsqResult fit = numeric::levenberg_marquardt(model, start, counts, sigma);
  Eigen::VectorXd value(n_bins);
  Eigen::MatrixXd jac(n_bins, start.size());
  for (int pass = 0; pass < 2; ++pass) {
    model(fit.params, value, jac);
    sigma = value.cwiseMax(0.5).cwiseSqrt();
    fit = numeric::levenberg_marquardt(model, fit.params, counts, sigma);
  }

  const double mu = fit.params[1];
  if (!(mu > lo && mu < fit_hi))
    throw FitError(FitError::Kind::no_convergence,
                   "fitted centroid " + std::to_string(mu) + " left the window [" +
                       std::to_string(lo) + ", " + std::to_string(fit_hi) + ")");
  return {mu,
          std::sqrt(fit.covariance(1, 1)),
          fit.params[0],
          free_width ? std::abs(fit.params[2]) : options.fixed_sigma,
          fit.params[free_width ? 3 : 2],
          used};
}

LineCentroid fit_line_centroid(std::span<const eventsel::AcceptedEvent> events,
                               std::pair<double, double> window_adu, double fixed_sigma_adu,
                               std::span<const KnownPeak> known_peaks) {
  std::vector<double> adu;
  adu.reserve(events.size());
  for (const auto& e : events) adu.push_back(double(e.adu));
  CentroidFitOptions opts;
  opts.integer_values = true;
  opts.fixed_sigma = fixed_sigma_adu;
  opts.known_peaks.assign(known_peaks.begin(), known_peaks.end());
  return fit_line_centroid(adu, window_adu, opts);
}

double EnergyCalibration::prediction_error(double adu) const {
  const double var = var_offset + adu * adu * var_gain + 2.0 * adu * cov_gain_offset;
  return std::sqrt(std::max(var, 0.0));
}

EnergyCalibration calibrate(std::span<const FitLine> points) {
  if (points.size() < 2)
    throw FitError(FitError::Kind::insufficient_statistics,
                   "calibration needs at least two lines");
  const bool weighted = std::all_of(points.begin(), points.end(),
                                    [](const FitLine& p) { return p.adu_error > 0.0; });

  // Closed-form weighted regression. Weights depend on the gain through
  // sigma_E = gain * sigma_adu, so iterate from the unweighted solution.
  struct Line {
    double gain, offset, var_gain, var_offset, cov, chi2;
  };
  auto solve = [&](double gain_for_weights) {
    double s = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> w(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double se = weighted ? gain_for_weights * points[i].adu_error : 1.0;
      w[i] = 1.0 / (se * se);
      s += w[i];
      sx += w[i] * points[i].adu_centroid;
      sy += w[i] * points[i].known_energy_eV;
    }
    const double xbar = sx / s, ybar = sy / s;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double dx = points[i].adu_centroid - xbar;
      sxx += w[i] * dx * dx;
      sxy += w[i] * dx * (points[i].known_energy_eV - ybar);
    }
    if (!(sxx > 0.0) ||
        sxx <= 1e-24 * std::max(1.0, s * xbar * xbar))
      throw FitError(FitError::Kind::singular,
                     "calibration points share one ADU centroid; gain is undetermined");
    Line l;
    l.gain = sxy / sxx;
    l.offset = ybar - l.gain * xbar;
    l.var_gain = 1.0 / sxx;
    l.var_offset = 1.0 / s + xbar * xbar / sxx;
    l.cov = -xbar / sxx;
    l.chi2 = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double r = points[i].known_energy_eV - (l.gain * points[i].adu_centroid + l.offset);
      l.chi2 += w[i] * r * r;
    }
    return l;
  };

  Line line = solve(1.0);
  if (weighted)
    for (int it = 0; it < 3; ++it) line = solve(std::abs(line.gain));
  if (!(line.gain > 0.0))
    throw ValidationError("calibration.gain_positive",
                          "fitted gain " + std::to_string(line.gain) + " is not positive");

  const std::size_t ndf = points.size() - 2;
  double scale = 1.0;
  if (!weighted)
    scale = ndf > 0 ? line.chi2 / double(ndf) : 0.0;
  else if (ndf > 0)
    scale = std::max(1.0, line.chi2 / double(ndf));

  EnergyCalibration c;
  c.gain_eV_per_adu = line.gain;
  c.offset_eV = line.offset;
  c.var_gain = line.var_gain * scale;
  c.var_offset = line.var_offset * scale;
  c.cov_gain_offset = line.cov * scale;
  c.fit_lines.assign(points.begin(), points.end());
  const double adu_ref = (kResidualReferenceEnergy_eV - c.offset_eV) / c.gain_eV_per_adu;
  c.residual_at_6keV_eV = c.prediction_error(adu_ref);
  return c;
}

std::pair<double, double> line_window_adu(const RunConfig& cfg, std::string_view label) {
  const double e = cfg.lines.energy(label);
  const double half = cfg.calibration.window_sigma * cfg.response.sigma_eV(e, cfg.physics);
  return {cfg.response.adu_from_energy(e - half), cfg.response.adu_from_energy(e + half)};
}

namespace {

EnergyCalibration calibrate_subset(std::span<const eventsel::AcceptedEvent> events,
                                   const RunConfig& cfg, std::span<const std::string> labels) {
  std::vector<double> widths;
  for (const auto& label : labels)
    widths.push_back(cfg.response.sigma_eV(cfg.lines.energy(label), cfg.physics) /
                     cfg.response.adu_gain_eV_per_adu);
  // Second pass refits each line with the first-pass fits of the others as
  // fixed background, so a strong neighbour's tail does not pull the centroid.
  std::vector<LineCentroid> fits;
  for (std::size_t i = 0; i < labels.size(); ++i)
    fits.push_back(fit_line_centroid(events, line_window_adu(cfg, labels[i]), widths[i]));
  std::vector<FitLine> points;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<KnownPeak> others;
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (j != i) others.push_back({fits[j].amplitude, fits[j].centroid, widths[j]});
    const auto fit = fit_line_centroid(events, line_window_adu(cfg, labels[i]), widths[i], others);
    points.push_back({labels[i], fit.centroid, fit.centroid_error, cfg.lines.energy(labels[i])});
  }
  return calibrate(points);
}

}  // namespace

CalibrationSet calibrate_from_events(std::span<const eventsel::AcceptedEvent> events,
                                     const RunConfig& cfg, std::span<const std::string> labels) {
  CalibrationSet set;
  set.global = calibrate_subset(events, cfg, labels);
  if (cfg.calibration.per_ccd) {
    std::map<int, std::vector<eventsel::AcceptedEvent>> by_ccd;
    for (const auto& e : events) by_ccd[e.ccd_id].push_back(e);
    for (const auto& [ccd, subset] : by_ccd)
      set.per_ccd[ccd] = calibrate_subset(subset, cfg, labels);
  }
  return set;
}

CalibrationSet calibrate_from_events(std::span<const eventsel::AcceptedEvent> events,
                                     const RunConfig& cfg) {
  return calibrate_from_events(events, cfg, cfg.calibration.lines);
}

nlohmann::json to_json(const EnergyCalibration& c) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : c.fit_lines)
    lines.push_back({{"label", l.label},
                     {"fitted_adu_centroid", l.adu_centroid},
                     {"centroid_error_adu", l.adu_error},
                     {"known_energy_eV", l.known_energy_eV}});
  return {{"gain", c.gain_eV_per_adu},
          {"offset", c.offset_eV},
          {"residual_at_6keV_eV", c.residual_at_6keV_eV},
          {"var_gain", c.var_gain},
          {"var_offset", c.var_offset},
          {"cov_gain_offset", c.cov_gain_offset},
          {"fit_lines", lines}};
}

nlohmann::json to_json(const CalibrationSet& c) {
  auto j = to_json(c.global);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [ccd, cal] : c.per_ccd) per[std::to_string(ccd)] = to_json(cal);
  j["per_ccd"] = per;
  return j;
}

namespace {
EnergyCalibration calibration_from_json(const nlohmann::json& j) {
  EnergyCalibration c;
  c.gain_eV_per_adu = j.at("gain").get<double>();
  c.offset_eV = j.at("offset").get<double>();
  c.residual_at_6keV_eV = j.at("residual_at_6keV_eV").get<double>();
  c.var_gain = j.value("var_gain", 0.0);
  c.var_offset = j.value("var_offset", 0.0);
  c.cov_gain_offset = j.value("cov_gain_offset", 0.0);
  for (const auto& l : j.at("fit_lines"))
    c.fit_lines.push_back({l.at("label").get<std::string>(),
                           l.at("fitted_adu_centroid").get<double>(),
                           l.value("centroid_error_adu", 0.0),
                           l.at("known_energy_eV").get<double>()});
  if (!(c.gain_eV_per_adu > 0.0))
    throw ValidationError("calibration.gain_positive", "calibration gain must be > 0");
  return c;
}
}  // namespace

CalibrationSet calibration_set_from_json(const nlohmann::json& j) {
  CalibrationSet set;
  try {
    set.global = calibration_from_json(j);
    if (j.contains("per_ccd"))
      for (const auto& [key, value] : j.at("per_ccd").items())
        set.per_ccd[std::stoi(key)] = calibration_from_json(value);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed calibration: ") + e.what());
  }
  return set;
}

}  // namespace vip::calib
