#include "vip/limits/limits.hpp"

#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "vip/detsim/simulator.hpp"
#include "vip/model/config.hpp"
#include "vip/model/errors.hpp"

namespace vip::limits {

RsFactors rs_factors(const RunPlan& plan, const DetectorGeometry& geom,
                     const PhysicsConstants& consts, double efficiency) {
  if (!(efficiency > 0.0 && efficiency <= 1.0))
    throw ValidationError("limit.efficiency_range", "efficiency must lie in (0,1]");
  const double n_new = detsim::injected_electrons(plan, consts);
  if (!(n_new > 0.0))
    throw ValidationError("limit.zero_exposure",
                          "the current-on plan injects no electrons (zero current or duration)");
  return {n_new, geom.conductor_length_m() / consts.electron_mfp_copper_m, consts.capture_factor,
          efficiency};
}

double upper_counts(const analysis::RoiStats& roi, LimitMethod method, double confidence_level) {
  if (method == LimitMethod::gaussian_3sigma) return std::max(roi.delta, 0.0) + 3.0 * roi.sigma_delta;
  const double zero_count_limit = -std::log1p(-confidence_level);
  const double mu_up = boost::math::gamma_p_inv(double(roi.n_on) + 1.0, confidence_level);
  const double background = roi.exposure_ratio * double(roi.n_off);
  return std::max(mu_up - background, zero_count_limit);
}

LimitResult rs_bound_from_factors(const analysis::RoiStats& roi, const RsFactors& factors,
                                  LimitMethod method, double confidence_level) {
  if (!(factors.efficiency > 0.0 && factors.efficiency <= 1.0))
    throw ValidationError("limit.efficiency_range", "efficiency must lie in (0,1]");
  if (!(factors.n_new_electrons > 0.0))
    throw ValidationError("limit.zero_exposure", "no injected electrons");
  if (!(factors.n_int > 0.0 && factors.capture_factor > 0.0))
    throw ValidationError("limit.factor_positive", "RS factors must be > 0");
  const double n_up = upper_counts(roi, method, confidence_level);
  if (!(n_up > 0.0))
    throw ValidationError("limit.bound_positive",
                          "upper count bound is zero; ROI statistics are degenerate");
  LimitResult r;
  r.n_up_counts = n_up;
  r.n_new_electrons = factors.n_new_electrons;
  r.n_int = factors.n_int;
  r.capture_factor = factors.capture_factor;
  r.efficiency = factors.efficiency;
  r.beta2_over_2_bound = n_up / factors.denominator();
  r.confidence_level = confidence_level;
  r.quon = {2.0 * r.beta2_over_2_bound};
  r.method = method;
  r.roi = roi;
  return r;
}

LimitResult rs_bound(const analysis::RoiStats& roi, const RunPlan& plan,
                     const DetectorGeometry& geom, const PhysicsConstants& consts,
                     double efficiency, LimitMethod method, double confidence_level) {
  return rs_bound_from_factors(roi, rs_factors(plan, geom, consts, efficiency), method,
                               confidence_level);
}

double recompute_bound(const LimitResult& r) { return r.n_up_counts / r.factors().denominator(); }

SensitivityProjection sensitivity_projection(const RunPlan& plan, const DetectorGeometry& geom,
                                             const PhysicsConstants& consts,
                                             double background_per_min, double efficiency,
                                             double confidence_level) {
  if (!(background_per_min >= 0.0))
    throw ValidationError("limit.background_nonnegative", "background rate must be >= 0");
  const auto factors = rs_factors(plan, geom, consts, efficiency);
  SensitivityProjection p;
  const double expected_background = background_per_min * plan.duration_min;
  if (expected_background > 0.0) {
    p.n_up_counts = 3.0 * std::sqrt(2.0 * expected_background);
    p.time_exponent = -0.5;
    p.background_exponent = 0.5;
    p.background_limited = true;
  } else {
    p.n_up_counts = -std::log1p(-confidence_level);
    p.time_exponent = -1.0;
    p.background_exponent = 0.0;
    p.background_limited = false;
  }
  p.bound = p.n_up_counts / factors.denominator();
  return p;
}

LocalityBound locality_bound(double beta2_over_2_bound, double reference_length_m,
                             double mapping_exponent) {
  if (!(reference_length_m > 0.0) || !(mapping_exponent > 0.0))
    throw ValidationError("limit.locality_mapping_positive",
                          "locality mapping parameters must be > 0");
  if (!(beta2_over_2_bound > 0.0))
    throw ValidationError("limit.bound_positive", "bound must be > 0");
  return {reference_length_m * std::pow(beta2_over_2_bound, 1.0 / mapping_exponent),
          mapping_exponent, reference_length_m};
}

LocalityBound locality_bound(const LimitResult& limit, double reference_length_m,
                             double mapping_exponent) {
  return locality_bound(limit.beta2_over_2_bound, reference_length_m, mapping_exponent);
}

double locality_reference_length(double anchor_bound, double anchor_length_m,
                                 double mapping_exponent) {
  if (!(anchor_bound > 0.0) || !(anchor_length_m > 0.0) || !(mapping_exponent > 0.0))
    throw ValidationError("limit.locality_mapping_positive",
                          "locality anchor and exponent must be > 0");
  return anchor_length_m / std::pow(anchor_bound, 1.0 / mapping_exponent);
}

nlohmann::json to_json(const LimitResult& r) {
  return {{"beta2_over_2_bound", r.beta2_over_2_bound},
          {"confidence_level", r.confidence_level},
          {"n_new_electrons", r.n_new_electrons},
          {"n_int", r.n_int},
          {"capture_factor", r.capture_factor},
          {"efficiency", r.efficiency},
          {"n_up_counts", r.n_up_counts},
          {"quon_q_bound", r.quon.q()},
          {"quon_one_plus_q", r.quon.one_plus_q},
          {"method", to_string(r.method)},
          {"roi", analysis::to_json(r.roi)}};
}

nlohmann::json to_json(const LocalityBound& l) {
  return {{"length_bound_m", l.length_bound_m},
          {"mapping_exponent", l.mapping_exponent},
          {"reference_length_m", l.reference_length_m}};
}

nlohmann::json to_json(const SensitivityProjection& p) {
  return {{"bound", p.bound},
          {"n_up_counts", p.n_up_counts},
          {"time_exponent", p.time_exponent},
          {"background_exponent", p.background_exponent},
          {"background_limited", p.background_limited}};
}

}  // namespace vip::limits
