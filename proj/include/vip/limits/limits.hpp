#pragma once

#include <json.hpp>

#include "vip/analysis/spectrum.hpp"
#include "vip/model/types.hpp"

namespace vip::limits {

/// Multiplying factors of the Ramberg-Snow bound.
struct RsFactors {
  double n_new_electrons;  // Q/e
  double n_int;            // D/mfp
  double capture_factor;
  double efficiency;

  double denominator() const { return n_new_electrons * n_int * capture_factor * efficiency; }
};

RsFactors rs_factors(const RunPlan& plan, const DetectorGeometry& geom,
                     const PhysicsConstants& consts, double efficiency);

/// q bound stored through 1+q, which is what double precision can hold near
/// q = -1.
struct QuonBound {
  double one_plus_q;
  double q() const { return -1.0 + one_plus_q; }
};

struct LimitResult {
  double beta2_over_2_bound;
  double confidence_level;
  double n_new_electrons;
  double n_int;
  double capture_factor;
  double efficiency;
  double n_up_counts;
  QuonBound quon;
  LimitMethod method;
  analysis::RoiStats roi;

  RsFactors factors() const { return {n_new_electrons, n_int, capture_factor, efficiency}; }
  double quon_q_bound() const { return quon.q(); }
};

/// Upper bound on ROI signal counts. gaussian_3sigma: max(delta, 0) +
/// 3 sigma. poisson_upper: classical Poisson upper limit on n_on minus the
/// scaled off count, floored at the zero-count limit -ln(1 - CL).
double upper_counts(const analysis::RoiStats& roi, LimitMethod method, double confidence_level);

LimitResult rs_bound_from_factors(const analysis::RoiStats& roi, const RsFactors& factors,
                                  LimitMethod method = LimitMethod::gaussian_3sigma,
                                  double confidence_level = 0.997);

/// `plan` must describe the current-on exposure.
LimitResult rs_bound(const analysis::RoiStats& roi, const RunPlan& plan,
                     const DetectorGeometry& geom, const PhysicsConstants& consts,
                     double efficiency, LimitMethod method = LimitMethod::gaussian_3sigma,
                     double confidence_level = 0.997);

/// Bound recomputed from the factors stored in the record alone.
double recompute_bound(const LimitResult& r);

struct SensitivityProjection {
  double bound;
  double n_up_counts;
  double time_exponent;        // d log(bound) / d log(T)
  double background_exponent;  // d log(bound) / d log(b)
  bool background_limited;
};

/// Expected bound for an equal-length on/off pair with ROI background rate
/// `background_per_min` (counts per minute of exposure):
///   3 sqrt(2 b T) / [(I T / e)(D / mfp) f eps].
/// Without background the zero-count limit -ln(1 - CL) replaces the
/// fluctuation term and the bound scales as 1/T.
SensitivityProjection sensitivity_projection(const RunPlan& plan, const DetectorGeometry& geom,
                                             const PhysicsConstants& consts,
                                             double background_per_min, double efficiency,
                                             double confidence_level = 0.997);

struct LocalityBound {
  double length_bound_m;
  double mapping_exponent;
  double reference_length_m;
};

/// l = reference_length * bound^(1 / exponent).
LocalityBound locality_bound(const LimitResult& limit, double reference_length_m,
                             double mapping_exponent);
LocalityBound locality_bound(double beta2_over_2_bound, double reference_length_m,
                             double mapping_exponent);

/// Reference length that maps `anchor_bound` onto `anchor_length_m`.
double locality_reference_length(double anchor_bound, double anchor_length_m,
                                 double mapping_exponent);

nlohmann::json to_json(const LimitResult& r);
nlohmann::json to_json(const LocalityBound& l);
nlohmann::json to_json(const SensitivityProjection& p);

}  // namespace vip::limits
