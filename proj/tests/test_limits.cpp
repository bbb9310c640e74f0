#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "vip/limits/limits.hpp"
#include "vip/model/config.hpp"
#include "vip/model/errors.hpp"

using namespace vip;
using limits::RsFactors;

namespace {

analysis::RoiStats roi(double delta, double sigma) {
  analysis::RoiStats r{};
  r.delta = delta;
  r.sigma_delta = sigma;
  r.exposure_ratio = 1.0;
  r.z_score = sigma > 0 ? delta / sigma : 0.0;
  return r;
}

}  // namespace

TEST(RsBound, WorkedExample) {
  const RsFactors f{1e30, 1e6, 0.1, 0.01};
  const auto r = limits::rs_bound_from_factors(roi(0.0, 10.0), f);
  EXPECT_DOUBLE_EQ(r.n_up_counts, 30.0);
  EXPECT_NEAR(r.beta2_over_2_bound / 3e-32, 1.0, 1e-12);
}

TEST(RsBound, NegativeExcessClampsAtZero) {
  const RsFactors f{1e30, 1e6, 0.1, 0.01};
  EXPECT_DOUBLE_EQ(limits::rs_bound_from_factors(roi(-50.0, 10.0), f).n_up_counts, 30.0);
  EXPECT_DOUBLE_EQ(limits::rs_bound_from_factors(roi(12.0, 10.0), f).n_up_counts, 42.0);
}

TEST(RsBound, FrascatiFactors) {
  const RunConfig cfg;
  const auto plan = cfg.plan(RunMode::current_on);
  const auto f = limits::rs_factors(plan, cfg.geometry, cfg.physics, 0.01);
  const double q_over_e = 40.0 * 14510.0 * 60.0 / 1.602176634e-19;
  EXPECT_NEAR(f.n_new_electrons / q_over_e, 1.0, 1e-12);
  EXPECT_NEAR(f.n_int / (0.088 / 3.9e-8), 1.0, 1e-12);
  EXPECT_EQ(f.capture_factor, 0.1);
  EXPECT_NEAR(f.denominator() / (q_over_e * 0.088 / 3.9e-8 * 0.1 * 0.01), 1.0, 1e-12);
  EXPECT_NEAR(f.denominator(), 4.905e29, 0.001e29);
}

TEST(RsBound, DoublingChargeHalvesBound) {
  RunConfig cfg;
  auto plan = cfg.plan(RunMode::current_on);
  const auto a = limits::rs_bound(roi(5, 20), plan, cfg.geometry, cfg.physics, 0.01);
  plan.current_A *= 2.0;
  const auto b = limits::rs_bound(roi(5, 20), plan, cfg.geometry, cfg.physics, 0.01);
  EXPECT_NEAR(b.beta2_over_2_bound / a.beta2_over_2_bound, 0.5, 1e-12);
}

TEST(RsBound, HomogeneousInEachFactor) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0), unit(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RsFactors f{std::pow(10.0, 27 + log_scale(rng)), std::pow(10.0, 6 + log_scale(rng)),
                unit(rng), unit(rng)};
    const auto base = limits::rs_bound_from_factors(roi(3.0, 7.0), f).beta2_over_2_bound;
    const double k = std::pow(10.0, log_scale(rng));
    auto g = f;
    g.n_new_electrons *= k;
    EXPECT_NEAR(limits::rs_bound_from_factors(roi(3.0, 7.0), g).beta2_over_2_bound * k / base, 1.0, 1e-12);
    g = f;
    g.n_int *= k;
    EXPECT_NEAR(limits::rs_bound_from_factors(roi(3.0, 7.0), g).beta2_over_2_bound * k / base, 1.0, 1e-12);
    g = f;
    g.capture_factor *= 0.5;
    EXPECT_NEAR(limits::rs_bound_from_factors(roi(3.0, 7.0), g).beta2_over_2_bound * 0.5 / base, 1.0, 1e-12);
    EXPECT_NEAR(limits::rs_bound_from_factors(roi(3.0 * k, 7.0 * k), f).beta2_over_2_bound / (k * base), 1.0, 1e-12);
  }
}

TEST(RsBound, RecomputeFromRecord) {
  const RsFactors f{2.17e26, 2.26e6, 0.1, 0.01};
  const auto r = limits::rs_bound_from_factors(roi(17.0, 66.0), f);
  EXPECT_EQ(limits::recompute_bound(r), r.beta2_over_2_bound);
  EXPECT_EQ(limits::recompute_bound(limits::LimitResult(r)), r.beta2_over_2_bound);
}

TEST(RsBound, QuonBoundNearMinusOne) {
  const RsFactors f{2.17e26, 2.26e6, 0.1, 0.01};
  const auto r = limits::rs_bound_from_factors(roi(0.0, 70.0), f);
  EXPECT_DOUBLE_EQ(r.quon.one_plus_q, 2.0 * r.beta2_over_2_bound);
  // q itself rounds to -1 in double precision; 1+q keeps the bound.
  EXPECT_EQ(r.quon_q_bound(), -1.0);
  EXPECT_GT(r.quon.one_plus_q, 0.0);
}

TEST(RsBound, InvalidInputs) {
  RsFactors f{1e30, 1e6, 0.1, 0.0};
  EXPECT_THROW(limits::rs_bound_from_factors(roi(0, 10), f), ValidationError);
  f.efficiency = 1.5;
  EXPECT_THROW(limits::rs_bound_from_factors(roi(0, 10), f), ValidationError);
  f.efficiency = 0.01;
  f.n_new_electrons = 0.0;
  EXPECT_THROW(limits::rs_bound_from_factors(roi(0, 10), f), ValidationError);
  f.n_new_electrons = 1e30;
  EXPECT_THROW(limits::rs_bound_from_factors(roi(0, 0), f), ValidationError);

  RunConfig cfg;
  auto plan = cfg.plan(RunMode::current_on);
  plan.current_A = 0.0;
  try {
    limits::rs_bound(roi(0, 10), plan, cfg.geometry, cfg.physics, 0.01);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "limit.zero_exposure");
  }
}

TEST(UpperCounts, PoissonUpper) {
  analysis::RoiStats r = roi(0, 0);
  // Zero counts: classical limit -ln(1 - CL).
  EXPECT_NEAR(limits::upper_counts(r, LimitMethod::poisson_upper, 0.9), std::log(10.0), 1e-9);
  // n = 3 at 90% CL, table value 6.68.
  r.n_on = 3;
  EXPECT_NEAR(limits::upper_counts(r, LimitMethod::poisson_upper, 0.9), 6.681, 0.001);
  // Large background pushes the subtraction below the floor.
  r.n_off = 100;
  EXPECT_NEAR(limits::upper_counts(r, LimitMethod::poisson_upper, 0.9), std::log(10.0), 1e-9);
}

TEST(Sensitivity, BackgroundLimitedScaling) {
  RunConfig cfg;
  auto plan = cfg.plan(RunMode::current_on);
  const auto a = limits::sensitivity_projection(plan, cfg.geometry, cfg.physics, 0.16, 0.01);
  EXPECT_TRUE(a.background_limited);
  const double b = 0.16 * plan.duration_min;
  EXPECT_NEAR(a.n_up_counts, 3.0 * std::sqrt(2.0 * b), 1e-9);
  plan.duration_min *= 4.0;
  const auto c = limits::sensitivity_projection(plan, cfg.geometry, cfg.physics, 0.16, 0.01);
  EXPECT_NEAR(c.bound / a.bound, 0.5, 1e-12);
  EXPECT_EQ(a.time_exponent, -0.5);
  const auto d = limits::sensitivity_projection(cfg.plan(RunMode::current_on), cfg.geometry,
                                                cfg.physics, 0.64, 0.01);
  EXPECT_NEAR(d.bound / a.bound, 2.0, 1e-12);
}

TEST(Sensitivity, ZeroBackground) {
  RunConfig cfg;
  auto plan = cfg.plan(RunMode::current_on);
  const auto a = limits::sensitivity_projection(plan, cfg.geometry, cfg.physics, 0.0, 0.01, 0.95);
  EXPECT_FALSE(a.background_limited);
  EXPECT_NEAR(a.n_up_counts, -std::log(0.05), 1e-12);
  EXPECT_EQ(a.time_exponent, -1.0);
  plan.duration_min *= 4.0;
  const auto b = limits::sensitivity_projection(plan, cfg.geometry, cfg.physics, 0.0, 0.01, 0.95);
  EXPECT_NEAR(b.bound / a.bound, 0.25, 1e-12);
  EXPECT_THROW(limits::sensitivity_projection(plan, cfg.geometry, cfg.physics, -1.0, 0.01),
               ValidationError);
}

TEST(Locality, MappingAndAnchor) {
  EXPECT_DOUBLE_EQ(limits::locality_bound(1.0, 2.5e-3, 1.2).length_bound_m, 2.5e-3);
  const double ref4 = limits::locality_reference_length(4.5e-28, 1.35e-19, 4.0);
  EXPECT_NEAR(limits::locality_bound(4.5e-28, ref4, 4.0).length_bound_m / 1.35e-19, 1.0, 1e-12);
  // Two decades tighter on the bound with exponent 4 gives 10^(2/4).
  EXPECT_NEAR(1.35e-19 / limits::locality_bound(4.5e-30, ref4, 4.0).length_bound_m,
              std::sqrt(10.0), 1e-9);
  EXPECT_NEAR(std::sqrt(10.0), 3.16, 0.005);

  const RunConfig cfg;
  EXPECT_NEAR(limits::locality_bound(4.5e-28, cfg.limit.locality_reference_length_m,
                                     cfg.limit.locality_exponent).length_bound_m / 1.35e-19,
              1.0, 1e-9);
}

TEST(Locality, MonotoneAndValidated) {
  double prev = 0;
  for (double b = 1e-33; b < 1e-20; b *= 3.7) {
    const double l = limits::locality_bound(b, 1.0, 1.2).length_bound_m;
    EXPECT_GT(l, prev);
    prev = l;
  }
  EXPECT_THROW(limits::locality_bound(0.0, 1.0, 1.2), ValidationError);
  EXPECT_THROW(limits::locality_bound(1e-28, 1.0, 0.0), ValidationError);
  EXPECT_THROW(limits::locality_bound(1e-28, -1.0, 1.2), ValidationError);
  EXPECT_THROW(limits::locality_reference_length(-1.0, 1e-19, 1.2), ValidationError);
}

TEST(LimitJson, FieldsPresent) {
  const RsFactors f{1e30, 1e6, 0.1, 0.01};
  const auto j = limits::to_json(limits::rs_bound_from_factors(roi(1.0, 10.0), f));
  for (const char* key : {"beta2_over_2_bound", "confidence_level", "n_new_electrons", "n_int",
                          "capture_factor", "efficiency", "n_up_counts", "quon_q_bound",
                          "quon_one_plus_q", "method", "roi"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["method"], "gaussian_3sigma");
  EXPECT_DOUBLE_EQ(j["n_up_counts"].get<double>() /
                       (j["n_new_electrons"].get<double>() * j["n_int"].get<double>() *
                        j["capture_factor"].get<double>() * j["efficiency"].get<double>()),
                   j["beta2_over_2_bound"].get<double>());
}
