#include "vip/detsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vip/model/errors.hpp"
#include "vip/numeric/parallel.hpp"

namespace vip::detsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

int poisson(std::mt19937_64& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

class FrameBuilder {
 public:
  FrameBuilder(const RunConfig& cfg, std::mt19937_64& rng, std::vector<TruthHit>& truth)
      : cfg_(cfg),
        rng_(rng),
        truth_(truth),
        rows_(cfg.geometry.pixel_rows),
        cols_(cfg.geometry.pixel_cols),
        charge_(std::size_t(rows_) * cols_, 0.0f) {}

  void xray(Source source, double energy_eV) {
    const auto& resp = cfg_.response;
    std::uniform_int_distribution<int> pick_row(0, rows_ - 1), pick_col(0, cols_ - 1);
    const int r = pick_row(rng_);
    const int c = pick_col(rng_);

    int n_pix = 1;
    int r2 = r, c2 = c;
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < resp.charge_sharing_fraction) {
      static constexpr int kDr[4] = {-1, 1, 0, 0};
      static constexpr int kDc[4] = {0, 0, -1, 1};
      int options[4];
      int n_opt = 0;
      for (int d = 0; d < 4; ++d) {
        const int rr = r + kDr[d], cc = c + kDc[d];
        if (rr >= 0 && rr < rows_ && cc >= 0 && cc < cols_) options[n_opt++] = d;
      }
      const int d = options[std::uniform_int_distribution<int>(0, n_opt - 1)(rng_)];
      r2 = r + kDr[d];
      c2 = c + kDc[d];
      n_pix = 2;
    }

    // Readout noise is added per pixel later; smear only by the remainder so
    // the reconstructed width matches the response model.
    const double sigma = resp.sigma_eV(energy_eV, cfg_.physics);
    const double noise_eV = resp.readout_noise_adu * resp.adu_gain_eV_per_adu;
    const double smear2 = sigma * sigma - n_pix * noise_eV * noise_eV;
    double measured = energy_eV;
    if (smear2 > 0.0) measured += std::normal_distribution<double>(0.0, std::sqrt(smear2))(rng_);
    const double adu = std::max(0.0, resp.adu_from_energy(measured));

    if (n_pix == 1) {
      add(r, c, adu);
    } else {
      const double f = std::uniform_real_distribution<double>(0.2, 0.8)(rng_);
      add(r, c, f * adu);
      add(r2, c2, (1.0 - f) * adu);
    }
    truth_.push_back({source, energy_eV, r, c, n_pix});
  }

  // Straight 4-connected segment: cells crossed by a ray, in order.
  void track() {
    const auto& mix = cfg_.sources;
    const int length =
        std::uniform_int_distribution<int>(mix.track_length_px.first, mix.track_length_px.second)(
            rng_);
    const double theta = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng_);
    double pr = std::uniform_real_distribution<double>(0.0, rows_)(rng_);
    double pc = std::uniform_real_distribution<double>(0.0, cols_)(rng_);
    const double dr = std::sin(theta), dc = std::cos(theta);
    int ir = std::min(int(pr), rows_ - 1), ic = std::min(int(pc), cols_ - 1);
    const int step_r = dr > 0 ? 1 : -1, step_c = dc > 0 ? 1 : -1;
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double delta_r = dr != 0.0 ? std::abs(1.0 / dr) : inf;
    const double delta_c = dc != 0.0 ? std::abs(1.0 / dc) : inf;
    double next_r = dr != 0.0 ? ((dr > 0 ? (ir + 1 - pr) : (pr - ir)) * delta_r) : inf;
    double next_c = dc != 0.0 ? ((dc > 0 ? (ic + 1 - pc) : (pc - ic)) * delta_c) : inf;

    std::uniform_real_distribution<double> pixel_energy(mix.track_pixel_energy_eV.first,
                                                        mix.track_pixel_energy_eV.second);
    const int start_r = ir, start_c = ic;
    double total = 0.0;
    int n = 0;
    while (n < length && ir >= 0 && ir < rows_ && ic >= 0 && ic < cols_) {
      const double e = pixel_energy(rng_);
      add(ir, ic, cfg_.response.adu_from_energy(e));
      total += e;
      ++n;
      if (next_r < next_c) {
        ir += step_r;
        next_r += delta_r;
      } else {
        ic += step_c;
        next_c += delta_c;
      }
    }
    truth_.push_back({Source::cosmic_track, total, start_r, start_c, n});
  }

  Frame finish(std::uint8_t ccd_id, std::uint32_t frame_index, float exposure_min) {
    Frame f(ccd_id, frame_index, exposure_min, std::uint16_t(rows_), std::uint16_t(cols_));
    const double noise = cfg_.response.readout_noise_adu;
    std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);
    for (std::size_t i = 0; i < charge_.size(); ++i) {
      double v = charge_[i];
      if (noise > 0.0) v += gauss(rng_);
      v = std::clamp(std::round(v), 0.0, 65535.0);
      f.pixels[i] = std::uint16_t(v);
    }
    return f;
  }

 private:
  void add(int r, int c, double adu) { charge_[std::size_t(r) * cols_ + c] += float(adu); }

  const RunConfig& cfg_;
  std::mt19937_64& rng_;
  std::vector<TruthHit>& truth_;
  int rows_;
  int cols_;
  std::vector<float> charge_;
};

double line_energy(const RunConfig& cfg, Source s) {
  switch (s) {
    case Source::cu_kalpha: return cfg.lines.energy(line_label::cu_kalpha);
    case Source::cu_kbeta: return cfg.lines.energy(line_label::cu_kbeta);
    case Source::anomalous: return cfg.lines.energy(line_label::cu_anomalous);
    case Source::mn_kalpha: return cfg.lines.energy(line_label::mn_kalpha);
    case Source::mn_kbeta: return cfg.lines.energy(line_label::mn_kbeta);
    default: return 0.0;
  }
}

}  // namespace

std::string_view to_string(Source s) {
  switch (s) {
    case Source::continuum: return "continuum";
    case Source::cu_kalpha: return "cu_kalpha";
    case Source::cu_kbeta: return "cu_kbeta";
    case Source::anomalous: return "anomalous";
    case Source::mn_kalpha: return "mn_kalpha";
    case Source::mn_kbeta: return "mn_kbeta";
    case Source::cosmic_track: return "cosmic_track";
  }
  return "unknown";
}

double injected_electrons(const RunPlan& plan, const PhysicsConstants& consts) {
  return plan.effective_current_A() * plan.duration_s() / consts.electron_charge_C;
}

double anomalous_rate(double beta2_over_2, const RunPlan& plan, const DetectorGeometry& geom,
                      const PhysicsConstants& consts, double efficiency) {
  if (!(efficiency > 0.0 && efficiency <= 1.0))
    throw ValidationError("limit.efficiency_range", "efficiency must lie in (0,1]");
  if (!(beta2_over_2 >= 0.0 && beta2_over_2 <= 1.0))
    throw ValidationError("sources.beta_range", "beta2_over_2 must lie in [0,1]");
  const double electrons_per_frame =
      plan.effective_current_A() * plan.frame_exposure_min * 60.0 / consts.electron_charge_C;
  const double scatterings = geom.conductor_length_m() / consts.electron_mfp_copper_m;
  return beta2_over_2 * electrons_per_frame * scatterings * consts.capture_factor * efficiency;
}

FrameRates frame_rates(const RunConfig& cfg, const SourceMix& mix, RunMode mode) {
  FrameRates rates;
  const double scale = mode == RunMode::calibration ? 1.0 : cfg.thinning_scale();
  rates[Source::continuum] = mix.continuum_rate_per_frame * scale;
  rates[Source::cu_kalpha] = mix.cu_kalpha_rate_per_frame * scale;
  rates[Source::cu_kbeta] = mix.cu_kbeta_rate_per_frame * scale;
  rates[Source::cosmic_track] = mix.cosmic_track_rate_per_frame * scale;
  if (mode == RunMode::calibration || mix.calibration_source_active) {
    const double kb_over_ka = cfg.lines.at(line_label::mn_kbeta).relative_intensity /
                              cfg.lines.at(line_label::mn_kalpha).relative_intensity;
    rates[Source::mn_kalpha] = mix.calibration_kalpha_rate_per_frame * scale;
    rates[Source::mn_kbeta] = mix.calibration_kalpha_rate_per_frame * kb_over_ka * scale;
  }
  if (mode == RunMode::current_on && mix.injected_beta2_over_2 > 0.0) {
    const double per_cycle = anomalous_rate(mix.injected_beta2_over_2, cfg.plan(mode), cfg.geometry,
                                            cfg.physics, cfg.limit.efficiency);
    rates[Source::anomalous] =
        per_cycle / cfg.geometry.active_ccds / mix.topology_acceptance * scale;
  }
  return rates;
}

std::uint64_t frame_seed(std::uint64_t master_seed, RunMode mode, std::uint32_t ccd_id,
                         std::uint32_t frame_index) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ (std::uint64_t(mode) + 1));
  h = splitmix64(h ^ ((std::uint64_t(ccd_id) << 32) | frame_index));
  return h;
}

SimulatedFrame simulate_frame(const RunConfig& cfg, const FrameRates& rates, std::uint8_t ccd_id,
                              std::uint32_t frame_index, float exposure_min,
                              std::mt19937_64& rng) {
  SimulatedFrame out;
  FrameBuilder builder(cfg, rng, out.truth);

  const auto& mix = cfg.sources;
  std::uniform_real_distribution<double> continuum(mix.continuum_range_eV.first,
                                                   mix.continuum_range_eV.second);
  for (int i = 0, n = poisson(rng, rates[Source::continuum]); i < n; ++i)
    builder.xray(Source::continuum, continuum(rng));
  for (Source s : {Source::cu_kalpha, Source::cu_kbeta, Source::anomalous, Source::mn_kalpha,
                   Source::mn_kbeta}) {
    const double e = line_energy(cfg, s);
    for (int i = 0, n = poisson(rng, rates[s]); i < n; ++i) builder.xray(s, e);
  }
  for (int i = 0, n = poisson(rng, rates[Source::cosmic_track]); i < n; ++i) builder.track();

  out.frame = builder.finish(ccd_id, frame_index, exposure_min);
  return out;
}

std::vector<FrameSlot> run_layout(const RunConfig& cfg, RunMode mode) {
  const std::int64_t n = mode == RunMode::calibration ? cfg.calibration.frames
                                                       : cfg.simulated_frames_per_mode();
  const int active = cfg.geometry.active_ccds;
  std::vector<FrameSlot> slots;
  slots.reserve(std::size_t(n));
  for (std::int64_t k = 0; k < n; ++k)
    slots.push_back({std::uint8_t(k % active), std::uint32_t(k / active)});
  return slots;
}

double frame_exposure_min(const RunConfig& cfg, RunMode mode) {
  const double scale = mode == RunMode::calibration ? 1.0 : cfg.thinning_scale();
  return cfg.run.frame_exposure_min * scale;
}

void simulate_run(const RunConfig& cfg, const SourceMix& mix, RunMode mode, const FrameSink& sink,
                  unsigned workers) {
  cfg.validate();
  mix.validate();
  RunConfig run_cfg = cfg;
  run_cfg.sources = mix;
  const auto rates = frame_rates(run_cfg, mix, mode);
  const auto slots = run_layout(run_cfg, mode);
  const float exposure = float(frame_exposure_min(run_cfg, mode));
  if (workers == 0) workers = numeric::default_workers();

  const std::size_t batch = std::max<std::size_t>(1, std::size_t(workers) * 2);
  std::vector<SimulatedFrame> buffer;
  for (std::size_t start = 0; start < slots.size(); start += batch) {
    const std::size_t n = std::min(batch, slots.size() - start);
    buffer.assign(n, SimulatedFrame{});
    numeric::parallel_for(
        n,
        [&](std::size_t i) {
          const auto& slot = slots[start + i];
          std::mt19937_64 rng(frame_seed(run_cfg.run.seed, mode, slot.ccd_id, slot.frame_index));
          buffer[i] = simulate_frame(run_cfg, rates, slot.ccd_id, slot.frame_index, exposure, rng);
        },
        workers);
    for (auto& f : buffer) sink(std::move(f));
  }
}

std::vector<SimulatedFrame> simulate_run(const RunConfig& cfg, const SourceMix& mix, RunMode mode,
                                         unsigned workers) {
  std::vector<SimulatedFrame> frames;
  simulate_run(
      cfg, mix, mode, [&](SimulatedFrame&& f) { frames.push_back(std::move(f)); }, workers);
  return frames;
}

double expected_xrays_in_window(const RunConfig& cfg, const FrameRates& rates, Source source,
                                double lo_eV, double hi_eV) {
  const auto& resp = cfg.response;
  auto in_window = [&](double e) {
    const double s = resp.sigma_eV(e, cfg.physics);
    return normal_cdf((hi_eV - e) / s) - normal_cdf((lo_eV - e) / s);
  };
  if (source == Source::cosmic_track) return 0.0;
  if (source != Source::continuum) return rates[source] * in_window(line_energy(cfg, source));

  const auto [clo, chi] = cfg.sources.continuum_range_eV;
  const double pad = 10.0 * resp.sigma_eV(hi_eV, cfg.physics);
  const double a = std::max(clo, lo_eV - pad), b = std::min(chi, hi_eV + pad);
  if (!(b > a)) return 0.0;
  // Simpson's rule over the flat continuum.
  constexpr int kSteps = 4000;
  const double h = (b - a) / kSteps;
  double sum = in_window(a) + in_window(b);
  for (int i = 1; i < kSteps; ++i) sum += (i % 2 ? 4.0 : 2.0) * in_window(a + i * h);
  return rates[source] / (chi - clo) * sum * h / 3.0;
}

double expected_xrays_in_window(const RunConfig& cfg, const FrameRates& rates, double lo_eV,
                                double hi_eV) {
  double total = 0.0;
  for (std::size_t s = 0; s < kSourceCount; ++s)
    total += expected_xrays_in_window(cfg, rates, Source(s), lo_eV, hi_eV);
  return total;
}

}  // namespace vip::detsim
