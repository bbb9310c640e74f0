#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>
#include <vector>

#include "vip/model/types.hpp"

namespace vip::detsim {

/// Fresh electrons injected over the whole plan, I*T/e (zero unless the
/// current is on).
double injected_electrons(const RunPlan& plan, const PhysicsConstants& consts);

/// Mean detected anomalous X-rays per readout cycle (one exposure of all
/// active CCDs):
///   (beta^2/2) * (I*dt/e) * (D/mfp) * capture_factor * efficiency
/// with dt the frame exposure and D the conductor length.
double anomalous_rate(double beta2_over_2, const RunPlan& plan, const DetectorGeometry& geom,
                      const PhysicsConstants& consts, double efficiency);

enum class Source : std::uint8_t {
  continuum,
  cu_kalpha,
  cu_kbeta,
  anomalous,
  mn_kalpha,
  mn_kbeta,
  cosmic_track
};
inline constexpr std::size_t kSourceCount = 7;
std::string_view to_string(Source s);

/// Ground truth for one deposit. (row, col) is the primary pixel.
struct TruthHit {
  Source source;
  double energy_eV;  // true photon energy, or summed track energy
  int row;
  int col;
  int n_pixels;
};

struct SimulatedFrame {
  Frame frame;
  std::vector<TruthHit> truth;
};

/// Poisson means per simulated frame, one per Source.
struct FrameRates {
  std::array<double, kSourceCount> mean{};
  double& operator[](Source s) { return mean[std::size_t(s)]; }
  double operator[](Source s) const { return mean[std::size_t(s)]; }
};

/// Per-frame means for a run in `mode`, including the thinning scale for
/// physics runs and the topology-acceptance correction on the anomalous
/// line.
FrameRates frame_rates(const RunConfig& cfg, const SourceMix& mix, RunMode mode);

/// Seed of one frame: a SplitMix64 hash of (master seed, mode, ccd, index).
std::uint64_t frame_seed(std::uint64_t master_seed, RunMode mode, std::uint32_t ccd_id,
                         std::uint32_t frame_index);

/// Generate one frame. Output depends only on the arguments and the state
/// of `rng`.
SimulatedFrame simulate_frame(const RunConfig& cfg, const FrameRates& rates, std::uint8_t ccd_id,
                              std::uint32_t frame_index, float exposure_min, std::mt19937_64& rng);

/// Frame layout of a run: which (ccd, index) pairs are produced.
struct FrameSlot {
  std::uint8_t ccd_id;
  std::uint32_t frame_index;
};
std::vector<FrameSlot> run_layout(const RunConfig& cfg, RunMode mode);

/// Exposure represented by one simulated frame of the run.
double frame_exposure_min(const RunConfig& cfg, RunMode mode);

using FrameSink = std::function<void(SimulatedFrame&&)>;

/// Generate every frame of a run, calling `sink` in layout order. Frames are
/// produced in parallel batches; each has its own random stream so the
/// output does not depend on `workers`.
void simulate_run(const RunConfig& cfg, const SourceMix& mix, RunMode mode, const FrameSink& sink,
                  unsigned workers = 0);

std::vector<SimulatedFrame> simulate_run(const RunConfig& cfg, const SourceMix& mix, RunMode mode,
                                         unsigned workers = 0);

/// Expected deposits per simulated frame with measured energy inside
/// [lo_eV, hi_eV), before topology selection, summed over X-ray sources.
double expected_xrays_in_window(const RunConfig& cfg, const FrameRates& rates, double lo_eV,
                                double hi_eV);

/// Same, restricted to one source.
double expected_xrays_in_window(const RunConfig& cfg, const FrameRates& rates, Source source,
                                double lo_eV, double hi_eV);

}  // namespace vip::detsim
