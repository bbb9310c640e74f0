#include <algorithm>
#include <map>
#include <queue>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vip/detsim/simulator.hpp"
#include "vip/eventsel/clusters.hpp"

using namespace vip;
using eventsel::Cluster;
using eventsel::PixelCoord;
using test::flood_fill;
using test::random_sparse;

namespace {

std::uint64_t above_threshold_sum(const Frame& f, double threshold) {
  std::uint64_t s = 0;
  for (auto v : f.pixels)
    if (v > threshold) s += v;
  return s;
}

}  // namespace

TEST(FindClusters, EmptyFrame) {
  const Frame f(0, 0, 10.0f, 16, 16);
  EXPECT_TRUE(eventsel::find_clusters(f, 25, Connectivity::four).empty());
}

TEST(FindClusters, IsolatedPixel) {
  Frame f(4, 9, 10.0f, 16, 16);
  f.at(5, 7) = 500;
  const auto cl = eventsel::find_clusters(f, 100, Connectivity::four);
  ASSERT_EQ(cl.size(), 1u);
  EXPECT_EQ(cl[0].total_adu, 500u);
  EXPECT_EQ(cl[0].topology(), eventsel::Topology::single);
  EXPECT_EQ(cl[0].pixels[0], (PixelCoord{5, 7}));
  EXPECT_EQ(cl[0].ccd_id, 4);
  EXPECT_EQ(cl[0].frame_index, 9u);
}

TEST(FindClusters, ThresholdIsStrict) {
  Frame f(0, 0, 10.0f, 8, 8);
  f.at(1, 1) = 100;
  f.at(4, 4) = 101;
  ASSERT_EQ(eventsel::find_clusters(f, 100, Connectivity::four).size(), 1u);
}

TEST(FindClusters, DiagonalNeighboursDependOnConnectivity) {
  Frame f(0, 0, 10.0f, 8, 8);
  f.at(2, 2) = 200;
  f.at(3, 3) = 300;
  EXPECT_EQ(eventsel::find_clusters(f, 25, Connectivity::four).size(), 2u);
  const auto eight = eventsel::find_clusters(f, 25, Connectivity::eight);
  ASSERT_EQ(eight.size(), 1u);
  EXPECT_EQ(eight[0].total_adu, 500u);
}

TEST(FindClusters, UShapeMergesLabels) {
  // Two arms meet only at the bottom row: needs the equivalence table.
  Frame f(0, 0, 10.0f, 8, 8);
  for (int r = 0; r < 5; ++r) f.at(r, 1) = f.at(r, 5) = 100;
  for (int c = 1; c <= 5; ++c) f.at(4, c) = 100;
  const auto cl = eventsel::find_clusters(f, 25, Connectivity::four);
  ASSERT_EQ(cl.size(), 1u);
  EXPECT_EQ(cl[0].n_pixels(), 13u);
}

TEST(FindClusters, MatchesFloodFillOracle) {
  std::mt19937_64 rng(424242);
  for (int trial = 0; trial < 1000; ++trial) {
    const double density = 0.02 + 0.3 * double(trial % 10) / 10.0;
    const Frame f = random_sparse(rng, 64, density);
    for (Connectivity conn : {Connectivity::four, Connectivity::eight}) {
      const auto got = eventsel::find_clusters(f, 25, conn);
      const auto want = flood_fill(f, 25, conn == Connectivity::eight);
      ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
      // Both are ordered by first raster pixel.
      for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_EQ(got[i].pixels, want[i]) << "trial " << trial << " cluster " << i;
        std::uint64_t sum = 0;
        for (auto p : want[i]) sum += f.at(p.row, p.col);
        ASSERT_EQ(got[i].total_adu, sum);
      }
    }
  }
}

TEST(FindClusters, ChargeConservationAndPartition) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const Frame f = random_sparse(rng, 48, 0.15);
    const auto cl = eventsel::find_clusters(f, 25, Connectivity::four);
    std::uint64_t total = 0;
    std::size_t n_pixels = 0;
    std::vector<char> owned(f.pixels.size(), 0);
    for (const auto& c : cl) {
      total += c.total_adu;
      n_pixels += c.n_pixels();
      for (auto p : c.pixels) {
        ASSERT_GT(f.at(p.row, p.col), 25);
        ASSERT_FALSE(owned[p.row * f.cols + p.col]);
        owned[p.row * f.cols + p.col] = 1;
      }
    }
    EXPECT_EQ(total, above_threshold_sum(f, 25));
    EXPECT_EQ(n_pixels, std::size_t(std::count_if(f.pixels.begin(), f.pixels.end(),
                                                  [](auto v) { return v > 25; })));
  }
}

TEST(FindClusters, ThresholdMonotonicity) {
  std::mt19937_64 rng(5);
  const Frame f = random_sparse(rng, 64, 0.2);
  std::size_t previous = SIZE_MAX;
  for (double t : {0.0, 10.0, 25.0, 100.0, 1000.0, 3000.0, 5000.0}) {
    std::size_t n = 0;
    for (const auto& c : eventsel::find_clusters(f, t, Connectivity::four)) n += c.n_pixels();
    EXPECT_LE(n, previous);
    previous = n;
  }
  EXPECT_EQ(previous, 0u);
}

// ---------------------------------------------------------------------------

TEST(SelectEvents, TopologyRules) {
  const ResponseModel resp;
  const SelectionPolicy policy;
  Frame f(0, 0, 10.0f, 64, 64);
  f.at(2, 2) = 1000;                 // single in band
  f.at(10, 10) = 600;                // edge-adjacent double
  f.at(10, 11) = 400;
  f.at(20, 20) = 30;                 // single below band (177 eV)
  f.at(30, 30) = 3000;               // single above band (17.7 keV)
  for (int c = 0; c < 20; ++c) f.at(50, 40 - c) = 60;  // 20-pixel track, 1200 ADU in total
  const auto cl = eventsel::find_clusters(f, 25, Connectivity::four);
  ASSERT_EQ(cl.size(), 5u);
  const auto events = eventsel::select_xray_events(cl, policy, resp);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].adu, 1000u);
  EXPECT_EQ(events[0].n_pixels, 1);
  EXPECT_EQ(events[1].adu, 1000u);
  EXPECT_EQ(events[1].n_pixels, 2);

  SelectionPolicy singles = policy;
  singles.accept_double = false;
  EXPECT_EQ(eventsel::select_xray_events(cl, singles, resp).size(), 1u);
  EXPECT_NE(eventsel::describe(policy), eventsel::describe(singles));
}

TEST(SelectEvents, DiagonalDoubleRejectedUnderEightConnectivity) {
  Frame f(0, 0, 10.0f, 16, 16);
  f.at(4, 4) = 600;
  f.at(5, 5) = 400;
  SelectionPolicy policy;
  policy.connectivity = Connectivity::eight;
  const auto cl = eventsel::find_clusters(f, 25, policy.connectivity);
  ASSERT_EQ(cl.size(), 1u);
  EXPECT_TRUE(eventsel::select_xray_events(cl, policy, ResponseModel{}).empty());
}

TEST(SelectEvents, SimulatedMixAcceptance) {
  RunConfig cfg;
  cfg.sources.continuum_rate_per_frame = 100;
  cfg.sources.cu_kalpha_rate_per_frame = 0;
  cfg.sources.cu_kbeta_rate_per_frame = 0;
  cfg.sources.cosmic_track_rate_per_frame = 10;
  cfg.run.duration_min = 10;
  cfg.geometry.active_ccds = 1;
  const auto rates = detsim::frame_rates(cfg, cfg.sources, RunMode::current_off);
  const auto band = eventsel::band_adu(cfg.selection, cfg.response);

  std::uint64_t xrays = 0, xrays_ok = 0, tracks = 0, tracks_ok = 0;
  for (std::uint32_t k = 0; k < 20; ++k) {
    std::mt19937_64 rng(detsim::frame_seed(1234, RunMode::current_off, 0, k));
    const auto sf = detsim::simulate_frame(cfg, rates, 0, k, 10.0f, rng);
    const auto cl = eventsel::find_clusters(sf.frame, cfg.response.pixel_threshold_adu,
                                            cfg.selection.connectivity);
    std::map<std::pair<int, int>, std::size_t> owner;
    for (std::size_t i = 0; i < cl.size(); ++i)
      for (auto p : cl[i].pixels) owner[{p.row, p.col}] = i;
    for (const auto& hit : sf.truth) {
      const bool xray = hit.source != detsim::Source::cosmic_track;
      (xray ? xrays : tracks)++;
      auto it = owner.find({hit.row, hit.col});
      if (it == owner.end()) continue;
      const Cluster& c = cl[it->second];
      const bool accepted = eventsel::is_xray_candidate(c, cfg.selection, band);
      if (accepted) (xray ? xrays_ok : tracks_ok)++;
    }
  }
  ASSERT_GT(xrays, 1500u);
  ASSERT_GT(tracks, 150u);
  EXPECT_GE(double(xrays_ok) / double(xrays), 0.9);
  EXPECT_LE(double(tracks_ok) / double(tracks), 0.01);
}

TEST(EventsCsv, RoundTrip) {
  test::TempDir dir;
  const std::vector<eventsel::AcceptedEvent> events = {
      {0, 0, 1000, 1}, {13, 1450, 2034, 2}, {255, 4000000000u, 0, 1}};
  eventsel::write_events(events, dir / "e.csv");
  EXPECT_EQ(eventsel::read_events(dir / "e.csv"), events);
}
