#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vip/model/types.hpp"

namespace vip::eventsel {

enum class Topology { single, double_pixel, extended };

struct PixelCoord {
  std::uint16_t row;
  std::uint16_t col;
  bool operator==(const PixelCoord&) const = default;
  auto operator<=>(const PixelCoord&) const = default;
};

struct Cluster {
  std::uint8_t ccd_id = 0;
  std::uint32_t frame_index = 0;
  std::vector<PixelCoord> pixels;  // raster order
  std::uint64_t total_adu = 0;

  std::size_t n_pixels() const { return pixels.size(); }
  Topology topology() const {
    return pixels.size() == 1   ? Topology::single
           : pixels.size() == 2 ? Topology::double_pixel
                                : Topology::extended;
  }
};

/// Maximal connected components of pixels with ADU strictly above
/// `threshold_adu`. Clusters are ordered by their first pixel in raster
/// order. Two-pass labelling with a union-find equivalence table.
std::vector<Cluster> find_clusters(const Frame& frame, double threshold_adu,
                                   Connectivity connectivity);

struct AcceptedEvent {
  std::uint8_t ccd_id;
  std::uint32_t frame_index;
  std::uint64_t adu;
  int n_pixels;
  bool operator==(const AcceptedEvent&) const = default;
};

/// ADU window equivalent to the policy's energy band under the nominal
/// response.
std::pair<double, double> band_adu(const SelectionPolicy& policy, const ResponseModel& response);

bool is_xray_candidate(const Cluster& cluster, const SelectionPolicy& policy,
                       std::pair<double, double> band);

/// Keep single (and, if allowed, edge-adjacent double) clusters whose summed
/// ADU lies in the acceptance band.
std::vector<AcceptedEvent> select_xray_events(std::span<const Cluster> clusters,
                                              const SelectionPolicy& policy,
                                              const ResponseModel& response);

/// Human-readable statement of the accepted topologies, for reports.
std::string describe(const SelectionPolicy& policy);

// events CSV: ccd_id,frame_index,adu,n_pixels
void write_events(std::span<const AcceptedEvent> events, const std::filesystem::path& path);
std::vector<AcceptedEvent> read_events(const std::filesystem::path& path);

}  // namespace vip::eventsel
