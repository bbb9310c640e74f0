#include "vip/eventsel/clusters.hpp"

#include <cstdlib>
#include <fstream>
#include <numeric>

#include "vip/model/errors.hpp"
#include "vip/model/io.hpp"

namespace vip::eventsel {

namespace {

class DisjointSet {
 public:
  std::uint32_t make() {
    parent_.push_back(std::uint32_t(parent_.size()));
    return parent_.back();
  }

  std::uint32_t root(std::uint32_t n) {
    while (parent_[n] != n) {
      parent_[n] = parent_[parent_[n]];  // path halving
      n = parent_[n];
    }
    return n;
  }

  void unify(std::uint32_t a, std::uint32_t b) {
    a = root(a);
    b = root(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // smaller label wins, keeps roots in raster order
  }

 private:
  std::vector<std::uint32_t> parent_;
};

constexpr std::uint32_t kBackground = 0xFFFFFFFFu;

}  // namespace

std::vector<Cluster> find_clusters(const Frame& frame, double threshold_adu,
                                   Connectivity connectivity) {
  const int rows = frame.rows, cols = frame.cols;
  const bool diag = connectivity == Connectivity::eight;
  std::vector<std::uint32_t> labels(frame.pixels.size(), kBackground);
  DisjointSet sets;

  // First pass: provisional labels from the already-visited neighbours
  // (west, north, and for 8-connectivity north-west and north-east).
  for (int r = 0; r < rows; ++r) {
    const std::size_t row = std::size_t(r) * cols;
    for (int c = 0; c < cols; ++c) {
      if (!(double(frame.pixels[row + c]) > threshold_adu)) continue;
      std::uint32_t label = kBackground;
      auto join = [&](std::uint32_t neighbour) {
        if (neighbour == kBackground) return;
        if (label == kBackground)
          label = neighbour;
        else
          sets.unify(label, neighbour);
      };
      if (c > 0) join(labels[row + c - 1]);
      if (r > 0) {
        const std::size_t up = row - cols;
        join(labels[up + c]);
        if (diag) {
          if (c > 0) join(labels[up + c - 1]);
          if (c + 1 < cols) join(labels[up + c + 1]);
        }
      }
      labels[row + c] = label == kBackground ? sets.make() : label;
    }
  }

  // Second pass: resolve to roots and gather members in raster order.
  std::vector<std::uint32_t> cluster_of_root;
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kBackground) continue;
    const std::uint32_t root = sets.root(labels[i]);
    if (root >= cluster_of_root.size()) cluster_of_root.resize(root + 1, kBackground);
    if (cluster_of_root[root] == kBackground) {
      cluster_of_root[root] = std::uint32_t(clusters.size());
      Cluster c;
      c.ccd_id = frame.ccd_id;
      c.frame_index = frame.frame_index;
      clusters.push_back(std::move(c));
    }
    Cluster& c = clusters[cluster_of_root[root]];
    c.pixels.push_back({std::uint16_t(i / cols), std::uint16_t(i % cols)});
    c.total_adu += frame.pixels[i];
  }
  return clusters;
}

std::pair<double, double> band_adu(const SelectionPolicy& policy, const ResponseModel& response) {
  return {response.adu_from_energy(policy.band_eV.first),
          response.adu_from_energy(policy.band_eV.second)};
}

bool is_xray_candidate(const Cluster& cluster, const SelectionPolicy& policy,
                       std::pair<double, double> band) {
  switch (cluster.topology()) {
    case Topology::extended: return false;
    case Topology::double_pixel: {
      if (!policy.accept_double) return false;
      const auto& a = cluster.pixels[0];
      const auto& b = cluster.pixels[1];
      const int manhattan = std::abs(int(a.row) - int(b.row)) + std::abs(int(a.col) - int(b.col));
      if (manhattan != 1) return false;
      break;
    }
    case Topology::single: break;
  }
  const double adu = double(cluster.total_adu);
  return adu >= band.first && adu <= band.second;
}

std::vector<AcceptedEvent> select_xray_events(std::span<const Cluster> clusters,
                                              const SelectionPolicy& policy,
                                              const ResponseModel& response) {
  const auto band = band_adu(policy, response);
  std::vector<AcceptedEvent> out;
  for (const auto& c : clusters)
    if (is_xray_candidate(c, policy, band))
      out.push_back({c.ccd_id, c.frame_index, c.total_adu, int(c.n_pixels())});
  return out;
}

std::string describe(const SelectionPolicy& policy) {
  std::string s = policy.accept_double ? "single+double (edge-adjacent)" : "single only";
  s += ", " + std::to_string(int(policy.connectivity)) + "-connectivity";
  return s;
}

void write_events(std::span<const AcceptedEvent> events, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "ccd_id,frame_index,adu,n_pixels\n";
  for (const auto& e : events)
    out << int(e.ccd_id) << ',' << e.frame_index << ',' << e.adu << ',' << e.n_pixels << '\n';
}

std::vector<AcceptedEvent> read_events(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const auto ccd = table.column("ccd_id"), idx = table.column("frame_index"),
             adu = table.column("adu"), npx = table.column("n_pixels");
  std::vector<AcceptedEvent> events;
  events.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    try {
      events.push_back({std::uint8_t(std::stoul(row[ccd])), std::uint32_t(std::stoul(row[idx])),
                        std::uint64_t(std::stoull(row[adu])), std::stoi(row[npx])});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed event row");
    }
  }
  return events;
}

}  // namespace vip::eventsel
