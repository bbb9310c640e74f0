#pragma once

#include <string_view>
#include <vector>

#include "vip/model/types.hpp"

namespace vip {

/// Handbook inputs bundled with the library (data/reference_data.json,
/// embedded at build time).
struct ReferenceData {
  double electron_mfp_copper_m;
  double capture_factor;
  double silicon_fano;
  double pair_energy_eV;
  std::vector<XrayLine> lines;
};

const ReferenceData& reference_data();

/// Raw text of the embedded reference-data file.
std::string_view reference_data_text();

}  // namespace vip
