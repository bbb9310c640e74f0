#include "vip/model/reference_data.hpp"

#include <json.hpp>

#include "reference_data_embedded.hpp"

namespace vip {

std::string_view reference_data_text() { return detail::kReferenceDataJson; }

const ReferenceData& reference_data() {
  static const ReferenceData data = [] {
    const auto j = nlohmann::json::parse(reference_data_text());
    ReferenceData d;
    d.electron_mfp_copper_m = j.at("electron_mfp_copper_m").get<double>();
    d.capture_factor = j.at("capture_factor").get<double>();
    d.silicon_fano = j.at("silicon_fano").get<double>();
    d.pair_energy_eV = j.at("pair_energy_eV").get<double>();
    for (const auto& line : j.at("lines")) {
      d.lines.push_back({line.at("label").get<std::string>(), line.at("energy_eV").get<double>(),
                         line.at("relative_intensity").get<double>()});
    }
    return d;
  }();
  return data;
}

}  // namespace vip
