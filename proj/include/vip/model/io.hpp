#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vip/model/types.hpp"

namespace vip {

// Frame file: "VIPF", version u8, ccd_id u8, frame_index u32, rows u16,
// cols u16, exposure_min f32, then rows*cols u16 ADU values. Everything is
// little-endian, pixels row-major.
inline constexpr std::uint8_t kFrameFormatVersion = 1;

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(const std::vector<std::uint8_t>& bytes);

void write_frame(const Frame& frame, const std::filesystem::path& path);
Frame read_frame(const std::filesystem::path& path);

/// Spectrum as CSV (`bin_lo_eV,counts`) plus a JSON sidecar at
/// `<path>.json` holding mode, exposure, and bin width.
void write_spectrum(const Spectrum& spectrum, const std::filesystem::path& csv_path);
Spectrum read_spectrum(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Plain-text CSV reader: header row plus numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace vip
