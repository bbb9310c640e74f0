#include "vip/model/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vip/model/errors.hpp"

namespace vip {

static_assert(std::endian::native == std::endian::little,
              "frame codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'I', 'P', 'F'};
constexpr std::size_t kHeaderSize = 4 + 1 + 1 + 4 + 2 + 2 + 4;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError("cannot parse " + what + " value '" + text + "'");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.pixels.size() != std::size_t(frame.rows) * frame.cols)
    throw FormatError("frame payload does not match its dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + frame.pixels.size() * 2);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put(out, kFrameFormatVersion);
  put(out, frame.ccd_id);
  put(out, frame.frame_index);
  put(out, frame.rows);
  put(out, frame.cols);
  put(out, frame.exposure_min);
  const auto* px = reinterpret_cast<const std::uint8_t*>(frame.pixels.data());
  out.insert(out.end(), px, px + frame.pixels.size() * 2);
  return out;
}

Frame decode_frame(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) throw FormatError("frame file truncated in header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad frame magic");
  std::size_t pos = 4;
  const auto version = get<std::uint8_t>(bytes, pos);
  if (version != kFrameFormatVersion)
    throw FormatError("unsupported frame format version " + std::to_string(version));
  Frame f;
  f.ccd_id = get<std::uint8_t>(bytes, pos);
  f.frame_index = get<std::uint32_t>(bytes, pos);
  f.rows = get<std::uint16_t>(bytes, pos);
  f.cols = get<std::uint16_t>(bytes, pos);
  f.exposure_min = get<float>(bytes, pos);
  const std::size_t n = std::size_t(f.rows) * f.cols;
  if (bytes.size() - kHeaderSize < n * 2) throw FormatError("frame payload truncated");
  if (bytes.size() - kHeaderSize > n * 2)
    throw FormatError("frame payload longer than declared dimensions");
  f.pixels.resize(n);
  std::memcpy(f.pixels.data(), bytes.data() + kHeaderSize, n * 2);
  return f;
}

void write_frame(const Frame& frame, const std::filesystem::path& path) {
  const auto bytes = encode_frame(frame);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

Frame read_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_frame(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_spectrum(const Spectrum& spectrum, const std::filesystem::path& csv_path) {
  spectrum.validate();
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + csv_path.string() + " for writing");
  out << "bin_lo_eV,counts\n";
  for (std::size_t i = 0; i < spectrum.counts.size(); ++i)
    out << format_double(spectrum.bin_lo_eV + double(i) * spectrum.bin_width_eV) << ','
        << spectrum.counts[i] << '\n';
  write_json({{"mode", to_string(spectrum.mode)},
              {"exposure_min", spectrum.exposure_min},
              {"bin_lo_eV", spectrum.bin_lo_eV},
              {"bin_width_eV", spectrum.bin_width_eV},
              {"n_bins", spectrum.counts.size()}},
             sidecar_path(csv_path));
}

Spectrum read_spectrum(const std::filesystem::path& csv_path) {
  const auto table = read_csv(csv_path);
  if (table.header != std::vector<std::string>{"bin_lo_eV", "counts"})
    throw FormatError(csv_path.string() + ": expected header 'bin_lo_eV,counts'");
  const auto meta = read_json(sidecar_path(csv_path));
  Spectrum s;
  try {
    s.mode = run_mode_from_string(meta.at("mode").get<std::string>());
    s.exposure_min = meta.at("exposure_min").get<double>();
    s.bin_lo_eV = meta.at("bin_lo_eV").get<double>();
    s.bin_width_eV = meta.at("bin_width_eV").get<double>();
  } catch (const std::exception& e) {
    throw FormatError(csv_path.string() + " sidecar: " + e.what());
  }
  for (const auto& row : table.rows) {
    const double c = parse_double(row[1], "counts");
    if (c < 0 || c != std::floor(c)) throw FormatError("counts must be non-negative integers");
    s.counts.push_back(std::uint64_t(c));
  }
  if (s.counts.size() != meta.value("n_bins", s.counts.size()))
    throw FormatError(csv_path.string() + ": bin count disagrees with sidecar");
  s.validate();
  return s;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("missing CSV column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " columns");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace vip
