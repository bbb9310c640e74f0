#include "vip/model/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "vip/model/digest.hpp"
#include "vip/model/errors.hpp"

namespace vip {

using nlohmann::json;

std::string_view to_string(ResolutionScaling s) {
  return s == ResolutionScaling::constant ? "constant" : "sqrt_energy";
}
std::string_view to_string(Normalization n) {
  return n == Normalization::time ? "time" : "sideband";
}
std::string_view to_string(LimitMethod m) {
  return m == LimitMethod::gaussian_3sigma ? "gaussian_3sigma" : "poisson_upper";
}

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers (typos) can be reported.
class Section {
 public:
  Section(const json& parent, const std::string& name) : path_(name) {
    if (!parent.contains(name)) return;
    node_ = &parent.at(name);
    if (!node_->is_object()) throw ConfigError("field '" + path_ + "': expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    out = convert<T>(*v, field(key));
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    out = convert<T>(*v, field(key));
  }

  bool has(const char* key) const { return node_ && node_->contains(key); }
  const json* find(const char* key) {
    if (!node_ || !node_->contains(key)) return nullptr;
    seen_.insert(key);
    return &node_->at(key);
  }
  std::string field(const char* key) const { return path_ + "." + key; }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (!seen_.count(key)) throw ConfigError("unknown field '" + path_ + "." + key + "'");
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("field '" + name + "': expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("field '" + name + "': expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0)
          throw ConfigError("field '" + name + "': expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("field '" + name + "': expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("field '" + name + "': expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const json* node_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(Section& s, const char* key, Enum& out, Parse parse) {
  std::string text;
  if (!s.has(key)) return;
  s.read(key, text);
  try {
    out = parse(text);
  } catch (const ConfigError&) {
    throw ConfigError("field '" + s.field(key) + "': unrecognised value '" + text + "'");
  }
}

std::pair<double, double> read_range(Section& s, const char* key) {
  const json* v = s.find(key);
  if (!v || !v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
    throw ConfigError("field '" + s.field(key) + "': expected [lo, hi]");
  return {(*v)[0].get<double>(), (*v)[1].get<double>()};
}

RunConfig from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("configuration root must be an object");
  static const std::set<std::string> kSections = {
      "geometry", "response", "physics",  "lines",    "run",  "sources",
      "calibration", "selection", "spectrum", "analysis", "limit"};
  for (const auto& [key, _] : root.items())
    if (!kSections.count(key)) throw ConfigError("unknown section '" + key + "'");

  RunConfig cfg;

  Section g(root, "geometry");
  g.read("cylinder_radius_mm", cfg.geometry.cylinder_radius_mm);
  g.read("foil_thickness_um", cfg.geometry.foil_thickness_um);
  g.read("cylinder_height_mm", cfg.geometry.cylinder_height_mm);
  g.read("n_ccds", cfg.geometry.n_ccds);
  g.read("ccd_distance_mm", cfg.geometry.ccd_distance_mm);
  g.read("active_ccds", cfg.geometry.active_ccds);
  g.read("pixel_rows", cfg.geometry.pixel_rows);
  g.read("pixel_cols", cfg.geometry.pixel_cols);
  g.read("pixel_pitch_um", cfg.geometry.pixel_pitch_um);
  g.read("conductor_length_mm", cfg.geometry.conductor_length_mm);
  g.finish();

  Section r(root, "response");
  r.read("fwhm_at_ref_eV", cfg.response.fwhm_at_ref_eV);
  r.read("ref_energy_eV", cfg.response.ref_energy_eV);
  read_enum(r, "resolution_scaling", cfg.response.resolution_scaling, [](const std::string& t) {
    if (t == "constant") return ResolutionScaling::constant;
    if (t == "sqrt_energy") return ResolutionScaling::sqrt_energy;
    throw ConfigError(t);
  });
  r.read("adu_gain_eV_per_adu", cfg.response.adu_gain_eV_per_adu);
  r.read("adu_offset_eV", cfg.response.adu_offset_eV);
  r.read("pixel_threshold_adu", cfg.response.pixel_threshold_adu);
  r.read("charge_sharing_fraction", cfg.response.charge_sharing_fraction);
  r.read("readout_noise_adu", cfg.response.readout_noise_adu);
  r.finish();

  Section p(root, "physics");
  p.read("electron_charge_C", cfg.physics.electron_charge_C);
  p.read("electron_mfp_copper_m", cfg.physics.electron_mfp_copper_m);
  p.read("capture_factor", cfg.physics.capture_factor);
  p.read("silicon_fano", cfg.physics.silicon_fano);
  p.read("pair_energy_eV", cfg.physics.pair_energy_eV);
  p.finish();

  if (root.contains("lines")) {
    const auto& arr = root.at("lines");
    if (!arr.is_array()) throw ConfigError("field 'lines': expected an array");
    std::vector<XrayLine> lines = cfg.lines.lines();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const json wrapper = {{"line", arr[i]}};
      Section l(wrapper, "line");
      XrayLine line{"", 0.0, 1.0};
      l.read("label", line.label);
      if (line.label.empty())
        throw ConfigError("field 'lines[" + std::to_string(i) + "].label': required");
      auto it = std::find_if(lines.begin(), lines.end(),
                             [&](const XrayLine& x) { return x.label == line.label; });
      if (it != lines.end()) line = *it;
      l.read("energy_eV", line.energy_eV);
      l.read("relative_intensity", line.relative_intensity);
      l.finish();
      if (it != lines.end())
        *it = line;
      else
        lines.push_back(line);
    }
    cfg.lines = LineCatalog(std::move(lines));
  }

  Section run(root, "run");
  run.read("current_A", cfg.run.current_A);
  run.read("duration_min", cfg.run.duration_min);
  run.read("frame_exposure_min", cfg.run.frame_exposure_min);
  run.read("seed", cfg.run.seed);
  run.read("frames_per_mode", cfg.run.frames_per_mode);
  run.finish();

  Section s(root, "sources");
  auto& mix = cfg.sources;
  s.read("continuum_rate_per_frame", mix.continuum_rate_per_frame);
  if (s.has("continuum_range_eV")) mix.continuum_range_eV = read_range(s, "continuum_range_eV");
  s.read("cu_kalpha_rate_per_frame", mix.cu_kalpha_rate_per_frame);
  s.read("cu_kbeta_rate_per_frame", mix.cu_kbeta_rate_per_frame);
  s.read("cosmic_track_rate_per_frame", mix.cosmic_track_rate_per_frame);
  s.read("injected_beta2_over_2", mix.injected_beta2_over_2);
  s.read("calibration_source_active", mix.calibration_source_active);
  s.read("calibration_kalpha_rate_per_frame", mix.calibration_kalpha_rate_per_frame);
  if (s.has("track_pixel_energy_eV"))
    mix.track_pixel_energy_eV = read_range(s, "track_pixel_energy_eV");
  if (s.has("track_length_px")) {
    const json* v = s.find("track_length_px");
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() ||
        !(*v)[1].is_number_integer())
      throw ConfigError("field 'sources.track_length_px': expected [lo, hi] integers");
    mix.track_length_px = {(*v)[0].get<int>(), (*v)[1].get<int>()};
  }
  s.read("topology_acceptance", mix.topology_acceptance);
  s.finish();

  Section c(root, "calibration");
  c.read("frames", cfg.calibration.frames);
  if (const json* v = c.find("lines")) {
    if (!v->is_array()) throw ConfigError("field 'calibration.lines': expected an array");
    cfg.calibration.lines.clear();
    for (const auto& item : *v) {
      if (!item.is_string())
        throw ConfigError("field 'calibration.lines': expected an array of strings");
      cfg.calibration.lines.push_back(item.get<std::string>());
    }
  }
  c.read("window_sigma", cfg.calibration.window_sigma);
  c.read("per_ccd", cfg.calibration.per_ccd);
  c.finish();

  Section sel(root, "selection");
  if (sel.has("connectivity")) {
    int conn = 0;
    sel.read("connectivity", conn);
    if (conn != 4 && conn != 8)
      throw ConfigError("field 'selection.connectivity': must be 4 or 8");
    cfg.selection.connectivity = conn == 4 ? Connectivity::four : Connectivity::eight;
  }
  sel.read("accept_double", cfg.selection.accept_double);
  if (sel.has("band_eV")) cfg.selection.band_eV = read_range(sel, "band_eV");
  sel.finish();

  Section b(root, "spectrum");
  b.read("bin_lo_eV", cfg.binning.lo_eV);
  b.read("bin_width_eV", cfg.binning.width_eV);
  b.read("n_bins", cfg.binning.n_bins);
  b.finish();

  Section a(root, "analysis");
  if (a.has("roi_eV")) cfg.analysis.roi_eV = read_range(a, "roi_eV");
  read_enum(a, "normalization", cfg.analysis.normalization, [](const std::string& t) {
    if (t == "time") return Normalization::time;
    if (t == "sideband") return Normalization::sideband;
    throw ConfigError(t);
  });
  if (const json* v = a.find("sidebands_eV")) {
    if (!v->is_array()) throw ConfigError("field 'analysis.sidebands_eV': expected an array");
    cfg.analysis.sidebands_eV.clear();
    for (const auto& item : *v) {
      if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number())
        throw ConfigError("field 'analysis.sidebands_eV': expected [[lo, hi], ...]");
      cfg.analysis.sidebands_eV.emplace_back(item[0].get<double>(), item[1].get<double>());
    }
  }
  a.finish();

  Section lim(root, "limit");
  lim.read("efficiency", cfg.limit.efficiency);
  lim.read("confidence_level", cfg.limit.confidence_level);
  read_enum(lim, "method", cfg.limit.method, [](const std::string& t) {
    if (t == "gaussian_3sigma") return LimitMethod::gaussian_3sigma;
    if (t == "poisson_upper") return LimitMethod::poisson_upper;
    throw ConfigError(t);
  });
  const bool has_ref = lim.has("locality_reference_length_m");
  lim.read("locality_exponent", cfg.limit.locality_exponent);
  lim.read("locality_reference_length_m", cfg.limit.locality_reference_length_m);
  if (!has_ref && cfg.limit.locality_exponent > 0.0) {
    // Re-anchor the default reference length to the chosen exponent.
    const LimitSettings defaults;
    const double anchor_length =
        defaults.locality_reference_length_m * std::pow(4.5e-28, 1.0 / defaults.locality_exponent);
    cfg.limit.locality_reference_length_m =
        anchor_length / std::pow(4.5e-28, 1.0 / cfg.limit.locality_exponent);
  }
  lim.finish();

  cfg.validate();
  return cfg;
}

json range_json(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }

}  // namespace

RunConfig parse_config(std::string_view text) {
  const bool blank = std::all_of(text.begin(), text.end(),
                                 [](unsigned char ch) { return std::isspace(ch); });
  if (blank) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration syntax error: ") + e.what());
  }
  return from_json(root);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const RunConfig& cfg) {
  json j;
  const auto& g = cfg.geometry;
  j["geometry"] = {{"cylinder_radius_mm", g.cylinder_radius_mm},
                   {"foil_thickness_um", g.foil_thickness_um},
                   {"cylinder_height_mm", g.cylinder_height_mm},
                   {"n_ccds", g.n_ccds},
                   {"ccd_distance_mm", g.ccd_distance_mm},
                   {"active_ccds", g.active_ccds},
                   {"pixel_rows", g.pixel_rows},
                   {"pixel_cols", g.pixel_cols},
                   {"pixel_pitch_um", g.pixel_pitch_um},
                   {"conductor_length_mm", g.conductor_length_mm ? json(*g.conductor_length_mm)
                                                                 : json(nullptr)}};
  const auto& r = cfg.response;
  j["response"] = {{"fwhm_at_ref_eV", r.fwhm_at_ref_eV},
                   {"ref_energy_eV", r.ref_energy_eV},
                   {"resolution_scaling", to_string(r.resolution_scaling)},
                   {"adu_gain_eV_per_adu", r.adu_gain_eV_per_adu},
                   {"adu_offset_eV", r.adu_offset_eV},
                   {"pixel_threshold_adu", r.pixel_threshold_adu},
                   {"charge_sharing_fraction", r.charge_sharing_fraction},
                   {"readout_noise_adu", r.readout_noise_adu}};
  const auto& p = cfg.physics;
  j["physics"] = {{"electron_charge_C", p.electron_charge_C},
                  {"electron_mfp_copper_m", p.electron_mfp_copper_m},
                  {"capture_factor", p.capture_factor},
                  {"silicon_fano", p.silicon_fano},
                  {"pair_energy_eV", p.pair_energy_eV}};
  j["lines"] = json::array();
  for (const auto& line : cfg.lines.lines())
    j["lines"].push_back({{"label", line.label},
                          {"energy_eV", line.energy_eV},
                          {"relative_intensity", line.relative_intensity}});
  j["run"] = {{"current_A", cfg.run.current_A},
              {"duration_min", cfg.run.duration_min},
              {"frame_exposure_min", cfg.run.frame_exposure_min},
              {"seed", cfg.run.seed},
              {"frames_per_mode",
               cfg.run.frames_per_mode ? json(*cfg.run.frames_per_mode) : json(nullptr)}};
  const auto& s = cfg.sources;
  j["sources"] = {{"continuum_rate_per_frame", s.continuum_rate_per_frame},
                  {"continuum_range_eV", range_json(s.continuum_range_eV)},
                  {"cu_kalpha_rate_per_frame", s.cu_kalpha_rate_per_frame},
                  {"cu_kbeta_rate_per_frame", s.cu_kbeta_rate_per_frame},
                  {"cosmic_track_rate_per_frame", s.cosmic_track_rate_per_frame},
                  {"injected_beta2_over_2", s.injected_beta2_over_2},
                  {"calibration_source_active", s.calibration_source_active},
                  {"calibration_kalpha_rate_per_frame", s.calibration_kalpha_rate_per_frame},
                  {"track_pixel_energy_eV", range_json(s.track_pixel_energy_eV)},
                  {"track_length_px", json::array({s.track_length_px.first,
                                                   s.track_length_px.second})},
                  {"topology_acceptance", s.topology_acceptance}};
  j["calibration"] = {{"frames", cfg.calibration.frames},
                      {"lines", cfg.calibration.lines},
                      {"window_sigma", cfg.calibration.window_sigma},
                      {"per_ccd", cfg.calibration.per_ccd}};
  j["selection"] = {{"connectivity", static_cast<int>(cfg.selection.connectivity)},
                    {"accept_double", cfg.selection.accept_double},
                    {"band_eV", range_json(cfg.selection.band_eV)}};
  j["spectrum"] = {{"bin_lo_eV", cfg.binning.lo_eV},
                   {"bin_width_eV", cfg.binning.width_eV},
                   {"n_bins", cfg.binning.n_bins}};
  json sidebands = json::array();
  for (const auto& sb : cfg.analysis.sidebands_eV) sidebands.push_back(range_json(sb));
  j["analysis"] = {{"roi_eV", range_json(cfg.analysis.roi_eV)},
                   {"normalization", to_string(cfg.analysis.normalization)},
                   {"sidebands_eV", sidebands}};
  j["limit"] = {{"efficiency", cfg.limit.efficiency},
                {"confidence_level", cfg.limit.confidence_level},
                {"method", to_string(cfg.limit.method)},
                {"locality_exponent", cfg.limit.locality_exponent},
                {"locality_reference_length_m", cfg.limit.locality_reference_length_m}};
  return j;
}

std::string config_digest(const RunConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

}  // namespace vip
