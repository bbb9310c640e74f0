#include <cmath>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vip/model/config.hpp"
#include "vip/model/digest.hpp"
#include "vip/model/errors.hpp"
#include "vip/model/io.hpp"
#include "vip/model/reference_data.hpp"
#include "vip/model/types.hpp"

using namespace vip;

namespace {

std::string invariant_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.invariant();
  }
  return "";
}

}  // namespace

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update(std::string_view("a"));
  h.update(std::string_view("bc"));
  EXPECT_EQ(h.hex_digest(), sha256_hex(std::string_view("abc")));
}

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig cfg = parse_config("");
  EXPECT_EQ(cfg, RunConfig{});
  EXPECT_DOUBLE_EQ(cfg.geometry.cylinder_radius_mm, 45.0);
  EXPECT_DOUBLE_EQ(cfg.geometry.foil_thickness_um, 50.0);
  EXPECT_DOUBLE_EQ(cfg.geometry.cylinder_height_mm, 88.0);
  EXPECT_EQ(cfg.geometry.n_ccds, 16);
  EXPECT_DOUBLE_EQ(cfg.geometry.ccd_distance_mm, 23.0);
  EXPECT_EQ(cfg.geometry.active_ccds, 14);
  EXPECT_DOUBLE_EQ(cfg.response.fwhm_at_ref_eV, 320.0);
  EXPECT_DOUBLE_EQ(cfg.response.ref_energy_eV, 8000.0);
  EXPECT_DOUBLE_EQ(cfg.analysis.roi_eV.first, 7564.0);
  EXPECT_DOUBLE_EQ(cfg.analysis.roi_eV.second, 7894.0);
  EXPECT_DOUBLE_EQ(cfg.binning.width_eV, 32.0);
  EXPECT_DOUBLE_EQ(cfg.limit.efficiency, 0.01);
  EXPECT_DOUBLE_EQ(cfg.limit.confidence_level, 0.997);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, EmptyFileGivesDefaults) {
  test::TempDir dir;
  std::ofstream(dir / "empty.json").close();
  EXPECT_EQ(load_config(dir / "empty.json"), RunConfig{});
}

TEST(Config, ReferenceDataDrivesPhysicsDefaults) {
  const auto& ref = reference_data();
  const PhysicsConstants p;
  EXPECT_DOUBLE_EQ(p.electron_mfp_copper_m, ref.electron_mfp_copper_m);
  EXPECT_DOUBLE_EQ(p.electron_mfp_copper_m, 3.9e-8);
  EXPECT_DOUBLE_EQ(p.capture_factor, 0.1);
  EXPECT_DOUBLE_EQ(p.silicon_fano, 0.115);
  EXPECT_DOUBLE_EQ(p.pair_energy_eV, 3.71);
  EXPECT_DOUBLE_EQ(p.electron_charge_C, 1.602176634e-19);
}

TEST(Config, FrascatiOverride) {
  const RunConfig cfg = parse_config(R"({"run": {"current_A": 40, "duration_min": 14510}})");
  const RunPlan on = cfg.plan(RunMode::current_on);
  EXPECT_DOUBLE_EQ(on.current_A, 40.0);
  EXPECT_DOUBLE_EQ(on.duration_min, 14510.0);
  EXPECT_EQ(on.readout_cycles(), 1451);
  EXPECT_DOUBLE_EQ(on.effective_current_A(), 40.0);
  EXPECT_DOUBLE_EQ(cfg.plan(RunMode::current_off).effective_current_A(), 0.0);
  EXPECT_EQ(cfg.real_frames_per_mode(), 1451 * 14);
}

TEST(Config, NegativeRadiusIsValidationError) {
  EXPECT_THROW(parse_config(R"({"geometry": {"cylinder_radius_mm": -1}})"), ValidationError);
  EXPECT_EQ(invariant_of(R"({"geometry": {"cylinder_radius_mm": -1}})"), "geometry.positive_length");
}

TEST(Config, SyntaxAndSchemaErrorsNameTheField) {
  try {
    parse_config("{\n  \"run\": {\"current_A\": 40,,}\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
  try {
    parse_config(R"({"geometry": {"radius": 3}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("geometry.radius"), std::string::npos) << e.what();
  }
  try {
    parse_config(R"({"run": {"current_A": "forty"}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.current_A"), std::string::npos) << e.what();
  }
}

TEST(Config, CommentsAllowed) {
  const RunConfig cfg = parse_config("// desk\n{ /* inline */ \"run\": {\"frames_per_mode\": 3} }");
  ASSERT_TRUE(cfg.run.frames_per_mode);
  EXPECT_EQ(*cfg.run.frames_per_mode, 3);
}

TEST(Config, EachViolationClassHasItsOwnInvariant) {
  const std::vector<std::string> bad = {
      R"({"geometry": {"cylinder_radius_mm": -1}})",
      R"({"geometry": {"active_ccds": 17}})",
      R"({"geometry": {"pixel_rows": 4}})",
      R"({"geometry": {"n_ccds": 0}})",
      R"({"physics": {"capture_factor": 1.5}})",
      R"({"response": {"fwhm_at_ref_eV": 0}})",
      R"({"response": {"adu_gain_eV_per_adu": -5.9}})",
      R"({"response": {"pixel_threshold_adu": -1}})",
      R"({"response": {"charge_sharing_fraction": 1.2}})",
      R"({"response": {"readout_noise_adu": -1}})",
      R"({"run": {"current_A": -40}})",
      R"({"run": {"duration_min": 105}})",
      R"({"run": {"frame_exposure_min": 0}})",
      R"({"sources": {"continuum_rate_per_frame": -1}})",
      R"({"sources": {"continuum_range_eV": [9000, 3000]}})",
      R"({"sources": {"injected_beta2_over_2": 2}})",
      R"({"selection": {"band_eV": [9000, 3000]}})",
      R"({"spectrum": {"bin_width_eV": 0}})",
      R"({"spectrum": {"n_bins": 0}})",
      R"({"analysis": {"roi_eV": [7894, 7564]}})",
      R"({"limit": {"efficiency": 0}})",
      R"({"limit": {"confidence_level": 1.5}})",
      R"({"calibration": {"lines": ["Mn Ka"]}})",
      R"({"calibration": {"lines": ["Mn Ka", "Unobtainium"]}})",
      R"({"lines": [{"label": "Cu Ka", "energy_eV": -8040}]})",
  };
  std::set<std::string> seen;
  for (const auto& text : bad) {
    const std::string id = invariant_of(text);
    EXPECT_FALSE(id.empty()) << text;
    EXPECT_TRUE(seen.insert(id).second) << "duplicate invariant " << id << " for " << text;
  }
}

TEST(Config, EchoRoundTrips) {
  RunConfig cfg = parse_config(R"({
    "geometry": {"pixel_rows": 64, "pixel_cols": 80, "conductor_length_mm": 120},
    "run": {"frames_per_mode": 17, "seed": 99},
    "sources": {"injected_beta2_over_2": 1e-26, "cosmic_track_rate_per_frame": 0.3},
    "analysis": {"normalization": "sideband"},
    "limit": {"method": "poisson_upper"},
    "response": {"resolution_scaling": "constant"}
  })");
  const RunConfig back = parse_config(to_json(cfg).dump());
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(config_digest(back), config_digest(cfg));
  cfg.run.seed = 100;
  EXPECT_NE(config_digest(back), config_digest(cfg));
}

TEST(Config, LocalityExponentReanchorsReference) {
  const RunConfig cfg = parse_config(R"({"limit": {"locality_exponent": 4}})");
  const double l = cfg.limit.locality_reference_length_m * std::pow(4.5e-28, 1.0 / 4.0);
  EXPECT_NEAR(l / 1.35e-19, 1.0, 1e-12);
}

TEST(LineCatalog, DefaultLinesAndSeparation) {
  const LineCatalog cat;
  EXPECT_DOUBLE_EQ(cat.energy(line_label::cu_kalpha), 8040.0);
  EXPECT_DOUBLE_EQ(cat.energy(line_label::cu_anomalous), 7729.0);
  EXPECT_DOUBLE_EQ(cat.energy(line_label::mn_kalpha), 5899.0);
  EXPECT_TRUE(cat.contains(line_label::cu_kbeta));
  EXPECT_TRUE(cat.contains(line_label::mn_kbeta));
  EXPECT_NEAR(cat.energy(line_label::cu_anomalous) - cat.energy(line_label::cu_kalpha), -311.0, 1e-9);
  for (std::size_t i = 1; i < cat.lines().size(); ++i)
    EXPECT_LT(cat.lines()[i - 1].energy_eV, cat.lines()[i].energy_eV);
}

TEST(LineCatalog, DuplicateEnergyRejected) {
  LineCatalog cat({{"Cu Ka", 8040, 1}, {"Cu anomalous", 7729, 1}, {"Cu Kb", 8905, 0.1},
                   {"Mn Ka", 5899, 1}, {"Mn Kb", 5899, 0.1}});
  EXPECT_THROW(cat.validate(), ValidationError);
}

TEST(Response, SigmaAtReference) {
  const ResponseModel r;
  const PhysicsConstants p;
  const double expected = 320.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  EXPECT_NEAR(r.sigma_ref_eV(), expected, 1e-12);
  EXPECT_NEAR(r.sigma_eV(8000.0, p), expected, 1e-9);
  EXPECT_LT(r.sigma_eV(5899.0, p), expected);
  // sigma^2 is affine in E with slope F*w.
  const double s6 = r.sigma_eV(6000.0, p), s8 = r.sigma_eV(8000.0, p);
  EXPECT_NEAR((s8 * s8 - s6 * s6) / 2000.0, 0.115 * 3.71, 1e-9);
  ResponseModel c = r;
  c.resolution_scaling = ResolutionScaling::constant;
  EXPECT_NEAR(c.sigma_eV(3000.0, p), expected, 1e-12);
}

TEST(Response, AduRoundTrip) {
  ResponseModel r;
  r.adu_offset_eV = -11.0;
  EXPECT_NEAR(r.energy_from_adu(r.adu_from_energy(7729.0)), 7729.0, 1e-9);
}

TEST(Run, FramePlan) {
  RunPlan p;
  p.duration_min = 100;
  p.frame_exposure_min = 10;
  EXPECT_EQ(p.readout_cycles(), 10);
  p.duration_min = 0;
  EXPECT_EQ(p.readout_cycles(), 0);
  p.duration_min = 105;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Run, Thinning) {
  const RunConfig cfg = parse_config(R"({"run": {"frames_per_mode": 203}})");
  EXPECT_EQ(cfg.simulated_frames_per_mode(), 203);
  EXPECT_NEAR(cfg.thinning_scale(), 20314.0 / 203.0, 1e-12);
  EXPECT_EQ(RunConfig{}.simulated_frames_per_mode(), 20314);
  EXPECT_DOUBLE_EQ(RunConfig{}.thinning_scale(), 1.0);
  EXPECT_THROW(parse_config(R"({"run": {"frames_per_mode": 30000}})"), ValidationError);
}

TEST(RunMode, Names) {
  for (RunMode m : {RunMode::current_on, RunMode::current_off, RunMode::calibration})
    EXPECT_EQ(run_mode_from_string(to_string(m)), m);
  EXPECT_EQ(run_mode_from_string("on"), RunMode::current_on);
  EXPECT_EQ(run_mode_from_string("off"), RunMode::current_off);
  EXPECT_THROW(run_mode_from_string("sideways"), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(FrameIo, ZeroFrameRoundTrip) {
  test::TempDir dir;
  const Frame f(2, 5, 10.0f, 8, 8);
  write_frame(f, dir / "zero.vipf");
  EXPECT_EQ(read_frame(dir / "zero.vipf"), f);
  EXPECT_EQ(std::filesystem::file_size(dir / "zero.vipf"), 18u + 128u);
}

TEST(FrameIo, SaturatedPixelRoundTrip) {
  test::TempDir dir;
  Frame f(0, 0, 7.5f, 8, 8);
  f.at(3, 4) = 65535;
  write_frame(f, dir / "sat.vipf");
  const Frame back = read_frame(dir / "sat.vipf");
  EXPECT_EQ(back, f);
  EXPECT_EQ(back.at(3, 4), 65535);
}

TEST(FrameIo, PinnedDigest512) {
  test::TempDir dir;
  Frame f(3, 7, 10.0f, 512, 512);
  std::uint64_t state = 0x5EED;
  for (auto& px : f.pixels) px = std::uint16_t(test::splitmix64(state) >> 48);
  write_frame(f, dir / "a.vipf");
  write_frame(f, dir / "b.vipf");
  // Independently computed from the byte layout.
  const std::string pinned = "54644f54fc328ef143cb929654937663da4c250de9e11fa1061891f782a1554e";
  EXPECT_EQ(sha256_file(dir / "a.vipf"), pinned);
  EXPECT_EQ(sha256_file(dir / "b.vipf"), pinned);
  EXPECT_EQ(read_frame(dir / "a.vipf"), f);
}

TEST(FrameIo, CorruptFilesRejected) {
  Frame f(1, 1, 10.0f, 8, 8);
  auto bytes = encode_frame(f);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_frame(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_THROW(decode_frame(truncated), FormatError);
  auto header_only = bytes;
  header_only.resize(10);
  EXPECT_THROW(decode_frame(header_only), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_frame(longer), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_frame(version), FormatError);
}

TEST(FrameIo, DimensionMismatchAgainstGeometry) {
  DetectorGeometry g;
  g.pixel_rows = g.pixel_cols = 16;
  EXPECT_NO_THROW(Frame(0, 0, 10.0f, 16, 16).validate(g));
  EXPECT_THROW(Frame(0, 0, 10.0f, 16, 8).validate(g), ValidationError);
}

TEST(SpectrumIo, RoundTrip) {
  test::TempDir dir;
  Spectrum s;
  s.bin_lo_eV = 2000;
  s.bin_width_eV = 32;
  s.counts = {0, 5, 17, 123456789012ull, 3};
  s.exposure_min = 145100.0;
  s.mode = RunMode::current_off;
  write_spectrum(s, dir / "s.csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "s.csv.json"));
  EXPECT_EQ(read_spectrum(dir / "s.csv"), s);
  EXPECT_EQ(s.total(), 123456789037ull);
}

TEST(SpectrumIo, BadHeaderRejected) {
  test::TempDir dir;
  std::ofstream(dir / "s.csv") << "energy,n\n1,2\n";
  EXPECT_THROW(read_spectrum(dir / "s.csv"), FormatError);
}
