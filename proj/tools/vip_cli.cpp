#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vip/model/config.hpp"
#include "vip/model/errors.hpp"
#include "vip/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vip;

namespace {

fs::path data_dir() {
  if (const char* env = std::getenv("VIP_DATA_DIR"); env && *env) return env;
  return "vip-data";
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta2;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
  if (c.seed) cfg.run.seed = *c.seed;
  if (c.beta2) cfg.sources.injected_beta2_over_2 = *c.beta2;
  cfg.validate();
  return cfg;
}

void report(const pipeline::StageRecord& rec) {
  pipeline::PipelineManifest m;
  m.stages.push_back(rec);
  std::cout << to_json(m, true).at("stages").at(0).dump(2) << '\n';
}

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON); defaults when omitted")
      ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VIP CCD simulation and Pauli-violation analysis"};
  app.require_subcommand(1);

  Common common;
  std::string out, in, events, calib, on, off, roistats, mode_name = "on";
  std::vector<std::string> lines;
  const std::string out_help = "output path (defaults under $VIP_DATA_DIR or ./vip-data)";

  auto* simulate = app.add_subcommand("simulate", "simulate one run into a frame directory");
  add_config(simulate, common);
  simulate->add_option("--mode", mode_name, "on | off | calib")->check(CLI::IsMember({"on", "off", "calib", "current_on", "current_off", "calibration"}));
  simulate->add_option("--seed", common.seed, "master seed override");
  simulate->add_option("--beta2", common.beta2, "injected beta^2/2 override");
  simulate->add_option("--out", out, out_help);

  auto* select = app.add_subcommand("select", "cluster and select X-ray events from frames");
  add_config(select, common);
  select->add_option("--in", in, "frame directory")->required()->check(CLI::ExistingDirectory);
  select->add_option("--out", out, out_help);

  auto* calibrate = app.add_subcommand("calibrate", "fit calibration lines and derive gain/offset");
  add_config(calibrate, common);
  calibrate->add_option("--events", events, "calibration-run events CSV")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--lines", lines, "line labels to fit (default from config)");
  calibrate->add_option("--out", out, out_help);

  auto* spectra = app.add_subcommand("spectra", "histogram calibrated events");
  add_config(spectra, common);
  spectra->add_option("--events", events, "events CSV")->required()->check(CLI::ExistingFile);
  spectra->add_option("--calib", calib, "calibration JSON")->required()->check(CLI::ExistingFile);
  spectra->add_option("--out", out, out_help);

  auto* subtract = app.add_subcommand("subtract", "current-on minus normalised current-off");
  add_config(subtract, common);
  subtract->add_option("--on", on, "current-on spectrum CSV")->required()->check(CLI::ExistingFile);
  subtract->add_option("--off", off, "current-off spectrum CSV")->required()->check(CLI::ExistingFile);
  subtract->add_option("--out", out, out_help);

  auto* roi = app.add_subcommand("roistats", "ROI excess and significance");
  roi->add_option("--in", in, "subtracted spectrum CSV")->required()->check(CLI::ExistingFile);
  roi->add_option("--out", out, out_help);

  auto* limit = app.add_subcommand("limit", "bound on beta^2/2 from ROI statistics");
  add_config(limit, common);
  limit->add_option("--roistats", roistats, "ROI statistics JSON")->required()->check(CLI::ExistingFile);
  limit->add_option("--out", out, out_help);

  auto* plot = app.add_subcommand("plotdata", "x,y,yerr triplets from a spectrum CSV");
  plot->add_option("--in", in, "spectrum or subtracted spectrum CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out, out_help);

  auto* experiment = app.add_subcommand("run-experiment", "full on/off experiment and limit");
  add_config(experiment, common);
  experiment->add_option("--seed", common.seed, "master seed override");
  experiment->add_option("--beta2", common.beta2, "injected beta^2/2 override");
  experiment->add_option("--out", out, out_help);

  CLI11_PARSE(app, argc, argv);

  auto out_or = [&](const fs::path& fallback) { return out.empty() ? data_dir() / fallback : fs::path(out); };
  try {
    if (simulate->parsed()) {
      const RunMode mode = run_mode_from_string(mode_name);
      report(pipeline::stage_simulate(resolve(common), mode, out_or(fs::path(std::string(to_string(mode))) / "frames")));
    } else if (select->parsed()) {
      report(pipeline::stage_select(resolve(common), in, out_or("events.csv")));
    } else if (calibrate->parsed()) {
      const RunConfig cfg = resolve(common);
      if (lines.empty()) lines = cfg.calibration.lines;
      report(pipeline::stage_calibrate(cfg, events, lines, out_or("calib.json")));
    } else if (spectra->parsed()) {
      report(pipeline::stage_spectra(resolve(common), events, calib, out_or("spectrum.csv")));
    } else if (subtract->parsed()) {
      report(pipeline::stage_subtract(resolve(common), on, off, out_or("subtracted.csv")));
    } else if (roi->parsed()) {
      report(pipeline::stage_roistats(in, out_or("roistats.json")));
    } else if (limit->parsed()) {
      report(pipeline::stage_limit(resolve(common), roistats, out_or("limit.json")));
    } else if (plot->parsed()) {
      report(pipeline::stage_plotdata(in, out_or("plot.csv")));
    } else if (experiment->parsed()) {
      const fs::path dir = out_or("experiment");
      const auto result = pipeline::run_experiment(resolve(common), dir);
      std::cout << "beta2/2 bound " << result.limit.beta2_over_2_bound << " (delta "
                << result.limit.roi.delta << " +- " << result.limit.roi.sigma_delta << ", z "
                << result.limit.roi.z_score << ")\n"
                << "artifacts in " << dir.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input [" << e.invariant() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
