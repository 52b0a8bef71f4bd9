// dhcal: generate, calibrate, predict and evaluate hydraulic models of
// radial district-heating networks.
//
// Subcommands:
//   simulate   synthesize a measurement campaign from a truth model
//   calibrate  fit pipe and valve parameters to a measurement file
//   predict    run a fitted model forward over logged set-points
//   evaluate   compare predictions against observations, export plots
//
// Every artifact goes to a file; standard error carries one `key=value`
// log line per step.  Exit codes: 0 success, 2 usage or configuration
// error, 3 data or solver failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dhcal/calibrate.hpp"
#include "dhcal/evaluate.hpp"
#include "dhcal/forward.hpp"
#include "dhcal/ingest.hpp"
#include "dhcal/model_io.hpp"
#include "dhcal/synth.hpp"

#ifndef DHCAL_DATA_DIR
#define DHCAL_DATA_DIR "data"
#endif

namespace {

namespace fs = std::filesystem;

void log_line(const std::string& line) { std::cerr << line << '\n'; }

fs::path data_dir() {
  if (const char* env = std::getenv("DHCAL_DATA")) return fs::path(env);
  return fs::path(DHCAL_DATA_DIR);
}

/// A model argument names either a file or a bundled preset
/// (A-exciting, B-exciting, C-exciting, C-realistic).
dhcal::HydraulicModel resolve_model(const std::string& arg,
                                    const std::string& flag) {
  if (fs::exists(arg)) return dhcal::load_model(arg);
  const fs::path bundled = data_dir() / "presets" / (arg + ".json");
  if (fs::exists(bundled)) return dhcal::load_model(bundled);
  throw CLI::ValidationError(
      flag, "'" + arg + "' is neither a model file nor a bundled preset in " +
                (data_dir() / "presets").string());
}

std::vector<double> parse_row(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ','))
    try {
      out.push_back(dhcal::csv_detail::parse_double(cell, flag));
    } catch (const dhcal::Error& e) {
      throw CLI::ValidationError(flag, e.what());
    }
  return out;
}

bool file_is_processed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dhcal::DataError("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto header = dhcal::csv_detail::split(line);
    return header.size() >= 2 && dhcal::csv_detail::lower(header[1]) == "dp0";
  }
  throw dhcal::DataError("'" + path + "' has no header line");
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string truth;
  std::string protocol = "exciting";
  int dwells = 100;
  std::uint64_t seed = 0;
  double floor = 0.3, ceiling = 1.0;
  int dwell_seconds = 40;
  double noise = 0.0, pressure_noise = 0.0;
  double dp0 = 5.0;
  std::vector<std::string> target_rows;
  std::optional<double> delta_true;
  std::string out = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  const dhcal::HydraulicModel truth = resolve_model(a.truth, "--truth");
  dhcal::SynthConfig cfg;
  cfg.seed = a.seed;
  cfg.floor = a.floor;
  cfg.ceiling = a.ceiling;
  cfg.dwell = a.dwell_seconds;
  cfg.noise_flow = a.noise;
  cfg.noise_pressure = a.pressure_noise;
  cfg.dp0 = a.dp0;
  cfg.delta_true = a.delta_true.value_or(truth.delta);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("simulate", e.what());
  }

  dhcal::SynthResult result;
  if (a.protocol == "exciting") {
    if (a.dwells < 1)
      throw CLI::ValidationError("--dwells", "need at least one dwell");
    result = dhcal::generate_exciting(truth, cfg, a.dwells);
  } else {
    if (a.target_rows.empty())
      throw CLI::ValidationError(
          "--targets", "the loadcurve protocol needs reference flow rows");
    std::vector<std::vector<double>> refs;
    for (const std::string& row : a.target_rows)
      refs.push_back(parse_row(row, "--targets"));
    for (const auto& r : refs)
      if (r.size() != truth.network->consumer_count())
        throw CLI::ValidationError(
            "--targets", "each row needs one flow per consumer (" +
                             std::to_string(truth.network->consumer_count()) +
                             ")");
    result = dhcal::generate_loadcurve(truth, cfg, refs);
  }

  fs::create_directories(a.out);
  const fs::path raw = fs::path(a.out) / "raw.csv";
  const fs::path truth_csv = fs::path(a.out) / "truth.csv";
  dhcal::save_raw_csv(result.raw, raw.string());
  dhcal::save_truth_csv(result, truth_csv.string());
  log_line("event=simulated protocol=" + a.protocol +
           " dwells=" + std::to_string(result.truth.size()) +
           " records=" + std::to_string(result.raw.size()) +
           " saturated=" + std::to_string(result.saturated.size()) +
           " non_converged=" + std::to_string(result.non_converged.size()));
  log_line("event=wrote path=" + raw.string());
  log_line("event=wrote path=" + truth_csv.string());
  return 0;
}

// --- calibrate -------------------------------------------------------------

struct CalibrateArgs {
  std::string data;
  std::string topology;
  std::string preset = "B";
  std::optional<double> delta;
  double window = 40.0, discard = 10.0;
  double flow_floor = 0.05;
  std::string out = "model.json";
  std::string report;
  std::string reject_log;
};

int cmd_calibrate(const CalibrateArgs& a) {
  auto network = std::make_shared<dhcal::Network>(
      dhcal::load_topology(a.topology));
  dhcal::ModelPreset preset;
  try {
    preset = dhcal::model_preset(a.preset);
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--model", e.what());
  }
  if (a.delta) preset.delta = *a.delta;
  if (!(preset.delta >= 0.0 && preset.delta < 1.0))
    throw CLI::ValidationError("--delta", "deadband must lie in [0, 1)");

  dhcal::AssemblyOptions assembly;
  assembly.flow_floor = a.flow_floor;
  dhcal::WindowingOptions windowing;
  windowing.window = a.window;
  windowing.discard = a.discard;
  std::vector<dhcal::RejectedWindow> rejects;

  dhcal::FittedModel fit;
  if (file_is_processed(a.data)) {
    // Already-windowed samples: the deadband can only be applied to the
    // per-sample set-points.
    const dhcal::Dataset dataset = dhcal::load_dataset(a.data);
    log_line("event=loaded samples=" + std::to_string(dataset.samples.size()));
    fit = dhcal::calibrate(dataset, network, preset, assembly);
  } else {
    // Raw stream: the deadband acts on the 1 Hz commands, before any
    // windowing, mirroring how the physical spindle would have moved.
    auto records = dhcal::load_raw_csv(a.data);
    if (preset.delta > 0.0)
      records = dhcal::apply_deadband(std::move(records), preset.delta);
    dhcal::Dataset dataset = dhcal::windowed_samples(
        records, windowing.window, windowing.discard, windowing, &rejects);
    log_line("event=windowed samples=" + std::to_string(dataset.samples.size()) +
             " rejected_windows=" + std::to_string(rejects.size()));
    fit = dhcal::calibrate(dataset, network, preset, assembly, {},
                           /*apply_filter=*/false);
    fit.model.delta = preset.delta;
  }

  log_line("event=fitted model=" + preset.name +
           " status=" + dhcal::to_string(fit.status) +
           " rows=" + std::to_string(fit.rows.size()) +
           " excluded=" + std::to_string(fit.excluded.size()) +
           " iterations=" + std::to_string(fit.iterations) +
           " objective=" + std::to_string(fit.objective));
  dhcal::save_model(fit.model, a.out);
  log_line("event=wrote path=" + a.out);
  if (!a.report.empty()) {
    dhcal::save_fit_report(fit, a.report);
    log_line("event=wrote path=" + a.report);
  }
  if (!a.reject_log.empty()) {
    dhcal::save_reject_log(rejects, a.reject_log);
    log_line("event=wrote path=" + a.reject_log);
  }
  return 0;
}

// --- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out = "predictions.csv";
};

int cmd_predict(const PredictArgs& a) {
  const dhcal::HydraulicModel model = resolve_model(a.model, "--model");
  const dhcal::Dataset dataset = dhcal::load_dataset(a.data);
  if (!dataset.samples.empty() &&
      dataset.consumer_count() != model.network->consumer_count())
    throw CLI::ValidationError(
        "--data", "dataset has " + std::to_string(dataset.consumer_count()) +
                      " consumers but the model expects " +
                      std::to_string(model.network->consumer_count()));
  const dhcal::PredictResult pred = dhcal::predict_dataset(model, dataset);
  dhcal::save_predictions(dataset, pred, a.out);
  log_line("event=predicted samples=" + std::to_string(pred.flows.size()) +
           " failures=" + std::to_string(pred.failures.size()));
  for (const auto& [index, reason] : pred.failures)
    log_line("event=prediction_failure sample=" + std::to_string(index) +
             " reason=\"" + reason + "\"");
  log_line("event=wrote path=" + a.out);
  return 0;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string data;
  std::string predictions;
  std::string train;
  std::string model;
  double band = 0.2;
  std::string out = "report";
};

int cmd_evaluate(const EvaluateArgs& a) {
  const dhcal::Dataset dataset = dhcal::load_dataset(a.data);
  const dhcal::Predictions pred = dhcal::load_predictions(a.predictions);

  std::optional<dhcal::Dataset> train;
  if (!a.train.empty()) train = dhcal::load_dataset(a.train);
  std::optional<dhcal::HydraulicModel> model;
  if (!a.model.empty()) model = resolve_model(a.model, "--curves");

  if (!(a.band > 0.0))
    throw CLI::ValidationError("--band", "band must be positive");
  const dhcal::PredictionReport report = dhcal::error_report(
      dataset, pred.q, train ? &*train : nullptr, a.band);
  dhcal::export_plots(report, a.out, model ? &*model : nullptr);

  std::ostringstream stats;
  stats << "event=evaluated samples=" << report.samples_used
        << " skipped=" << report.samples_skipped;
  const auto gaps = dhcal::hysteresis_gap(report);
  for (std::size_t i = 0; i < report.valves.size(); ++i) {
    stats << " mae" << i + 1 << "="
          << dhcal::csv_detail::format_double(report.valves[i].mae);
    if (gaps[i])
      stats << " gap" << i + 1 << "="
            << dhcal::csv_detail::format_double(*gaps[i]);
  }
  log_line(stats.str());
  log_line("event=wrote path=" + a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Hydraulic calibration toolkit for radial district-heating networks"};
  app.require_subcommand(1);
  int rc = 0;
  app.set_config("--config", "", "TOML file with per-subcommand tables;"
                                 " command-line flags win");
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  SimulateArgs sim;
  CLI::App* s = app.add_subcommand(
      "simulate", "Synthesize a measurement campaign from a truth model");
  s->add_option("--truth", sim.truth,
                "Truth model: a model file or a bundled preset name")
      ->required()
      ->envname("DHCAL_TRUTH");
  s->add_option("--preset", sim.protocol,
                "Excitation protocol: exciting (random dwells) or loadcurve"
                " (flow reference tracking)")
      ->check(CLI::IsMember({"exciting", "loadcurve"}));
  s->add_option("--dwells", sim.dwells, "Number of dwells (exciting protocol)");
  s->add_option("--seed", sim.seed, "Noise and excitation RNG seed");
  s->add_option("--floor", sim.floor, "Lowest commanded set-point");
  s->add_option("--ceiling", sim.ceiling, "Highest commanded set-point");
  s->add_option("--dwell-seconds", sim.dwell_seconds,
                "Seconds each command is held");
  s->add_option("--noise", sim.noise,
                "Uniform noise amplitude on flow channels, l/min");
  s->add_option("--pressure-noise", sim.pressure_noise,
                "Uniform noise amplitude on pressure channels, mH2O");
  s->add_option("--dp0", sim.dp0, "Pump head across the root, mH2O");
  s->add_option("--targets", sim.target_rows,
                "Reference flows for one loadcurve dwell, comma separated;"
                " repeat once per dwell");
  s->add_option("--delta-true", sim.delta_true,
                "Actuator deadband of the simulated plant"
                " (default: the truth model's)");
  s->add_option("--out", sim.out, "Output directory for raw.csv and truth.csv")
      ->envname("DHCAL_OUT");
  s->callback([&] { rc = cmd_simulate(sim); });

  CalibrateArgs cal;
  CLI::App* c = app.add_subcommand(
      "calibrate", "Fit pipe and valve parameters to measurements");
  c->add_option("--data", cal.data, "Measurement CSV (raw stream or windowed)")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DHCAL_DATASET");
  c->add_option("--topology", cal.topology, "Network topology JSON")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DHCAL_TOPOLOGY");
  c->add_option("--model", cal.preset,
                "Model structure: A (single linear characteristic),"
                " B (ramp grid), C (ramp grid with deadband 0.015)");
  c->add_option("--delta", cal.delta, "Override the preset's deadband");
  c->add_option("--window", cal.window, "Averaging window, seconds");
  c->add_option("--discard", cal.discard,
                "Transient seconds discarded at each window start");
  c->add_option("--flow-floor", cal.flow_floor,
                "Exclude rows whose consumer flow is below this, l/min");
  c->add_option("--out", cal.out, "Fitted model JSON path")
      ->envname("DHCAL_MODEL_OUT");
  c->add_option("--report", cal.report, "Optional fit report JSON path");
  c->add_option("--reject-log", cal.reject_log,
                "Optional CSV listing rejected windows");
  c->callback([&] { rc = cmd_calibrate(cal); });

  PredictArgs prd;
  CLI::App* p = app.add_subcommand(
      "predict", "Run a fitted model forward over logged set-points");
  p->add_option("--model", prd.model,
                "Model file or bundled preset name")
      ->required()
      ->envname("DHCAL_MODEL");
  p->add_option("--data", prd.data, "Dataset with set-points and heads")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DHCAL_DATASET");
  p->add_option("--out", prd.out, "Prediction CSV path")->envname("DHCAL_OUT");
  p->callback([&] { rc = cmd_predict(prd); });

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand(
      "evaluate", "Compare predictions against observations, export plots");
  e->add_option("--data", ev.data, "Observed dataset CSV")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DHCAL_DATASET");
  e->add_option("--pred", ev.predictions, "Prediction CSV from `predict`")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DHCAL_PREDICTIONS");
  e->add_option("--train", ev.train,
                "Training dataset for set-point coverage bands")
      ->check(CLI::ExistingFile);
  e->add_option("--curves", ev.model,
                "Model whose valve curves should be exported");
  e->add_option("--band", ev.band, "Within-band error threshold, l/min");
  e->add_option("--out", ev.out, "Report directory")->envname("DHCAL_OUT");
  e->callback([&] { rc = cmd_evaluate(ev); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  } catch (const dhcal::Error& err) {
    log_line(std::string("error=\"") + err.what() + "\"");
    return 3;
  } catch (const std::invalid_argument& err) {
    log_line(std::string("error=\"") + err.what() + "\"");
    return 2;
  } catch (const std::exception& err) {
    log_line(std::string("error=\"") + err.what() + "\"");
    return 3;
  }
  return rc;
}
