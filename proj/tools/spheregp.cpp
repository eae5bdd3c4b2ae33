// Command-line front end: simulate / fit / predict / diagnose / crossval.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spheregp/diagnostics.hpp"
#include "spheregp/fit.hpp"
#include "spheregp/gp.hpp"
#include "spheregp/io.hpp"
#include "spheregp/kernels.hpp"

namespace {

using namespace spheregp;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

/// Inline JSON when the argument starts with '{' or '[', otherwise a file path.
json load_json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) {
    return io::parse_json(arg, "inline JSON");
  }
  return io::read_json(arg);
}

/// A bare kernel JSON, or the "kernel" member of a model written by `fit`.
KernelSpec load_kernel_arg(const std::string& arg) {
  const json j = load_json_arg(arg);
  return io::kernel_from_json(j.is_object() && j.contains("kernel") ? j.at("kernel") : j);
}

struct DataOptions {
  std::string path;
  bool allow_nugget = false;
  bool center = false;
  std::string level;
};

void add_data_options(CLI::App* cmd, DataOptions& opts, bool with_center) {
  cmd->add_option("--data", opts.path, "Station CSV (station_id,lat_deg,lon_deg,value[,level])")
      ->required();
  cmd->add_flag("--allow-nugget", opts.allow_nugget, "Accept repeated coordinates (needs tau2 > 0)");
  cmd->add_option("--level", opts.level, "Keep only rows with this level label");
  if (with_center) cmd->add_flag("--center", opts.center, "Subtract the sample mean before modeling");
}

struct LoadedData {
  Dataset dataset;
  std::string hash;
  double center_mean = 0.0;
};

LoadedData load_data(const DataOptions& opts, std::optional<double> forced_mean = std::nullopt) {
  const std::string text = io::read_file(opts.path);
  io::StationReadOptions read_opts;
  read_opts.allow_nugget = opts.allow_nugget;
  if (!opts.level.empty()) read_opts.level = opts.level;
  LoadedData out{io::parse_stations(text, opts.path, read_opts).dataset, io::content_hash(text), 0.0};
  if (forced_mean) {
    out.center_mean = *forced_mean;
  } else if (opts.center) {
    double sum = 0.0;
    for (double v : out.dataset.values) sum += v;
    out.center_mean = sum / static_cast<double>(out.dataset.size());
  }
  for (double& v : out.dataset.values) v -= out.center_mean;
  io::log_info("loaded " + std::to_string(out.dataset.size()) + " stations from " + opts.path);
  return out;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string kernel, grid, out;
  std::uint64_t seed = 0;
  std::size_t draws = 1;
};

int run_simulate(const SimulateArgs& a) {
  const KernelSpec spec = io::kernel_from_json(load_json_arg(a.kernel));
  const auto sites = generate_grid(io::parse_grid_spec(a.grid));
  io::log_info("simulating " + std::to_string(a.draws) + " draw(s) at " +
               std::to_string(sites.size()) + " sites");
  const Eigen::MatrixXd draws = simulate(spec, sites, a.seed, a.draws);
  std::vector<io::StationRecord> records;
  char id[32];
  for (Eigen::Index d = 0; d < draws.rows(); ++d) {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      std::snprintf(id, sizeof(id), "g%05zu", i);
      io::StationRecord rec{id, rad_to_deg(sites[i].lat()), rad_to_deg(sites[i].lon()),
                            draws(d, static_cast<Eigen::Index>(i)), std::nullopt};
      if (a.draws > 1) rec.level = "draw_" + std::to_string(d);
      records.push_back(std::move(rec));
    }
  }
  io::write_file(a.out, io::format_stations(records));
  return kExitOk;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
  std::string kernel_template, config, out;
  DataOptions data;
};

int run_fit(const FitArgs& a) {
  const KernelSpec templ = io::kernel_from_json(load_json_arg(a.kernel_template));
  const FitConfig config = a.config.empty() ? FitConfig{} : io::fit_config_from_json(load_json_arg(a.config));
  const LoadedData data = load_data(a.data);
  const FitResult fit = fit_mle(templ, data.dataset, config);
  io::log_info("fit " + templ.descriptor() + ": log-likelihood " + io::format_number(fit.log_likelihood) +
               (fit.converged ? " (converged)" : " (not converged)"));

  json model = {
      {"kernel", io::kernel_to_json(fit.best_spec)},
      {"fit", io::fit_result_to_json(fit)},
      {"config", io::fit_config_to_json(config)},
      {"data",
       {{"path", a.data.path},
        {"hash", data.hash},
        {"n", data.dataset.size()},
        {"center_mean", a.data.center ? json(data.center_mean) : json(nullptr)},
        {"allow_nugget", a.data.allow_nugget},
        {"level", a.data.level.empty() ? json(nullptr) : json(a.data.level)}}},
  };
  io::write_json(a.out, model);
  return kExitOk;
}

// --- predict ----------------------------------------------------------------

struct PredictArgs {
  std::string model, targets, out;
  DataOptions data;
};

int run_predict(PredictArgs a) {
  const json model = load_json_arg(a.model);
  KernelSpec spec = KernelSpec::iso_exponential(1.0, 1.0);
  std::optional<double> stored_mean;
  std::optional<std::string> stored_hash;
  if (model.contains("kernel")) {
    spec = io::kernel_from_json(model.at("kernel"));
    const json& meta = model.value("data", json::object());
    if (meta.contains("hash")) stored_hash = meta.at("hash").get<std::string>();
    if (meta.contains("center_mean") && !meta.at("center_mean").is_null()) {
      stored_mean = meta.at("center_mean").get<double>();
    }
    if (meta.value("allow_nugget", false)) a.data.allow_nugget = true;
    if (a.data.level.empty() && meta.contains("level") && !meta.at("level").is_null()) {
      a.data.level = meta.at("level").get<std::string>();
    }
  } else {
    spec = io::kernel_from_json(model);
  }

  const LoadedData data = load_data(a.data, stored_mean);
  if (stored_hash && *stored_hash != data.hash) {
    throw DataError("dataset '" + a.data.path + "' does not match the fitted model (hash " +
                    data.hash + ", expected " + *stored_hash + ")");
  }

  const std::vector<SpherePoint> targets =
      io::looks_like_grid_spec(a.targets) ? generate_grid(io::parse_grid_spec(a.targets))
                                          : io::parse_targets(io::read_file(a.targets), a.targets);
  const GpModel gp = build_model(spec, data.dataset);
  if (gp.jitter > 0.0) io::log_info("factorization needed jitter " + io::format_number(gp.jitter));
  std::vector<PredictionResult> results = krige(gp, targets);
  for (auto& r : results) r.mean += data.center_mean;
  io::write_predictions(a.out, targets, results);
  io::log_info("wrote " + std::to_string(results.size()) + " predictions to " + a.out);
  return kExitOk;
}

// --- diagnose ---------------------------------------------------------------

struct DiagnoseArgs {
  std::string kernel, out;
  std::vector<std::string> checks{"positive_definite", "axial_symmetry", "latitudinal_reversibility",
                                  "pole_continuity"};
  std::uint64_t seed = 0;
  int pd_trials = 50;
  int pd_points = 60;
  int symmetry_trials = 1000;
};

std::string canonical_check(const std::string& name) {
  if (name == "pd" || name == "positive_definite") return "positive_definite";
  if (name == "axial" || name == "axial_symmetry") return "axial_symmetry";
  if (name == "reversibility" || name == "latitudinal_reversibility") return "latitudinal_reversibility";
  if (name == "pole" || name == "pole_continuity") return "pole_continuity";
  throw CLI::ValidationError("--checks", "unknown check '" + name + "'");
}

int run_diagnose(const DiagnoseArgs& a) {
  const KernelSpec spec = load_kernel_arg(a.kernel);
  std::vector<DiagnosticReport> reports;
  json out = {{"kernel", io::kernel_to_json(spec)}, {"seed", a.seed}};
  for (const auto& raw : a.checks) {
    const std::string check = canonical_check(raw);
    if (check == "positive_definite") {
      reports.push_back(check_positive_definite(spec, a.pd_trials, a.pd_points, a.seed));
    } else if (check == "axial_symmetry") {
      reports.push_back(check_axial_symmetry(spec, a.symmetry_trials, a.seed));
    } else if (check == "latitudinal_reversibility") {
      reports.push_back(check_latitudinal_reversibility(spec, a.symmetry_trials, a.seed));
    } else {
      const auto& eps = default_pole_epsilons();
      out["pole_probe"] = io::pole_probe_to_json(
          pole_continuity_probe(kernel_function(spec), eps, 72, default_pole_reference()));
      reports.push_back(check_pole_continuity(spec, eps));
    }
  }
  json list = json::array();
  for (const auto& r : reports) list.push_back(io::report_to_json(r));
  out["reports"] = list;
  io::write_json(a.out, out);
  std::cout << io::format_report_table(reports);
  return kExitOk;
}

// --- crossval ---------------------------------------------------------------

struct CrossvalArgs {
  std::string templates, config, out;
  int folds = 5;
  std::uint64_t seed = 0;
  DataOptions data;
};

int run_crossval(const CrossvalArgs& a) {
  const json list = load_json_arg(a.templates);
  if (!list.is_array() || list.empty()) throw DataError("--templates must be a non-empty JSON array");
  std::vector<KernelSpec> templates;
  for (const auto& item : list) templates.push_back(io::kernel_from_json(item));
  const FitConfig config = a.config.empty() ? FitConfig{} : io::fit_config_from_json(load_json_arg(a.config));
  const LoadedData data = load_data(a.data);
  const CrossValidationResult cv = cross_validate(templates, data.dataset, a.folds, config, a.seed);
  json out = io::cross_validation_to_json(cv);
  out["seed"] = a.seed;
  out["k_folds"] = a.folds;
  io::write_json(a.out, out);
  for (const auto& row : cv.rows) {
    std::cout << row.model << ": "
              << (row.failed ? "failed (" + row.error + ")"
                             : "log-score " + io::format_number(row.mean_log_score, 6) + ", rmse " +
                                   io::format_number(row.rmse, 6) + ", crps " +
                                   io::format_number(row.mean_crps, 6))
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process geostatistics on the sphere with axially symmetric kernels"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw fields from a kernel on a grid");
  simulate_cmd->add_option("--kernel", sim.kernel, "Kernel JSON (file or inline)")->required();
  simulate_cmd->add_option("--grid", sim.grid, "regular:n_lat=..,n_lon=.. | reduced:n_lat=..,spacing_km=.. | fibonacci:n_points=..")
      ->required();
  simulate_cmd->add_option("--seed", sim.seed, "64-bit seed")->required();
  simulate_cmd->add_option("--draws", sim.draws, "Number of draws")->default_val(1);
  simulate_cmd->add_option("--out", sim.out, "Output station CSV")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Maximum-likelihood fit of a kernel template");
  fit_cmd->add_option("--kernel-template", fit.kernel_template, "Kernel JSON template")->required();
  fit_cmd->add_option("--config", fit.config, "Fit config JSON (file or inline)");
  fit_cmd->add_option("--out", fit.out, "Output model JSON")->required();
  add_data_options(fit_cmd, fit.data, true);

  PredictArgs pred;
  auto* predict_cmd = app.add_subcommand("predict", "Krige a fitted model at target points");
  predict_cmd->add_option("--model", pred.model, "Model JSON from `fit`, or a bare kernel JSON")->required();
  predict_cmd->add_option("--targets", pred.targets, "Target CSV with lon_deg,lat_deg or a grid spec")
      ->required();
  predict_cmd->add_option("--out", pred.out, "Output prediction CSV")->required();
  add_data_options(predict_cmd, pred.data, true);

  DiagnoseArgs diag;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Run property checks on a kernel");
  diagnose_cmd->add_option("--kernel", diag.kernel, "Kernel JSON or fitted model JSON (file or inline)")->required();
  diagnose_cmd->add_option("--checks", diag.checks, "pd,axial,reversibility,pole")->delimiter(',');
  diagnose_cmd->add_option("--seed", diag.seed, "64-bit seed")->default_val(0);
  diagnose_cmd->add_option("--pd-trials", diag.pd_trials)->default_val(50)->check(CLI::PositiveNumber);
  diagnose_cmd->add_option("--pd-points", diag.pd_points)->default_val(60)->check(CLI::Range(2, 100000));
  diagnose_cmd->add_option("--symmetry-trials", diag.symmetry_trials)->default_val(1000)->check(CLI::PositiveNumber);
  diagnose_cmd->add_option("--out", diag.out, "Output report JSON")->required();

  CrossvalArgs cv;
  auto* crossval_cmd = app.add_subcommand("crossval", "K-fold cross-validation of kernel templates");
  crossval_cmd->add_option("--templates", cv.templates, "JSON array of kernel templates")->required();
  crossval_cmd->add_option("--folds", cv.folds, "Number of folds")->default_val(5)->check(CLI::Range(2, 1000000));
  crossval_cmd->add_option("--seed", cv.seed, "64-bit seed")->default_val(0);
  crossval_cmd->add_option("--config", cv.config, "Fit config JSON (file or inline)");
  crossval_cmd->add_option("--out", cv.out, "Output scorecard JSON")->required();
  add_data_options(crossval_cmd, cv.data, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*simulate_cmd) return run_simulate(sim);
    if (*fit_cmd) return run_fit(fit);
    if (*predict_cmd) return run_predict(pred);
    if (*diagnose_cmd) return run_diagnose(diag);
    if (*crossval_cmd) return run_crossval(cv);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
