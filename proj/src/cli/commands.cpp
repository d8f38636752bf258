#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <omp.h>

#include "robcv/cli.hpp"
#include "robcv/error.hpp"
#include "robcv/path_diagnostics.hpp"
#include "robcv/seed.hpp"
#include "robcv/simulation.hpp"

namespace robcv::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kFormatVersion = 1;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Non-finite numbers become null in JSON; keep them explicit as strings.
Json number_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

void write_json(const fs::path& path, const Json& json) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << json.dump(2) << '\n';
}

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

Json config_json(const RunConfig& c) {
  Json j;
  j["loss"] = c.loss;
  j["rho"] = c.rho;
  j["delta"] = c.delta;
  j["scale"] = c.scale;
  j["alpha"] = c.alpha;
  j["grid_size"] = c.grid_size;
  j["lambda_min_ratio"] = c.lambda_min_ratio;
  j["lambdas"] = c.lambdas;
  j["max_minima"] = c.max_minima;
  j["folds"] = c.folds;
  j["replications"] = c.replications;
  j["c_tau"] = c.c_tau;
  j["metric"] = c.metric;
  j["rule"] = c.rule;
  j["engine"] = c.engine;
  j["subsets"] = c.n_subsets;
  j["seed"] = c.seed;
  j["adaptive"] = c.adaptive;
  j["adaptive_exponent"] = c.adaptive_exponent;
  j["standardize"] = c.standardize;
  j["intercept"] = c.intercept;
  j["threads"] = c.threads;
  return j;
}

// Shared by fit and cv: data, standardization, loss, penalty and grid.
struct Problem {
  Dataset data;
  Standardization standardization;
  LossSpec loss;
  PenaltyFamily family;
  std::vector<double> grid;
  Json pilot;
};

Problem prepare(const fs::path& csv, const RunConfig& config) {
  Problem problem;
  const Dataset raw = read_dataset(csv);
  problem.standardization = Standardization::fit(raw, config.standardize, config.intercept);
  for (Eigen::Index j : problem.standardization.dropped) {
    std::cerr << fmt::format("warning: dropping constant column x{}\n", j + 1);
  }
  if (problem.standardization.kept.empty()) throw InputError("every predictor is constant");
  problem.data = problem.standardization.apply(raw);
  problem.loss = config.loss_spec();
  problem.family.alpha = config.alpha;

  const PipelineOptions pipeline = config.pipeline_options();
  const auto make_grid = [&] {
    if (!config.lambdas.empty()) {
      std::vector<double> grid = config.lambdas;
      std::sort(grid.begin(), grid.end(), std::greater<>());
      grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
      return grid;
    }
    return default_lambda_grid(problem.data, problem.loss, problem.family, config.grid_size,
                               config.lambda_min_ratio, pipeline.path.optimizer);
  };
  problem.grid = make_grid();

  if (config.adaptive) {
    // Pilot: the best minimum of a single-minimum fit at the middle of the grid.
    PipelineOptions pilot_options = pipeline;
    pilot_options.path.max_minima = 1;
    const double pilot_lambda = start_lambda(problem.grid);
    const MinimaRegistry pilot = fit_path(problem.data, problem.loss, problem.family, {pilot_lambda},
                                          pilot_options, derive_seed(config.seed, 7));
    if (pilot.minima.front().empty()) fail(ErrorCode::kNonConvergence, "the adaptive pilot fit failed");
    problem.family.loadings = adaptive_loadings(pilot.minima.front().front(), config.adaptive_exponent);
    problem.pilot["lambda"] = pilot_lambda;
    problem.pilot["loadings"] = vector_json(problem.family.loadings);
    problem.grid = make_grid();
  }
  return problem;
}

Json standardization_json(const Standardization& s) {
  Json j;
  j["enabled"] = s.enabled;
  j["y_center"] = s.y_center;
  Json columns = Json::array();
  for (std::size_t k = 0; k < s.kept.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    columns.push_back({{"column", fmt::format("x{}", s.kept[k] + 1)},
                       {"center", s.x_center[i]},
                       {"scale", s.x_scale[i]}});
  }
  j["columns"] = columns;
  Json dropped = Json::array();
  for (Eigen::Index d : s.dropped) dropped.push_back(fmt::format("x{}", d + 1));
  j["dropped"] = dropped;
  return j;
}

Json coefficients_json(const Coefficients& coef) {
  return {{"intercept", coef.intercept}, {"beta", vector_json(coef.beta)}};
}

struct Stopwatch {
  Json entries = Json::object();
  void record(const std::string& stage, double seconds) { entries[stage] = seconds; }
};

void write_timing(const fs::path& dir, const std::string& command, const Stopwatch& watch) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = command;
  j["seconds"] = watch.entries;
  write_json(dir / "timing.json", j);
}

// fit

void write_path_csv(const fs::path& path, const MinimaRegistry& registry, const Standardization& s) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "lambda_index,lambda,q,objective,scale,nnz,l1_norm,zero_weights,origin,intercept";
  for (Eigen::Index j = 0; j < s.original_p; ++j) out << ",b" << j + 1;
  out << '\n';
  for (std::size_t t = 0; t < registry.lambdas.size(); ++t) {
    for (std::size_t q = 0; q < registry.minima[t].size(); ++q) {
      const LocalMinimum& m = registry.minima[t][q];
      const Coefficients original = s.to_original(m.coef);
      out << t << ',' << format_number(registry.lambdas[t]) << ',' << q << ','
          << format_number(m.objective) << ',' << format_number(m.scale) << ','
          << (original.beta.array() != 0).count() << ',' << format_number(original.beta.lpNorm<1>())
          << ',' << zero_weight_count(m) << ',' << to_string(m.origin) << ','
          << format_number(original.intercept);
      for (Eigen::Index j = 0; j < original.beta.size(); ++j) out << ',' << format_number(original.beta[j]);
      out << '\n';
    }
  }
}

int cmd_fit(const fs::path& csv, const fs::path& out_dir, const RunConfig& config) {
  Stopwatch watch;
  auto start = std::chrono::steady_clock::now();
  const Problem problem = prepare(csv, config);
  watch.record("prepare", seconds_since(start));
  start = std::chrono::steady_clock::now();
  PipelineOptions pipeline = config.pipeline_options();
  pipeline.path.parallel = config.threads > 1;
  const MinimaRegistry registry =
      fit_path(problem.data, problem.loss, problem.family, problem.grid, pipeline, config.seed);
  watch.record("fit", seconds_since(start));

  prepare_output(out_dir);
  write_path_csv(out_dir / "path.csv", registry, problem.standardization);
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = "fit";
  j["config"] = config_json(config);
  j["n"] = problem.data.n();
  j["p"] = problem.standardization.original_p;
  j["standardization"] = standardization_json(problem.standardization);
  if (!problem.pilot.is_null()) j["adaptive_pilot"] = problem.pilot;
  j["rho_cutoff"] = problem.loss.rho.cutoff();
  j["dropped_starts"] = registry.dropped_starts;
  Json path = Json::array();
  for (std::size_t t = 0; t < registry.lambdas.size(); ++t) {
    Json minima = Json::array();
    for (const LocalMinimum& m : registry.minima[t]) {
      Json entry = coefficients_json(problem.standardization.to_original(m.coef));
      entry["objective"] = m.objective;
      entry["scale"] = m.scale;
      entry["zero_weights"] = zero_weight_count(m);
      entry["origin"] = to_string(m.origin);
      entry["converged"] = m.converged;
      minima.push_back(entry);
    }
    path.push_back({{"lambda", registry.lambdas[t]}, {"minima", minima}});
  }
  j["path"] = path;
  write_json(out_dir / "fit.json", j);
  write_timing(out_dir, "fit", watch);
  return kExitOk;
}

// cv

void write_curve_csv(const fs::path& path, const CvOutcome& outcome, const Selection& selection) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "lambda,q,metric,e_hat,sd,selected_flag\n";
  const std::string metric = to_string(outcome.metric);
  for (std::size_t t = 0; t < outcome.lambdas.size(); ++t) {
    for (std::size_t q = 0; q < outcome.cells[t].size(); ++q) {
      const CvCell& cell = outcome.cells[t][q];
      const bool selected = t == selection.lambda_index && static_cast<int>(q) == selection.q;
      out << format_number(outcome.lambdas[t]) << ',' << q << ',' << metric << ','
          << format_number(cell.mean) << ',' << format_number(cell.sd) << ',' << (selected ? 1 : 0)
          << '\n';
    }
  }
}

int cmd_cv(const fs::path& csv, const fs::path& out_dir, const RunConfig& config) {
  Stopwatch watch;
  auto start = std::chrono::steady_clock::now();
  const Problem problem = prepare(csv, config);
  watch.record("prepare", seconds_since(start));

  const bool ris = config.engine == "ris";
  CvOptions options = config.cv_options();
  if (ris) options.metric = Metric::kWeightedRmspe;
  PipelineOptions pipeline = options.pipeline;
  if (!ris) pipeline.path.max_minima = 1;
  pipeline.path.parallel = config.threads > 1;

  start = std::chrono::steady_clock::now();
  const MinimaRegistry registry =
      fit_path(problem.data, problem.loss, problem.family, problem.grid, pipeline, config.seed);
  watch.record("full_fit", seconds_since(start));
  start = std::chrono::steady_clock::now();
  const CvOutcome outcome = ris ? ris_cv(registry, problem.data, problem.loss, problem.family, options)
                                : naive_cv(registry, problem.data, problem.loss, problem.family, options);
  watch.record(ris ? "ris_cv" : "naive_cv", seconds_since(start));
  const SelectionRule rule = parse_selection_rule(config.rule);
  const Selection selection = select_lambda(outcome, rule);
  const LocalMinimum& chosen = registry.minima[selection.lambda_index][static_cast<std::size_t>(selection.q)];

  prepare_output(out_dir);
  write_curve_csv(out_dir / "curve.csv", outcome, selection);
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = "cv";
  j["config"] = config_json(config);
  j["engine"] = outcome.engine;
  j["metric"] = to_string(outcome.metric);
  j["rule"] = to_string(rule);
  j["n"] = problem.data.n();
  j["p"] = problem.standardization.original_p;
  j["standardization"] = standardization_json(problem.standardization);
  if (!problem.pilot.is_null()) j["adaptive_pilot"] = problem.pilot;
  Json sel = coefficients_json(problem.standardization.to_original(chosen.coef));
  sel["lambda"] = selection.lambda;
  sel["lambda_index"] = selection.lambda_index;
  sel["q"] = selection.q;
  sel["estimate"] = number_json(selection.estimate);
  sel["sd"] = number_json(selection.sd);
  sel["objective"] = chosen.objective;
  sel["zero_weights"] = zero_weight_count(chosen);
  j["selected"] = sel;
  Json curve = Json::array();
  for (std::size_t t = 0; t < outcome.lambdas.size(); ++t) {
    const int q = outcome.selected_q[t];
    const CvCell& cell = outcome.cells[t][static_cast<std::size_t>(q)];
    curve.push_back({{"lambda", outcome.lambdas[t]},
                     {"q", q},
                     {"e_hat", number_json(cell.mean)},
                     {"sd", number_json(cell.sd)},
                     {"minima", registry.minima[t].size()}});
  }
  j["curve"] = curve;
  j["total_variation"] = number_json(total_variation(outcome.curve()));
  j["folds"] = outcome.folds;
  j["replications"] = outcome.replications;
  j["failed_fold_fits"] = outcome.failed_fold_fits;
  j["matching_fallbacks"] = outcome.matching_fallbacks;
  j["zero_weight_violations"] = outcome.zero_weight_violations;
  j["timing_file"] = "timing.json";
  write_json(out_dir / "cv.json", j);
  write_timing(out_dir, "cv", watch);
  return kExitOk;
}

// simulate

Json rows_json(const std::vector<Eigen::Index>& rows) {
  Json j = Json::array();
  for (Eigen::Index i : rows) j.push_back(i + 1);
  return j;
}

int cmd_simulate(const fs::path& out_dir, const SimulationConfig& config) {
  const SimulatedDataset ds = simulate(config);
  prepare_output(out_dir);
  write_dataset(out_dir / "dataset.csv", ds.dataset());
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = "simulate";
  j["config"] = {{"n", config.n},
                 {"p", config.p},
                 {"errors", to_string(config.error_family)},
                 {"snr", config.snr},
                 {"leverage_fraction", config.leverage_fraction},
                 {"leverage_multiplier", config.leverage_multiplier},
                 {"contamination_fraction", config.contamination_fraction},
                 {"contamination_snr", config.contamination_snr},
                 {"correlation", config.correlation},
                 {"seed", config.seed}};
  j["beta_true"] = vector_json(ds.beta_true);
  j["sparsity"] = ds.sparsity;
  j["true_error_scale"] = ds.true_error_scale;
  j["error_multiplier"] = ds.error_multiplier;
  Json blocks = Json::array();
  for (std::size_t l = 0; l < 3; ++l) {
    Json columns = Json::array();
    for (Eigen::Index c : ds.contamination_columns[l]) columns.push_back(c + 1);
    blocks.push_back({{"signal", config.signal_values[l]},
                      {"rows", rows_json(ds.contaminated_rows[l])},
                      {"columns", columns},
                      {"leverage", ds.contamination_leverage[l]}});
  }
  j["contamination"] = blocks;
  j["leverage_rows"] = rows_json(ds.leverage_rows);
  j["indexing"] = "rows and columns are 1-based";
  write_json(out_dir / "truth.json", j);
  return kExitOk;
}

// pathdemo

std::vector<double> read_curve(const fs::path& path) {
  const Table table = read_csv(path);
  std::size_t column = 1;
  const auto it = std::find(table.header.begin(), table.header.end(), "e_hat");
  if (it != table.header.end()) {
    column = static_cast<std::size_t>(it - table.header.begin());
  } else if (table.header.size() < 2) {
    throw InputError(path.string() + ": expected a value column");
  }
  const auto flag = std::find(table.header.begin(), table.header.end(), "selected_flag");
  const auto q = std::find(table.header.begin(), table.header.end(), "q");
  std::vector<double> values;
  if (flag != table.header.end() && q != table.header.end()) {
    // curve.csv lists every minimum; keep the best one per lambda.
    const auto qi = static_cast<std::size_t>(q - table.header.begin());
    for (const auto& row : table.rows) {
      if (row[qi] == 0) {
        values.push_back(row[column]);
      } else {
        values.back() = std::min(values.back(), row[column]);
      }
    }
  } else {
    for (const auto& row : table.rows) values.push_back(row[column]);
  }
  return values;
}

Json jumps_json(const std::vector<Discontinuity>& jumps) {
  Json j = Json::array();
  for (const auto& d : jumps) {
    j.push_back({{"index", d.index},
                 {"lambda_before", d.lambda_before},
                 {"lambda_after", d.lambda_after},
                 {"jump", d.jump}});
  }
  return j;
}

int cmd_pathdemo(const fs::path& out_dir, const UnivariateScenario& scenario,
                 const PathDemoOptions& options, const std::string& rho_name,
                 const std::optional<fs::path>& curve) {
  const PathReport report = run_path_demo(scenario, options);
  prepare_output(out_dir);
  {
    std::ofstream out(out_dir / "fig_s1.csv");
    if (!out) throw InputError("cannot write fig_s1.csv");
    out << "lambda,series,location,is_global\n";
    for (std::size_t t = 0; t < report.lambdas.size(); ++t) {
      const std::string lambda = format_number(report.lambdas[t]);
      if (!report.enumerated.empty()) {
        for (const auto& m : report.enumerated[t]) {
          out << lambda << ",enumerated," << format_number(m.location) << ','
              << (m.location == report.enumerated_global[t] ? 1 : 0) << '\n';
        }
      }
      out << lambda << ",path_global," << format_number(report.global_trace[t]) << ",1\n";
      for (std::size_t b = 0; b < report.branches.size(); ++b) {
        const double v = report.branches[b][t];
        if (!std::isfinite(v)) continue;
        out << lambda << ",branch_" << b + 1 << ',' << format_number(v) << ','
            << (v == report.global_trace[t] ? 1 : 0) << '\n';
      }
    }
  }
  Json j;
  j["format_version"] = kFormatVersion;
  j["command"] = "pathdemo";
  j["scenario"] = {{"rho", rho_name},
                   {"rho_cutoff", scenario.rho.cutoff()},
                   {"n", scenario.n},
                   {"b", scenario.b},
                   {"beta_c", scenario.beta_c},
                   {"beta_star", scenario.beta_star},
                   {"sigma_c", scenario.sigma_c},
                   {"sigma_star", scenario.sigma_star},
                   {"seed", scenario.seed},
                   {"lambda_max", scenario.lambdas.front()},
                   {"lambda_min", scenario.lambdas.back()},
                   {"grid_size", scenario.lambdas.size()}};
  j["contaminated"] = report.contaminated;
  j["threshold"] = options.rel_threshold;
  j["discontinuities"] = jumps_json(report.global_jumps);
  Json branches = Json::array();
  for (std::size_t b = 0; b < report.branches.size(); ++b) {
    branches.push_back({{"branch", b + 1},
                        {"discontinuities", jumps_json(report.branch_jumps[b])},
                        {"max_deviation_se", number_json(report.branch_deviation_se[b])},
                        {"total_variation", number_json(total_variation(report.branches[b]))}});
  }
  j["branches"] = branches;
  j["global_total_variation"] = number_json(total_variation(report.global_trace));
  if (!report.enumerated.empty()) {
    Json per_lambda = Json::array();
    for (std::size_t t = 0; t < report.lambdas.size(); ++t) {
      Json minima = Json::array();
      for (const auto& m : report.enumerated[t]) {
        minima.push_back({{"location", m.location}, {"objective", m.objective}});
      }
      per_lambda.push_back({{"lambda", report.lambdas[t]}, {"minima", minima}});
    }
    j["enumerated"] = per_lambda;
  }
  if (curve) {
    j["curve"] = {{"file", curve->filename().string()},
                  {"total_variation", number_json(total_variation(read_curve(*curve)))}};
  }
  write_json(out_dir / "report.json", j);
  return kExitOk;
}

void add_run_options(CLI::App& app, RunConfig& c) {
  app.add_option("--loss", c.loss, "Loss: s (PENSE) or m (PENSEM)")->capture_default_str();
  app.add_option("--rho", c.rho, "rho function: bisquare, lqq or hampel")->capture_default_str();
  app.add_option("--delta", c.delta, "Breakdown point; calibrates the rho cutoff")->capture_default_str();
  app.add_option("--scale", c.scale, "Fixed residual scale of the M-loss")->capture_default_str();
  app.add_option("--alpha", c.alpha, "Elastic-net mixing in (0, 1]")->capture_default_str();
  app.add_option("--grid-size", c.grid_size, "Number of lambda values")->capture_default_str();
  app.add_option("--lambda-min-ratio", c.lambda_min_ratio, "Smallest lambda relative to the largest")
      ->capture_default_str();
  app.add_option("--lambdas", c.lambdas, "Explicit lambda grid (overrides the generated one)")->delimiter(',');
  app.add_option("--max-minima", c.max_minima, "Local minima retained per lambda (M)")->capture_default_str();
  app.add_option("--subsets", c.n_subsets, "Random subset starting points")->capture_default_str();
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app.add_flag("--adaptive", c.adaptive, "Adaptive penalty loadings from a pilot fit");
  app.add_option("--adaptive-exponent", c.adaptive_exponent, "Exponent of the adaptive loadings")
      ->capture_default_str();
  app.add_flag("!--no-standardize", c.standardize, "Use the predictors as given");
  app.add_flag("!--no-intercept", c.intercept, "Fit without intercept");
  app.add_option("--threads", c.threads, "OpenMP threads")->capture_default_str();
}

int dispatch(CLI::App& app, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Robust penalized regression with multi-minimum cross-validation", "robcv"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; flags take precedence");

  RunConfig config;
  fs::path data_path, out_dir = ".";

  auto* fit = app.add_subcommand("fit", "Compute the regularization path with up to M minima per lambda");
  fit->add_option("data", data_path, "CSV with columns y, x1..xp")->required();
  fit->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  add_run_options(*fit, config);

  auto* cv = app.add_subcommand("cv", "Select lambda by RIS-CV or naive CV");
  cv->add_option("data", data_path, "CSV with columns y, x1..xp")->required();
  cv->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  add_run_options(*cv, config);
  cv->add_option("--engine", config.engine, "ris or naive")->capture_default_str();
  cv->add_option("--folds", config.folds, "Folds K")->capture_default_str();
  cv->add_option("--replications", config.replications, "Replications R")->capture_default_str();
  cv->add_option("--metric", config.metric, "naive engine metric: tau, rmspe or mape")->capture_default_str();
  cv->add_option("--c-tau", config.c_tau, "tau-size tuning constant")->capture_default_str();
  cv->add_option("--rule", config.rule, "Selection rule: min or one-se")->capture_default_str();

  SimulationConfig sim;
  std::string errors = "gaussian";
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw a contaminated sparse regression dataset");
  simulate_cmd->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  simulate_cmd->add_option("--n", sim.n, "Observations")->capture_default_str();
  simulate_cmd->add_option("--p", sim.p, "Predictors")->capture_default_str();
  simulate_cmd->add_option("--errors", errors, "gaussian, laplace or stable")->capture_default_str();
  simulate_cmd->add_option("--snr", sim.snr, "Signal-to-noise ratio")->capture_default_str();
  simulate_cmd->add_option("--leverage-fraction", sim.leverage_fraction, "Fraction of good leverage points")
      ->capture_default_str();
  simulate_cmd->add_option("--leverage-multiplier", sim.leverage_multiplier, "Leverage inflation")
      ->capture_default_str();
  simulate_cmd->add_option("--contamination", sim.contamination_fraction, "Fraction of contaminated rows")
      ->capture_default_str();
  simulate_cmd->add_option("--correlation", sim.correlation, "AR(1) predictor correlation")
      ->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();

  UnivariateScenario scenario;
  PathDemoOptions demo;
  std::string demo_rho = "bisquare";
  double lambda_from = 0.006, lambda_to = 0.0001;
  int demo_grid = 60;
  std::optional<fs::path> curve;
  auto* pathdemo = app.add_subcommand("pathdemo", "Univariate demonstration of a non-smooth path");
  pathdemo->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  pathdemo->add_option("--rho", demo_rho, "bisquare or lqq (cutoff calibrated to delta = 0.5)")
      ->capture_default_str();
  pathdemo->add_option("--b", scenario.b, "Fraction of rows from the contaminating model")->capture_default_str();
  pathdemo->add_option("--n", scenario.n, "Observations")->capture_default_str();
  pathdemo->add_option("--beta-c", scenario.beta_c, "Slope of the contaminating model")->capture_default_str();
  pathdemo->add_option("--beta-star", scenario.beta_star, "Slope of the main model")->capture_default_str();
  pathdemo->add_option("--sigma-c", scenario.sigma_c, "Noise of the contaminating model")->capture_default_str();
  pathdemo->add_option("--sigma-star", scenario.sigma_star, "Noise of the main model")->capture_default_str();
  pathdemo->add_option("--lambda-max", lambda_from, "Largest lambda")->capture_default_str();
  pathdemo->add_option("--lambda-min", lambda_to, "Smallest lambda")->capture_default_str();
  pathdemo->add_option("--grid-size", demo_grid, "Number of lambda values")->capture_default_str();
  pathdemo->add_option("--threshold", demo.rel_threshold, "Jump threshold relative to the median change")
      ->capture_default_str();
  pathdemo->add_option("--subsets", demo.n_subsets, "Random subset starting points")->capture_default_str();
  pathdemo->add_option("--seed", scenario.seed, "Random seed")->capture_default_str();
  pathdemo->add_option("--curve", curve, "CSV curve whose total variation is reported");
  pathdemo->add_flag("!--no-enumerate", demo.enumerate, "Skip the exhaustive grid search for minima");

  if (const int code = dispatch(app, argc, argv); code != kExitOk || app.get_subcommands().empty()) {
    return code;
  }

  try {
    if (*fit || *cv) {
      config.validate();
      omp_set_num_threads(config.threads);
      return *fit ? cmd_fit(data_path, out_dir, config) : cmd_cv(data_path, out_dir, config);
    }
    if (*simulate_cmd) {
      try {
        sim.error_family = parse_error_family(errors);
        sim.validate();
      } catch (const Error& e) {
        throw InputError(e.what());
      }
      return cmd_simulate(out_dir, sim);
    }
    RhoKind kind;
    try {
      kind = parse_rho_kind(demo_rho);
      const UnivariateScenario calibrated = UnivariateScenario::with_rho(kind);
      scenario.rho = calibrated.rho;
      scenario.lambdas = UnivariateScenario::linear_grid(lambda_from, lambda_to, demo_grid);
      scenario.validate();
    } catch (const Error& e) {
      throw InputError(e.what());
    }
    return cmd_pathdemo(out_dir, scenario, demo, to_string(kind), curve);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_input_error() ? kExitInput : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"robcv"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace robcv::cli
