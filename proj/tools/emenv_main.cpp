#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "emenv/report.hpp"

namespace {

using emenv::EmOptions;
using emenv::Error;
using emenv::ErrorCode;
using nlohmann::json;

struct CommonArgs {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  std::string output;
  std::string format = "json";
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--seed", args->seed, "Master seed; omitted -> drawn from entropy and recorded")
      ->check(CLI::NonNegativeNumber)
      ->each([args](const std::string&) { args->seed_given = true; });
  cmd->add_option("--threads", args->threads, "Worker threads (default: available cores)");
  cmd->add_option("-o,--output", args->output, "Write the report to a file instead of stdout");
  cmd->add_option("--format", args->format, "Output format")
      ->check(CLI::IsMember({"json", "table"}));
}

std::uint64_t resolve_seed(CommonArgs* args) {
  if (!args->seed_given) {
    std::random_device rd;
    args->seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  return args->seed;
}

int resolve_threads(const CommonArgs& args) {
  if (args.threads > 0) return args.threads;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

void emit(const CommonArgs& args, const std::string& text) {
  if (args.output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(args.output);
    if (!out) emenv::raise(ErrorCode::IoError, "cannot write " + args.output);
    out << text;
  }
}

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct DataArgs {
  std::string path;
  std::string predictors;
  std::string responses;
  std::string model = "normal";
  double bernoulli_scale = 1.0;
  double tol = 1e-6;
  int max_iter = 500;
  bool warm_start = false;
};

void add_data_args(CLI::App* cmd, DataArgs* args) {
  cmd->add_option("--data", args->path, "Delimited input file (header row required)")
      ->required();
  cmd->add_option("--predictors", args->predictors, "Comma-separated predictor columns")
      ->required();
  cmd->add_option("--responses", args->responses, "Comma-separated response columns")
      ->required();
  cmd->add_option("--model", args->model, "Predictor model")
      ->check(CLI::IsMember({"normal", "bernoulli"}));
  cmd->add_option("--bernoulli-scale", args->bernoulli_scale,
                  "Support of the two-point predictor is {0, scale}");
  cmd->add_option("--tol", args->tol, "L1 convergence tolerance on beta");
  cmd->add_option("--max-iter", args->max_iter, "Maximum EM iterations");
  cmd->add_flag("--warm-start", args->warm_start,
                "Initialize from complete-case moments when available");
}

emenv::ObservedDataset load_data(const DataArgs& args) {
  const auto predictors = split_names(args.predictors);
  const auto responses = split_names(args.responses);
  if (predictors.empty() || responses.empty()) {
    emenv::raise(ErrorCode::InvalidArgument, "predictor and response lists must be non-empty");
  }
  if (args.model == "bernoulli" && predictors.size() != 1) {
    emenv::raise(ErrorCode::InvalidArgument, "the bernoulli model requires exactly one predictor column");
  }
  return emenv::load_table(args.path, predictors, responses);
}

EmOptions make_options(const DataArgs& args) {
  EmOptions opts;
  opts.tol = args.tol;
  opts.max_iter = args.max_iter;
  opts.warm_start = args.warm_start;
  if (args.model == "bernoulli") {
    opts.model.family = emenv::PredictorFamily::TwoPoint;
    opts.model.scale = args.bernoulli_scale;
  }
  return opts;
}

json report_header(const std::string& command, const CommonArgs& common, int threads) {
  return json{{"schema", emenv::kReportSchema},
              {"command", command},
              {"seed", common.seed},
              {"threads", threads}};
}

// --- fit ---

int cmd_fit(const DataArgs& data_args, CommonArgs& common, const std::string& u_arg,
            const std::string& select_method, int select_reps, double threshold,
            const std::string& estimator, int boot_reps) {
  const auto ds = load_data(data_args);
  EmOptions opts = make_options(data_args);
  const std::uint64_t seed = resolve_seed(&common);
  const int threads = resolve_threads(common);

  json doc = report_header("fit", common, threads);

  if (u_arg == "auto") {
    emenv::SelectionReport report;
    if (select_method == "bootstrap") {
      report = emenv::select_u_bootstrap(ds, opts, select_reps, threshold, seed, threads);
    } else {
      report = emenv::select_u_bic(ds, opts, threads);
    }
    opts.u = report.chosen_u;
    doc["selection"] = emenv::selection_to_json(report);
  } else {
    try {
      std::size_t pos = 0;
      opts.u = std::stoi(u_arg, &pos);
      if (pos != u_arg.size()) throw std::invalid_argument(u_arg);
    } catch (const std::exception&) {
      emenv::raise(ErrorCode::InvalidArgument, "--u must be an integer or 'auto'");
    }
  }

  emenv::EstimatorKind kind = emenv::EstimatorKind::EmEnvelope;
  if (estimator == "em-standard") kind = emenv::EstimatorKind::EmStandard;
  if (estimator == "cc-envelope") kind = emenv::EstimatorKind::CompleteCaseEnvelope;
  if (estimator == "cc-standard") kind = emenv::EstimatorKind::CompleteCaseStandard;

  const emenv::EnvelopeFit fit = emenv::fit_estimator(ds, opts, kind);
  doc["estimator"] = estimator;
  doc["fit"] = emenv::fit_to_json(fit);
  if (boot_reps > 0) {
    doc["bootstrap"] =
        emenv::bootstrap_to_json(emenv::bootstrap_se(ds, opts, kind, boot_reps, seed, threads));
  }

  if (common.format == "table") {
    std::string text = "estimator: " + estimator + (fit.u == ds.r() ? " [standard MLE (u=r)]" : "") +
                       "\nu: " + std::to_string(fit.u) +
                       "\niterations: " + std::to_string(fit.iterations) +
                       "\nconverged: " + (fit.converged ? "yes" : "no") + "\nbeta:\n";
    for (int i = 0; i < fit.beta.rows(); ++i) {
      for (int j = 0; j < fit.beta.cols(); ++j) {
        text += (j ? "\t" : "") + std::to_string(fit.beta(i, j));
      }
      text += "\n";
    }
    emit(common, text);
  } else {
    emit(common, emenv::dump_report(doc));
  }
  return 0;
}

// --- select ---

int cmd_select(const DataArgs& data_args, CommonArgs& common, const std::string& method,
               int reps, double threshold) {
  const auto ds = load_data(data_args);
  const EmOptions opts = make_options(data_args);
  const std::uint64_t seed = resolve_seed(&common);
  const int threads = resolve_threads(common);

  emenv::SelectionReport report;
  if (method == "bootstrap") {
    report = emenv::select_u_bootstrap(ds, opts, reps, threshold, seed, threads);
  } else {
    report = emenv::select_u_bic(ds, opts, threads);
  }

  json doc = report_header("select", common, threads);
  doc["selection"] = emenv::selection_to_json(report);
  if (common.format == "table") {
    std::string text = "method: " + report.method +
                       "\nchosen_u: " + std::to_string(report.chosen_u) + "\n";
    emit(common, text);
  } else {
    emit(common, emenv::dump_report(doc));
  }
  return 0;
}

// --- simulate ---

int cmd_simulate(emenv::ScenarioSpec spec, CommonArgs& common, bool spec_from_name) {
  spec.seed = resolve_seed(&common);
  const int threads = resolve_threads(common);

  const emenv::MseSummary summary = emenv::run_scenario(spec, threads);

  json doc = report_header("simulate", common, threads);
  doc["scenario"] = json{{"n", spec.n},
                         {"r", spec.r},
                         {"p", spec.p},
                         {"u", spec.u},
                         {"reps", spec.reps},
                         {"omega_scale", spec.omega_scale},
                         {"omega0_scale", spec.omega0_scale},
                         {"from_preset", spec_from_name},
                         {"index_remap", "mechanism indices taken modulo (p, r)"}};
  doc["summary"] = emenv::summary_to_json(summary);
  doc["table"] = emenv::format_mse_table(summary);

  if (common.format == "table") {
    emit(common, emenv::format_mse_table(summary));
  } else {
    emit(common, emenv::dump_report(doc));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Envelope estimation for multivariate regression with data missing at random"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit an envelope or standard estimator");
  DataArgs fit_data;
  CommonArgs fit_common;
  std::string u_arg = "auto";
  std::string fit_select_method = "bicq";
  std::string estimator = "em-envelope";
  int fit_select_reps = 50;
  double fit_threshold = 0.95;
  int boot_reps = 0;
  add_data_args(fit, &fit_data);
  add_common(fit, &fit_common);
  fit->add_option("--u", u_arg, "Envelope dimension, or 'auto' to select");
  fit->add_option("--select-method", fit_select_method, "Selection used when --u auto")
      ->check(CLI::IsMember({"bicq", "bootstrap"}));
  fit->add_option("--select-reps", fit_select_reps, "Bootstrap resamples for selection");
  fit->add_option("--select-threshold", fit_threshold, "Mean q^2 threshold");
  fit->add_option("--estimator", estimator, "Estimator to fit")
      ->check(CLI::IsMember({"em-envelope", "em-standard", "cc-envelope", "cc-standard"}));
  fit->add_option("--bootstrap-reps", boot_reps,
                  "Bootstrap replicates for standard errors (0 = skip)");

  // select
  auto* select = app.add_subcommand("select", "Choose the envelope dimension");
  DataArgs select_data;
  CommonArgs select_common;
  std::string select_method = "bicq";
  int select_reps = 50;
  double select_threshold = 0.95;
  add_data_args(select, &select_data);
  add_common(select, &select_common);
  select->add_option("--method", select_method, "Selection method")
      ->check(CLI::IsMember({"bicq", "bootstrap"}));
  select->add_option("--reps", select_reps, "Bootstrap resamples");
  select->add_option("--threshold", select_threshold, "Mean q^2 threshold");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run an estimator-comparison study");
  CommonArgs sim_common;
  std::string scenario_name;
  emenv::ScenarioSpec custom;
  int sim_reps = -1;
  std::string error_family = "normal";
  std::string predictor_family = "normal";
  std::string u_selection = "fixed";
  add_common(simulate, &sim_common);
  simulate->add_option("--scenario", scenario_name,
                       "Preset: " + [] {
                         std::string s;
                         for (const auto& n : emenv::scenario_names()) s += n + " ";
                         return s;
                       }());
  simulate->add_option("--n", custom.n, "Sample size per replicate");
  simulate->add_option("--r", custom.r, "Number of responses");
  simulate->add_option("--p", custom.p, "Number of predictors");
  simulate->add_option("--u", custom.u, "True envelope dimension");
  simulate->add_option("--reps", sim_reps, "Replicates");
  simulate->add_option("--omega", custom.omega_scale, "Material error scale");
  simulate->add_option("--omega0", custom.omega0_scale, "Immaterial error scale");
  simulate->add_option("--error-family", error_family, "Error distribution")
      ->check(CLI::IsMember({"normal", "t", "uniform", "laplace"}));
  simulate->add_option("--predictor-family", predictor_family, "Predictor distribution")
      ->check(CLI::IsMember({"normal", "two-point", "t"}));
  simulate->add_option("--target-missing-x", custom.target_missing_x,
                       "Calibrated marginal missing rate per predictor");
  simulate->add_option("--target-missing-y", custom.target_missing_y,
                       "Calibrated marginal missing rate per response");
  simulate->add_option("--u-selection", u_selection, "Envelope dimension per replicate")
      ->check(CLI::IsMember({"fixed", "bicq", "bootstrap"}));
  simulate->add_option("--bootstrap-b", custom.bootstrap_b,
                       "Resamples for bootstrap dimension selection");
  simulate->add_option("--tol", custom.tol, "EM tolerance");
  simulate->add_option("--max-iter", custom.max_iter, "EM iteration cap");

  try {
    app.parse(argc, argv);

    if (fit->parsed()) {
      return cmd_fit(fit_data, fit_common, u_arg, fit_select_method, fit_select_reps,
                     fit_threshold, estimator, boot_reps);
    }
    if (select->parsed()) {
      return cmd_select(select_data, select_common, select_method, select_reps,
                        select_threshold);
    }
    if (simulate->parsed()) {
      emenv::ScenarioSpec spec = custom;
      const bool from_name = !scenario_name.empty();
      if (from_name) {
        auto preset = emenv::scenario_by_name(scenario_name);
        if (!preset) {
          emenv::raise(ErrorCode::InvalidArgument, "unknown scenario " + scenario_name);
        }
        spec = *preset;
        // Explicit flags override preset fields.
        for (const std::string flag :
             {"--n", "--r", "--p", "--u", "--omega", "--omega0", "--target-missing-x",
              "--target-missing-y", "--bootstrap-b", "--tol", "--max-iter"}) {
          if (simulate->count(flag) == 0) continue;
          if (flag == "--n") spec.n = custom.n;
          else if (flag == "--r") spec.r = custom.r;
          else if (flag == "--p") spec.p = custom.p;
          else if (flag == "--u") spec.u = custom.u;
          else if (flag == "--omega") spec.omega_scale = custom.omega_scale;
          else if (flag == "--omega0") spec.omega0_scale = custom.omega0_scale;
          else if (flag == "--target-missing-x") spec.target_missing_x = custom.target_missing_x;
          else if (flag == "--target-missing-y") spec.target_missing_y = custom.target_missing_y;
          else if (flag == "--bootstrap-b") spec.bootstrap_b = custom.bootstrap_b;
          else if (flag == "--tol") spec.tol = custom.tol;
          else if (flag == "--max-iter") spec.max_iter = custom.max_iter;
        }
      } else {
        if (simulate->count("--error-family")) {
          if (error_family == "t") spec.error_family = emenv::ErrorFamily::StudentT5;
          else if (error_family == "uniform") spec.error_family = emenv::ErrorFamily::Uniform;
          else if (error_family == "laplace") spec.error_family = emenv::ErrorFamily::Laplace;
        }
        if (simulate->count("--predictor-family")) {
          if (predictor_family == "two-point")
            spec.predictor_family = emenv::PredictorGenFamily::TwoPoint;
          else if (predictor_family == "t")
            spec.predictor_family = emenv::PredictorGenFamily::StudentT5;
        }
      }
      if (sim_reps > 0) spec.reps = sim_reps;
      if (simulate->count("--u-selection")) {
        if (u_selection == "bicq") spec.u_selection = emenv::ScenarioSpec::USelection::BicQ;
        else if (u_selection == "bootstrap")
          spec.u_selection = emenv::ScenarioSpec::USelection::Bootstrap;
      }
      return cmd_simulate(spec, sim_common, from_name);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return emenv::error_exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
