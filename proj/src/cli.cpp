#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ebshrink/detail/format.hpp"
#include "ebshrink/error.hpp"
#include "ebshrink/iocli.hpp"
#include "ebshrink/simmetrics.hpp"

namespace ebshrink {

namespace {

struct FitArgs {
  std::string x_path, y_path, out_path, posterior_tsv;
  double tol = 1e-8;
  int max_iter = 1000;
};

struct PredictArgs {
  std::string x_path, fit_path, out_path;
};

struct SimulateArgs {
  int setting = 1;
  std::vector<double> rho{0.0};
  std::vector<double> beta_s{1.0};
  Index reps = 100;
  std::uint64_t seed = 1;
  std::string out_path, x_path;
  std::optional<Index> n, p, m;
  std::optional<double> tau1, sigma2, missing_frac;
  double tol = 1e-8;
  int max_iter = 1000;
};

struct CvArgs {
  std::string x_path, y_path, out_path;
  Index folds = 10;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  int max_iter = 1000;
};

struct ScreenArgs {
  std::string z_path, out_path;
  double alpha = 1e-6;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << text;
}

// Covariates and responses must describe the same samples in the same order.
void check_rows_match(const MatrixFile& x, const MatrixFile& y) {
  if (x.values.rows() != y.values.rows()) {
    throw Error(ErrorKind::BadShape, "covariate and response files have different row counts");
  }
  if (!x.row_ids.empty() && !y.row_ids.empty() && x.row_ids != y.row_ids) {
    throw Error(ErrorKind::BadShape, "covariate and response row ids differ");
  }
}

ResponsePanel panel_from(const MatrixFile& y) {
  return make_panel(y.values, MaskMatrix(!y.na_mask), y.col_ids);
}

int run_fit(const FitArgs& args) {
  const MatrixFile x = read_matrix_tsv(args.x_path, false);
  const MatrixFile y = read_matrix_tsv(args.y_path, true);
  check_rows_match(x, y);
  const Design design(x.values);
  FitOptions options;
  options.tol = args.tol;
  options.max_iter = args.max_iter;
  const FitResult result = fit(design, panel_from(y), options);
  write_fit_json(args.out_path, result);
  if (!args.posterior_tsv.empty()) {
    MatrixFile table;
    table.col_ids = {"h", "log_bf", "log_odds"};
    table.row_ids = result.tissue_names;
    table.values.resize(static_cast<Index>(result.posteriors.size()), 3);
    for (std::size_t t = 0; t < result.posteriors.size(); ++t) {
      const auto& post = result.posteriors[t];
      table.values.row(static_cast<Index>(t)) << post.h, post.log_bf, post.log_odds;
    }
    write_matrix_tsv(args.posterior_tsv, table);
  }
  if (!result.converged) {
    std::cerr << "warning: EM stopped after " << result.iterations << " iterations without converging\n";
  }
  return 0;
}

int run_predict(const PredictArgs& args) {
  const MatrixFile x = read_matrix_tsv(args.x_path, false);
  const FitResult result = read_fit_json(args.fit_path);
  MatrixFile out;
  out.values = predict(x.values, result);
  out.row_ids = x.row_ids;
  out.col_ids = result.tissue_names;
  write_matrix_tsv(args.out_path, out);
  return 0;
}

int run_simulate(const SimulateArgs& args) {
  SimConfig config = default_config(static_cast<Setting>(args.setting), 0.0, 1.0, args.seed);
  if (args.n) config.n = *args.n;
  if (args.p) config.p = *args.p;
  if (args.m) config.m = *args.m;
  if (args.tau1) config.tau1 = *args.tau1;
  if (args.sigma2) config.sigma2 = *args.sigma2;
  if (args.missing_frac) config.missing_frac = *args.missing_frac;
  if (!args.x_path.empty()) {
    config.external_x = read_matrix_tsv(args.x_path, false).values;
    config.p = config.external_x->cols();
  }
  FitOptions options;
  options.tol = args.tol;
  options.max_iter = args.max_iter;
  const SimReport report = run_grid(config, args.rho, args.beta_s, args.reps, options);
  write_text(args.out_path, report.to_csv());
  return 0;
}

int run_cv(const CvArgs& args) {
  const MatrixFile x = read_matrix_tsv(args.x_path, false);
  const MatrixFile y = read_matrix_tsv(args.y_path, true);
  check_rows_match(x, y);
  const Design design(x.values);
  FitOptions options;
  options.tol = args.tol;
  options.max_iter = args.max_iter;
  const CvReport report = kfold_cv(design, panel_from(y), args.folds, args.seed, options);
  write_text(args.out_path, report.to_csv());
  return 0;
}

int run_screen(const ScreenArgs& args) {
  const MatrixFile z = read_matrix_tsv(args.z_path, false);
  std::string out = "#id\tz\tp_value\n";
  for (Index r = 0; r < z.values.rows(); ++r) {
    const StoufferResult combined = stouffer_combine(z.values.row(r).transpose());
    if (!(combined.p_value < args.alpha)) continue;
    const std::string id = z.row_ids.empty() ? std::to_string(r + 1) : z.row_ids[static_cast<std::size_t>(r)];
    out += id + "\t" + detail::format_real(combined.z) + "\t" + detail::format_real(combined.p_value) + "\n";
  }
  write_text(args.out_path, out);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Empirical-Bayes multi-tissue regression with a spike-and-Gaussian mixture prior"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "estimate prior hyperparameters and per-tissue posteriors");
  fit_cmd->add_option("--x", fit_args.x_path, "covariate matrix (TSV)")->required();
  fit_cmd->add_option("--y", fit_args.y_path, "response matrix (TSV, NA = missing)")->required();
  fit_cmd->add_option("--out", fit_args.out_path, "fit report (JSON)")->required();
  fit_cmd->add_option("--tol", fit_args.tol, "relative log-likelihood tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-iter", fit_args.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--posterior-tsv", fit_args.posterior_tsv, "per-tissue h, log BF and log odds (TSV)");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "predict responses from a fit report");
  predict_cmd->add_option("--x", predict_args.x_path, "new covariate matrix (TSV)")->required();
  predict_cmd->add_option("--fit", predict_args.fit_path, "fit report (JSON)")->required();
  predict_cmd->add_option("--out", predict_args.out_path, "predictions (TSV)")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "run replicated simulation settings");
  sim_cmd->add_option("--setting", sim_args.setting, "simulation setting")->check(CLI::Range(1, 4));
  sim_cmd->add_option("--rho", sim_args.rho, "correlation level(s)")->delimiter(',');
  sim_cmd->add_option("--beta-s", sim_args.beta_s, "signal level(s)")->delimiter(',');
  sim_cmd->add_option("--reps", sim_args.reps, "replications")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_args.seed, "base seed");
  sim_cmd->add_option("--out", sim_args.out_path, "report (CSV)")->required();
  sim_cmd->add_option("--x", sim_args.x_path, "external genotype pool for setting 4 (TSV)");
  sim_cmd->add_option("--n", sim_args.n, "samples");
  sim_cmd->add_option("--p", sim_args.p, "covariates");
  sim_cmd->add_option("--m", sim_args.m, "tissues");
  sim_cmd->add_option("--tau1", sim_args.tau1, "activity probability");
  sim_cmd->add_option("--sigma2", sim_args.sigma2, "error variance");
  sim_cmd->add_option("--missing-frac", sim_args.missing_frac, "missing fraction per column");
  sim_cmd->add_option("--tol", sim_args.tol, "EM tolerance")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--max-iter", sim_args.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);

  CvArgs cv_args;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validated prediction error");
  cv_cmd->add_option("--x", cv_args.x_path, "covariate matrix (TSV)")->required();
  cv_cmd->add_option("--y", cv_args.y_path, "response matrix (TSV, NA = missing)")->required();
  cv_cmd->add_option("--folds", cv_args.folds, "number of folds");
  cv_cmd->add_option("--seed", cv_args.seed, "fold assignment seed");
  cv_cmd->add_option("--out", cv_args.out_path, "report (CSV)")->required();
  cv_cmd->add_option("--tol", cv_args.tol, "EM tolerance")->check(CLI::PositiveNumber);
  cv_cmd->add_option("--max-iter", cv_args.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);

  ScreenArgs screen_args;
  auto* screen_cmd = app.add_subcommand("screen", "Stouffer-combine z-scores per row and threshold");
  screen_cmd->add_option("--z", screen_args.z_path, "z-score matrix (TSV, rows = SNP-gene pairs)")->required();
  screen_cmd->add_option("--alpha", screen_args.alpha, "p-value threshold");
  screen_cmd->add_option("--out", screen_args.out_path, "kept rows (TSV)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit_args);
    if (predict_cmd->parsed()) return run_predict(predict_args);
    if (sim_cmd->parsed()) return run_simulate(sim_args);
    if (cv_cmd->parsed()) return run_cv(cv_args);
    if (screen_cmd->parsed()) return run_screen(screen_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ebshrink
