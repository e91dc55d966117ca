#ifndef EBSHRINK_SIMMETRICS_HPP
#define EBSHRINK_SIMMETRICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ebshrink/core_gauss.hpp"
#include "ebshrink/emfit.hpp"
#include "ebshrink/posterior.hpp"

namespace ebshrink {

/// Simulation settings:
///   S1  effects N(beta, C) when active, sigma2 = 100
///   S2  only the first effect is non-zero, N(beta_s, sigma2), sigma2 = 1
///   S3  S1 with a fraction of every response column missing
///   S4  S3 with n = 300 and covariate rows resampled from a genotype pool
enum class Setting { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

/// Rows in the synthetic genotype pool used by S4 when no external matrix is given.
inline constexpr Index kGenotypePoolRows = 838;

struct SimConfig {
  Setting setting = Setting::S1;
  double rho = 0.0;        ///< exchangeable correlation of C
  double beta_s = 1.0;     ///< signal level
  Index n = 50;
  Index p = 30;
  Index m = 50;
  double tau1 = 0.5;
  double sigma2 = 100.0;
  double missing_frac = 0.0;
  std::uint64_t seed = 1;
  /// S4 only: genotype rows to resample from (p columns).
  std::optional<MatrixXd> external_x;
  /// When set, active effects are drawn from the model's own prior
  /// N(beta, model_eta (X'X)^-1) so that the true hyperparameters are defined.
  std::optional<double> model_eta;
};

/// Setting defaults: p = 30, n = 50, m = 50, tau1 = 0.5; sigma2 = 100 except
/// S2 (1); missing_frac = 0.2 for S3 and S4; n = 300 for S4.
SimConfig default_config(Setting setting, double rho = 0.0, double beta_s = 1.0,
                         std::uint64_t seed = 1);

/// Throws BadConfig when fields are inconsistent.
void validate_config(const SimConfig& config);

struct SimData {
  MatrixXd x;
  ResponsePanel panel;
  MatrixXd true_beta;     ///< p x m; inactive columns are exactly zero
  Mask true_active;       ///< m entries
  VectorXd shared_beta;   ///< prior mean used for active tasks
};

/// Exchangeable correlation matrix: unit diagonal, rho elsewhere.
MatrixXd exchangeable_cov(Index p, double rho);

/// (beta_s, ..., beta_s/2, ..., 0, ...) in thirds of p for S1/S3/S4, beta_s e_1 for S2.
VectorXd shared_mean(const SimConfig& config);

/// 0/1/2 dosages from thresholded latent N(0, C) rows, one minor-allele
/// frequency per column drawn uniformly on [0.05, 0.5].
MatrixXd synthetic_genotype_pool(Index rows, Index p, double rho, std::uint64_t seed);

MatrixXd draw_covariates(const SimConfig& config, std::mt19937_64& rng);
SimData draw_responses(const SimConfig& config, const MatrixXd& x, std::mt19937_64& rng);

/// Covariates then responses from one seeded stream; bit-identical for equal configs.
SimData simulate_setting(const SimConfig& config);

/// True hyperparameters (tau1, shared mean, model_eta, sigma2); needs model_eta.
PriorParams true_params(const SimConfig& config);

/// (1 / pm) sum_t |estimate_t - truth_t|^2
double mse(const MatrixXd& estimates, const MatrixXd& truth);

/// Mann-Whitney AUC, ties counted one half. Throws DegenerateLabels unless
/// both classes are present.
double auc(const VectorXd& scores, const Mask& labels);

struct SimRow {
  Setting setting = Setting::S1;
  double rho = 0.0;
  double beta_s = 0.0;
  Index reps = 0;
  double mse_ols = 0.0;
  double mse_proposed = 0.0;
  double auc = 0.0;
  Index failed = 0;
};

struct SimReport {
  std::vector<SimRow> rows;

  static const char* csv_header();
  std::string to_csv() const;
};

/// Per replication: simulate with a seed derived from (config.seed, rep),
/// fit per-task OLS and the empirical-Bayes model, record both MSEs and the
/// AUC of the activity probabilities. Failed replications are counted and
/// excluded from the means.
SimRow run_replications(const SimConfig& config, Index reps, const FitOptions& options = {});

/// One row per (rho, beta_s) pair, rho-major.
SimReport run_grid(const SimConfig& base, const std::vector<double>& rhos,
                   const std::vector<double>& beta_levels, Index reps,
                   const FitOptions& options = {});

/// What an estimator sees for one Monte-Carlo draw.
struct RiskDraw {
  const Design& design;
  const ResponsePanel& panel;
  const SimData& data;
  const PriorParams& truth;
  Index task;
};

using Estimator = std::function<VectorXd(const RiskDraw&)>;

Estimator ols_estimator();
/// Posterior mean at the true hyperparameters.
Estimator oracle_estimator();
/// Posterior mean at the fitted hyperparameters.
Estimator empirical_bayes_estimator(FitOptions options = {});
/// Returns the simulated effects themselves.
Estimator cheat_estimator();

struct RiskEstimate {
  double risk = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo Bayes risk of an estimator for the first task under loss
/// (b - beta)' delta (b - beta). Covariates are drawn once from config.seed
/// and held fixed; effects, responses and masks are redrawn every replicate.
RiskEstimate mc_bayes_risk(const Estimator& estimator, const SimConfig& config,
                           const MatrixXd& delta, Index reps);
RiskEstimate mc_bayes_risk(const Estimator& estimator, const SimConfig& config, Index reps);

/// Per replicate, |fitted posterior mean - true-parameter posterior mean|_2
/// for the first task. Needs model_eta.
std::vector<double> oracle_distances(const SimConfig& config, Index reps,
                                     const FitOptions& options = {});

}  // namespace ebshrink

#endif
