#include "ebshrink/simmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "ebshrink/detail/format.hpp"
#include "ebshrink/error.hpp"
#include "ebshrink/parallel.hpp"

namespace ebshrink {

namespace {

// Draws one N(0, C) vector for the exchangeable C via a shared factor.
VectorXd draw_exchangeable(Index p, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double common = normal(rng);
  const double shared = std::sqrt(rho);
  const double own = std::sqrt(1.0 - rho);
  VectorXd out(p);
  for (Index j = 0; j < p; ++j) out(j) = shared * common + own * normal(rng);
  return out;
}

bool uses_missing(const SimConfig& config) { return config.missing_frac > 0.0; }

Index missing_per_column(const SimConfig& config) {
  return static_cast<Index>(std::lround(config.missing_frac * static_cast<double>(config.n)));
}

}  // namespace

SimConfig default_config(Setting setting, double rho, double beta_s, std::uint64_t seed) {
  SimConfig config;
  config.setting = setting;
  config.rho = rho;
  config.beta_s = beta_s;
  config.seed = seed;
  switch (setting) {
    case Setting::S1:
      break;
    case Setting::S2:
      config.sigma2 = 1.0;
      break;
    case Setting::S3:
      config.missing_frac = 0.2;
      break;
    case Setting::S4:
      config.n = 300;
      config.missing_frac = 0.2;
      break;
  }
  return config;
}

void validate_config(const SimConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::BadConfig, what); };
  const int s = static_cast<int>(c.setting);
  if (s < 1 || s > 4) fail("setting must be 1..4");
  if (c.p < 1) fail("p must be at least 1");
  if (c.n <= c.p) fail("n must exceed p");
  if (c.m < 1) fail("m must be at least 1");
  if (!(c.rho >= 0.0 && c.rho < 1.0)) fail("rho must lie in [0, 1)");
  if (!std::isfinite(c.beta_s)) fail("beta_s must be finite");
  if (!(c.tau1 >= 0.0 && c.tau1 <= 1.0)) fail("tau1 must lie in [0, 1]");
  if (!(c.sigma2 > 0.0) || !std::isfinite(c.sigma2)) fail("sigma2 must be positive");
  if (!(c.missing_frac >= 0.0 && c.missing_frac < 1.0)) fail("missing_frac must lie in [0, 1)");
  if (c.n - missing_per_column(c) < c.p + 1) fail("too few observed responses per column");
  if (c.external_x) {
    if (c.setting != Setting::S4) fail("external covariates are only used by setting 4");
    if (c.external_x->cols() != c.p) fail("external covariates must have p columns");
    if (c.external_x->rows() < 1 || !c.external_x->allFinite()) {
      fail("external covariates must be a non-empty finite matrix");
    }
  }
  if (c.model_eta && !(*c.model_eta > 0.0 && std::isfinite(*c.model_eta))) {
    fail("model_eta must be positive");
  }
}

MatrixXd exchangeable_cov(Index p, double rho) {
  MatrixXd c = MatrixXd::Constant(p, p, rho);
  c.diagonal().setOnes();
  return c;
}

VectorXd shared_mean(const SimConfig& config) {
  VectorXd beta = VectorXd::Zero(config.p);
  if (config.setting == Setting::S2) {
    beta(0) = config.beta_s;
    return beta;
  }
  const Index third = config.p / 3;
  for (Index j = 0; j < config.p; ++j) {
    if (j < third) {
      beta(j) = config.beta_s;
    } else if (j < 2 * third) {
      beta(j) = config.beta_s / 2.0;
    }
  }
  return beta;
}

MatrixXd synthetic_genotype_pool(Index rows, Index p, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> maf_dist(0.05, 0.5);
  const boost::math::normal_distribution<double> std_normal;
  // Hardy-Weinberg: P(2) = f^2, P(>= 1) = 1 - (1 - f)^2 on the latent scale.
  VectorXd cut_one(p), cut_two(p);
  for (Index j = 0; j < p; ++j) {
    const double f = maf_dist(rng);
    cut_one(j) = boost::math::quantile(std_normal, (1.0 - f) * (1.0 - f));
    cut_two(j) = boost::math::quantile(std_normal, 1.0 - f * f);
  }
  MatrixXd pool(rows, p);
  for (Index i = 0; i < rows; ++i) {
    const VectorXd latent = draw_exchangeable(p, rho, rng);
    for (Index j = 0; j < p; ++j) {
      pool(i, j) = latent(j) > cut_two(j) ? 2.0 : (latent(j) > cut_one(j) ? 1.0 : 0.0);
    }
  }
  return pool;
}

MatrixXd draw_covariates(const SimConfig& config, std::mt19937_64& rng) {
  validate_config(config);
  MatrixXd x(config.n, config.p);
  if (config.setting != Setting::S4) {
    for (Index i = 0; i < config.n; ++i) x.row(i) = draw_exchangeable(config.p, config.rho, rng).transpose();
    return x;
  }
  const MatrixXd pool = config.external_x
                            ? *config.external_x
                            : synthetic_genotype_pool(kGenotypePoolRows, config.p, config.rho, rng());
  std::uniform_int_distribution<Index> pick(0, pool.rows() - 1);
  for (Index i = 0; i < config.n; ++i) x.row(i) = pool.row(pick(rng));
  return x;
}

SimData draw_responses(const SimConfig& config, const MatrixXd& x, std::mt19937_64& rng) {
  validate_config(config);
  if (x.rows() != config.n || x.cols() != config.p) {
    throw Error(ErrorKind::BadShape, "covariate matrix does not match the configuration");
  }
  const Index n = config.n;
  const Index p = config.p;
  const Index m = config.m;

  SimData data;
  data.x = x;
  data.shared_beta = shared_mean(config);
  data.true_beta = MatrixXd::Zero(p, m);
  data.true_active = Mask::Constant(m, false);

  // Model-prior draws need (X'X)^-1/2; only factor when asked to.
  Eigen::LLT<MatrixXd> gram_factor;
  if (config.model_eta) gram_factor = factor_spd(x.transpose() * x, "Gram matrix X'X");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd y(n, m);
  const double noise_sd = std::sqrt(config.sigma2);
  for (Index t = 0; t < m; ++t) {
    const bool active = unit(rng) < config.tau1;
    data.true_active(t) = active;
    if (active) {
      if (config.model_eta) {
        VectorXd z(p);
        for (Index j = 0; j < p; ++j) z(j) = normal(rng);
        data.true_beta.col(t) =
            data.shared_beta + std::sqrt(*config.model_eta) * gram_factor.matrixU().solve(z);
      } else if (config.setting == Setting::S2) {
        data.true_beta(0, t) = config.beta_s + noise_sd * normal(rng);
      } else {
        data.true_beta.col(t) = data.shared_beta + draw_exchangeable(p, config.rho, rng);
      }
    }
    VectorXd noise(n);
    for (Index i = 0; i < n; ++i) noise(i) = noise_sd * normal(rng);
    y.col(t) = x * data.true_beta.col(t) + noise;
  }

  MaskMatrix mask = MaskMatrix::Constant(n, m, true);
  if (uses_missing(config)) {
    const Index drop = missing_per_column(config);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    for (Index t = 0; t < m; ++t) {
      std::iota(rows.begin(), rows.end(), Index{0});
      // Partial Fisher-Yates: the first `drop` slots form a uniform subset.
      for (Index i = 0; i < drop; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
        mask(rows[static_cast<std::size_t>(i)], t) = false;
      }
      for (Index i = 0; i < n; ++i) {
        if (!mask(i, t)) y(i, t) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  data.panel = make_panel(std::move(y), std::move(mask));
  return data;
}

SimData simulate_setting(const SimConfig& config) {
  validate_config(config);
  std::mt19937_64 rng(config.seed);
  const MatrixXd x = draw_covariates(config, rng);
  return draw_responses(config, x, rng);
}

PriorParams true_params(const SimConfig& config) {
  if (!config.model_eta) {
    throw Error(ErrorKind::BadConfig, "true hyperparameters need model_eta");
  }
  PriorParams truth;
  truth.tau1 = config.tau1;
  truth.beta = shared_mean(config);
  truth.eta = *config.model_eta;
  truth.sigma2 = config.sigma2;
  return truth;
}

double mse(const MatrixXd& estimates, const MatrixXd& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols() || truth.size() == 0) {
    throw Error(ErrorKind::BadShape, "estimate and truth shapes differ");
  }
  return (estimates - truth).squaredNorm() / static_cast<double>(truth.size());
}

double auc(const VectorXd& scores, const Mask& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::BadShape, "scores and labels differ in length");
  const Index total = scores.size();
  const Index n_pos = labels.count();
  const Index n_neg = total - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::DegenerateLabels, "AUC needs both positive and negative labels");
  }
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });
  // Midranks: tied scores share the average of their positions.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(order[k])) pos_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

const char* SimReport::csv_header() {
  return "setting,rho,beta_s,reps,mse_ols,mse_proposed,auc,failed";
}

std::string SimReport::to_csv() const {
  using detail::format_real;
  std::string out = std::string(csv_header()) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(static_cast<int>(r.setting)) + "," + format_real(r.rho) + "," +
           format_real(r.beta_s) + "," + std::to_string(r.reps) + "," + format_real(r.mse_ols) +
           "," + format_real(r.mse_proposed) + "," + format_real(r.auc) + "," +
           std::to_string(r.failed) + "\n";
  }
  return out;
}

namespace {

struct RepOutcome {
  bool ok = false;
  double mse_ols = 0.0;
  double mse_proposed = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
};

RepOutcome run_one(const SimConfig& config, const FitOptions& options) {
  RepOutcome out;
  try {
    const SimData data = simulate_setting(config);
    const Design design(data.x);
    const Index m = data.panel.m();
    MatrixXd ols_est(config.p, m);
    for (Index t = 0; t < m; ++t) {
      ols_est.col(t) = ols(design, data.panel.column(t), data.panel.column_mask(t));
    }
    const FitResult result = fit(design, data.panel, options);
    MatrixXd eb_est(config.p, m);
    VectorXd scores(m);
    for (Index t = 0; t < m; ++t) {
      eb_est.col(t) = result.posteriors[static_cast<std::size_t>(t)].post_mean;
      scores(t) = result.posteriors[static_cast<std::size_t>(t)].h;
    }
    out.mse_ols = mse(ols_est, data.true_beta);
    out.mse_proposed = mse(eb_est, data.true_beta);
    const Index n_pos = data.true_active.count();
    if (n_pos > 0 && n_pos < m) out.auc = auc(scores, data.true_active);
    out.ok = true;
  } catch (const Error&) {
    out.ok = false;
  }
  return out;
}

}  // namespace

SimRow run_replications(const SimConfig& config, Index reps, const FitOptions& options) {
  validate_config(config);
  if (reps < 1) throw Error(ErrorKind::BadConfig, "reps must be at least 1");
  SimConfig base = config;
  // S4 resamples every replicate from one fixed pool, as with a real genotype panel.
  if (base.setting == Setting::S4 && !base.external_x) {
    base.external_x = synthetic_genotype_pool(kGenotypePoolRows, base.p, base.rho,
                                              derive_seed(base.seed, 0xC0FFEE));
  }
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
  parallel_for(outcomes.size(), [&](std::size_t r) {
    SimConfig rep_config = base;
    rep_config.seed = derive_seed(base.seed, r);
    outcomes[r] = run_one(rep_config, options);
  });

  SimRow row;
  row.setting = config.setting;
  row.rho = config.rho;
  row.beta_s = config.beta_s;
  row.reps = reps;
  double sum_ols = 0.0, sum_eb = 0.0, sum_auc = 0.0;
  Index ok = 0, with_auc = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++row.failed;
      continue;
    }
    ++ok;
    sum_ols += o.mse_ols;
    sum_eb += o.mse_proposed;
    if (!std::isnan(o.auc)) {
      sum_auc += o.auc;
      ++with_auc;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.mse_ols = ok > 0 ? sum_ols / static_cast<double>(ok) : nan;
  row.mse_proposed = ok > 0 ? sum_eb / static_cast<double>(ok) : nan;
  row.auc = with_auc > 0 ? sum_auc / static_cast<double>(with_auc) : nan;
  return row;
}

SimReport run_grid(const SimConfig& base, const std::vector<double>& rhos,
                   const std::vector<double>& beta_levels, Index reps, const FitOptions& options) {
  SimReport report;
  for (double rho : rhos) {
    for (double beta_s : beta_levels) {
      SimConfig config = base;
      config.rho = rho;
      config.beta_s = beta_s;
      report.rows.push_back(run_replications(config, reps, options));
    }
  }
  return report;
}

Estimator ols_estimator() {
  return [](const RiskDraw& d) {
    return ols(d.design, d.panel.column(d.task), d.panel.column_mask(d.task));
  };
}

Estimator oracle_estimator() {
  return [](const RiskDraw& d) {
    return tissue_posterior(d.design, d.panel.column(d.task), d.panel.column_mask(d.task), d.truth)
        .post_mean;
  };
}

Estimator empirical_bayes_estimator(FitOptions options) {
  return [options](const RiskDraw& d) {
    const FitResult result = fit(d.design, d.panel, options);
    return result.posteriors[static_cast<std::size_t>(d.task)].post_mean;
  };
}

Estimator cheat_estimator() {
  return [](const RiskDraw& d) { return VectorXd(d.data.true_beta.col(d.task)); };
}

RiskEstimate mc_bayes_risk(const Estimator& estimator, const SimConfig& config,
                           const MatrixXd& delta, Index reps) {
  validate_config(config);
  if (reps < 2) throw Error(ErrorKind::BadConfig, "reps must be at least 2");
  if (delta.rows() != config.p || delta.cols() != config.p) {
    throw Error(ErrorKind::BadShape, "loss matrix must be p x p");
  }
  factor_spd(delta, "loss matrix");

  std::mt19937_64 x_rng(derive_seed(config.seed, 0));
  const MatrixXd x = draw_covariates(config, x_rng);
  const Design design(x);
  PriorParams truth;
  if (config.model_eta) {
    truth = true_params(config);
  } else {
    truth.tau1 = config.tau1;
    truth.beta = shared_mean(config);
    truth.eta = std::numeric_limits<double>::quiet_NaN();
    truth.sigma2 = config.sigma2;
  }

  std::vector<double> losses(static_cast<std::size_t>(reps));
  parallel_for(losses.size(), [&](std::size_t r) {
    std::mt19937_64 rng(derive_seed(config.seed, r + 1));
    const SimData data = draw_responses(config, x, rng);
    const RiskDraw draw{design, data.panel, data, truth, 0};
    const VectorXd diff = estimator(draw) - data.true_beta.col(0);
    losses[r] = diff.dot(delta * diff);
  });

  const double count = static_cast<double>(reps);
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= count;
  double var = 0.0;
  for (double l : losses) var += (l - mean) * (l - mean);
  var /= (count - 1.0);
  return {mean, std::sqrt(var / count)};
}

RiskEstimate mc_bayes_risk(const Estimator& estimator, const SimConfig& config, Index reps) {
  return mc_bayes_risk(estimator, config, MatrixXd::Identity(config.p, config.p), reps);
}

std::vector<double> oracle_distances(const SimConfig& config, Index reps, const FitOptions& options) {
  const PriorParams truth = true_params(config);
  std::vector<double> out(static_cast<std::size_t>(reps));
  parallel_for(out.size(), [&](std::size_t r) {
    SimConfig rep_config = config;
    rep_config.seed = derive_seed(config.seed, r);
    const SimData data = simulate_setting(rep_config);
    const Design design(data.x);
    const FitResult result = fit(design, data.panel, options);
    const VectorXd oracle =
        tissue_posterior(design, data.panel.column(0), data.panel.column_mask(0), truth).post_mean;
    out[r] = (result.posteriors.front().post_mean - oracle).norm();
  });
  return out;
}

}  // namespace ebshrink
