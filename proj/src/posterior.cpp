#include "ebshrink/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "ebshrink/error.hpp"

namespace ebshrink {

namespace {

void check_beta(const Design& design, const PriorParams& params) {
  if (params.beta.size() != design.p()) {
    throw Error(ErrorKind::BadShape, "prior mean length must equal p");
  }
}

double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

// Fills h, log_bf and log_odds from the two component log-densities.
void mix(TissuePosterior& out, double log_g0, double log_g1, const PriorParams& params) {
  const double log_tau1 = std::log(params.tau1);
  const double log_tau0 = std::log(params.tau0());
  const double lse = log_sum_exp(log_tau1 + log_g1, log_tau0 + log_g0);
  out.h = std::clamp(std::exp(log_tau1 + log_g1 - lse), 0.0, 1.0);
  out.log_bf = log_g0 - log_g1;
  out.log_odds = out.log_bf + (log_tau0 - log_tau1);
}

}  // namespace

PriorParams normalize_params(PriorParams params, double tau_clamp, double eta_floor) {
  if (!std::isfinite(params.tau1) || !std::isfinite(params.eta) || !std::isfinite(params.sigma2) ||
      !params.beta.allFinite()) {
    throw Error(ErrorKind::NonFinite, "prior parameters must be finite");
  }
  if (params.sigma2 <= 0.0) throw Error(ErrorKind::InvalidParams, "sigma2 must be positive");
  params.tau1 = std::clamp(params.tau1, tau_clamp, 1.0 - tau_clamp);
  params.eta = std::max(params.eta, eta_floor);
  return params;
}

TissuePosterior tissue_posterior_complete(const Design& design, const VectorXd& y,
                                          const PriorParams& raw) {
  const PriorParams params = normalize_params(raw);
  check_beta(design, params);
  if (y.size() != design.n()) throw Error(ErrorKind::BadShape, "response length must equal n");

  const VectorXd beta_hat = ols(design, y, Mask::Constant(design.n(), true));
  const double log_g1 =
      log_mvn_projected(y - design.x() * params.beta, params.sigma2, params.eta, design);
  const double log_g0 = log_mvn_iid(y, params.sigma2);

  TissuePosterior out;
  mix(out, log_g0, log_g1, params);
  // (1/eta + 1/sigma2)^-1 (beta/eta + beta_hat/sigma2), rearranged to stay
  // finite as eta approaches its floor.
  out.cond_mean_active =
      (params.sigma2 * params.beta + params.eta * beta_hat) / (params.sigma2 + params.eta);
  out.post_mean = out.h * out.cond_mean_active;
  return out;
}

TissuePosterior tissue_posterior_masked(const Design& design, const VectorXd& y, const Mask& mask,
                                        const PriorParams& raw) {
  const PriorParams params = normalize_params(raw);
  check_beta(design, params);
  const MatrixXd xt = design.observed_rows(mask);
  const VectorXd yt = gather(y, mask);

  const double log_g1 =
      log_mvn_masked(yt - xt * params.beta, params.sigma2, params.eta, design, mask);
  const double log_g0 = log_mvn_iid(yt, params.sigma2);

  TissuePosterior out;
  mix(out, log_g0, log_g1, params);
  // (X'X/eta + X'WX/sigma2)^-1 (X'X beta/eta + X'Wy/sigma2), both sides
  // multiplied through by eta * sigma2.
  const MatrixXd precision = params.sigma2 * design.gram() + params.eta * (xt.transpose() * xt);
  const VectorXd rhs =
      params.sigma2 * (design.gram() * params.beta) + params.eta * (xt.transpose() * yt);
  out.cond_mean_active = factor_spd(precision, "posterior precision").solve(rhs);
  out.post_mean = out.h * out.cond_mean_active;
  return out;
}

TissuePosterior tissue_posterior(const Design& design, const VectorXd& y, const Mask& mask,
                                 const PriorParams& params) {
  if (mask.size() != design.n()) throw Error(ErrorKind::BadShape, "mask length must equal n");
  if (mask.all()) return tissue_posterior_complete(design, y, params);
  return tissue_posterior_masked(design, y, mask, params);
}

double log_bayes_factor(const Design& design, const VectorXd& y, const Mask& mask,
                        const PriorParams& params) {
  return tissue_posterior(design, y, mask, params).log_bf;
}

}  // namespace ebshrink
