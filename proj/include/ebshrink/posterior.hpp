#ifndef EBSHRINK_POSTERIOR_HPP
#define EBSHRINK_POSTERIOR_HPP

#include "ebshrink/core_gauss.hpp"

namespace ebshrink {

inline constexpr double kTauClamp = 1e-6;
inline constexpr double kEtaFloor = 1e-10;

/// Shared mixture-prior hyperparameters: with probability tau1 a task's
/// effects are N(beta, eta (X'X)^-1), otherwise exactly zero. sigma2 is the
/// error variance common to all tasks.
struct PriorParams {
  double tau1 = 0.5;
  VectorXd beta;
  double eta = 1.0;
  double sigma2 = 1.0;

  double tau0() const { return 1.0 - tau1; }
};

/// Clamps tau1 into [tau_clamp, 1 - tau_clamp] and floors eta. Throws
/// NonFinite / InvalidParams for non-finite entries or sigma2 <= 0.
PriorParams normalize_params(PriorParams params, double tau_clamp = kTauClamp,
                             double eta_floor = kEtaFloor);

struct TissuePosterior {
  double h = 0.0;               ///< P(active | data)
  VectorXd post_mean;           ///< E[beta_t | data] = h * cond_mean_active
  VectorXd cond_mean_active;    ///< E[beta_t | data, active]
  double log_bf = 0.0;          ///< log p(y | inactive) - log p(y | active)
  double log_odds = 0.0;        ///< log P(inactive | y) / P(active | y)
};

/// Posterior for one task from its own column only. Dispatches to the
/// complete-data formulas when every entry of mask is true.
TissuePosterior tissue_posterior(const Design& design, const VectorXd& y, const Mask& mask,
                                 const PriorParams& params);

/// Complete-data posterior (all n responses observed).
TissuePosterior tissue_posterior_complete(const Design& design, const VectorXd& y,
                                          const PriorParams& params);

/// Missing-response posterior; valid for any mask including the full one.
TissuePosterior tissue_posterior_masked(const Design& design, const VectorXd& y, const Mask& mask,
                                        const PriorParams& params);

double log_bayes_factor(const Design& design, const VectorXd& y, const Mask& mask,
                        const PriorParams& params);

}  // namespace ebshrink

#endif
