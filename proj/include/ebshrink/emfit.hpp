#ifndef EBSHRINK_EMFIT_HPP
#define EBSHRINK_EMFIT_HPP

#include <string>
#include <vector>

#include "ebshrink/core_gauss.hpp"
#include "ebshrink/posterior.hpp"

namespace ebshrink {

/// n x m responses (one column per task/tissue) with an observation mask.
/// Unobserved entries of y are never read.
struct ResponsePanel {
  MatrixXd y;
  MaskMatrix mask;
  std::vector<std::string> tissue_names;

  Index n() const { return y.rows(); }
  Index m() const { return y.cols(); }
  bool complete() const { return mask.all(); }
  VectorXd column(Index t) const { return y.col(t); }
  Mask column_mask(Index t) const { return mask.col(t); }
};

/// Builds a panel; empty names become "tissue_1", "tissue_2", ...
ResponsePanel make_panel(MatrixXd y, MaskMatrix mask, std::vector<std::string> names = {});
/// Fully observed panel.
ResponsePanel make_panel(MatrixXd y, std::vector<std::string> names = {});

/// Throws BadShape if the panel does not match the design or some column has
/// fewer than p + 1 observed entries, NonFinite for non-finite observed values.
void validate_panel(const Design& design, const ResponsePanel& panel);

struct FitOptions {
  double tol = 1e-8;     ///< relative observed-loglik change for convergence
  int max_iter = 1000;
  double eta_floor = kEtaFloor;
  double tau_clamp = kTauClamp;
};

struct FitResult {
  PriorParams params;
  std::vector<TissuePosterior> posteriors;
  std::vector<std::string> tissue_names;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  /// Responsibilities collapsed onto the null component; params hold the null model.
  bool null_model = false;
};

struct EStepResult {
  MatrixXd resp;   ///< m x 2; column 0 = P(inactive), column 1 = P(active)
  double loglik = 0.0;
};

EStepResult e_step(const Design& design, const ResponsePanel& panel, const PriorParams& params);

/// Observed-data log-likelihood sum_t log(tau0 g0 + tau1 g1).
double observed_loglik(const Design& design, const ResponsePanel& panel, const PriorParams& params);

/// Q(params | resp) = sum_t sum_s T_s^(t) (log tau_s + log g_s).
double expected_complete_loglik(const Design& design, const ResponsePanel& panel,
                                const MatrixXd& resp, const PriorParams& params);

/// Closed-form maximizer of Q for a fully observed panel. When the eta update
/// falls below the floor, sigma2 is re-maximized with eta held at the floor.
/// Throws DegenerateResponsibilities when sum_t T1 < 1e-12.
PriorParams m_step_complete(const Design& design, const ResponsePanel& panel, const MatrixXd& resp,
                            const FitOptions& options = {});

/// Conditional-maximization sweep for panels with missing responses:
/// tau in closed form, beta by weighted GLS at the current (sigma2, eta),
/// then (sigma2, eta) by three sweeps of bracketed golden-section ascent.
/// Never decreases Q.
PriorParams m_step_masked(const Design& design, const ResponsePanel& panel, const MatrixXd& resp,
                          const PriorParams& current, const FitOptions& options = {});

PriorParams init_params(const Design& design, const ResponsePanel& panel,
                        const FitOptions& options = {});

FitResult fit(const Design& design, const ResponsePanel& panel, const FitOptions& options = {});

}  // namespace ebshrink

#endif
