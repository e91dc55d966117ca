#ifndef EBSHRINK_DETAIL_TASK_CACHE_HPP
#define EBSHRINK_DETAIL_TASK_CACHE_HPP

#include <vector>

#include "ebshrink/core_gauss.hpp"
#include "ebshrink/emfit.hpp"

namespace ebshrink::detail {

/// Per-task sufficient statistics in a basis that diagonalizes X'X and
/// X_t'X_t together: with G = X'X = K K' and X_t'X_t = K diag(lambda) K',
/// every density the EM needs costs O(p) once K' beta is known.
struct TaskCache {
  Index n_obs = 0;
  bool complete = true;
  double yy = 0.0;          ///< |y_t|^2 over observed entries
  double rss = 0.0;         ///< residual sum of squares of y_t on X_t
  VectorXd lambda;          ///< generalized eigenvalues in [0, 1]
  VectorXd zeta;            ///< B' X_t' y_t with B = K^-T
  MatrixXd k;               ///< G = K K'
  VectorXd beta_ols;        ///< (X_t'X_t)^+ X_t' y_t

  /// w = B' X_t' (y_t - X_t beta), given kappa = K' beta.
  VectorXd weights(const VectorXd& kappa) const;
  double log_g0(double sigma2) const;
  double log_g1(const VectorXd& w, double sigma2, double eta) const;
};

struct PanelCache {
  std::vector<TaskCache> tasks;
  Index p = 0;
  double total_yy = 0.0;
  Index total_obs = 0;
  double sigma2_floor = 0.0;

  PanelCache(const Design& design, const ResponsePanel& panel);

  Index m() const { return static_cast<Index>(tasks.size()); }
  /// (log g0, log g1) for every task at params; rows = tasks.
  MatrixXd component_logdens(const PriorParams& params) const;
};

EStepResult e_step_cached(const PanelCache& cache, const PriorParams& params);
double q_cached(const PanelCache& cache, const MatrixXd& resp, const PriorParams& params);
PriorParams m_step_complete_cached(const PanelCache& cache, const MatrixXd& resp,
                                   const FitOptions& options);
PriorParams m_step_masked_cached(const PanelCache& cache, const MatrixXd& resp,
                                 const PriorParams& current, const FitOptions& options);

}  // namespace ebshrink::detail

#endif
