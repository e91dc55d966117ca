#ifndef EBSHRINK_CORE_GAUSS_HPP
#define EBSHRINK_CORE_GAUSS_HPP

#include <Eigen/Dense>

namespace ebshrink {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observation mask for one response column; true = observed.
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;
/// Observation mask for an n x m response panel.
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Cholesky pivots below this fraction of the largest diagonal entry are
/// treated as a rank deficiency.
inline constexpr double kPivotTolerance = 1e-12;

/// Cholesky factorization of an SPD matrix with the pivot check above.
/// Throws Error(RankDeficient) when the matrix is numerically singular.
Eigen::LLT<MatrixXd> factor_spd(const MatrixXd& a, const char* what = "matrix");

/// Sum of log pivots squared, i.e. log det of the factored matrix.
double log_det(const Eigen::LLT<MatrixXd>& factor);

/// The covariate matrix shared by every task, with its Gram matrix factored
/// once. The hat matrix X (X'X)^-1 X' is only ever applied implicitly.
///
/// Columns are used as given; standardization is the caller's business.
class Design {
 public:
  /// Throws NonFinite, RankDeficient or BadShape (n <= p), in that order.
  explicit Design(MatrixXd x);

  const MatrixXd& x() const { return x_; }
  const MatrixXd& gram() const { return gram_; }
  const Eigen::LLT<MatrixXd>& gram_factor() const { return factor_; }
  Index n() const { return x_.rows(); }
  Index p() const { return x_.cols(); }
  double log_det_gram() const { return log_det_gram_; }

  /// (X'X)^-1 v
  VectorXd solve_gram(const VectorXd& v) const { return factor_.solve(v); }
  /// H r, computed as X (X'X)^-1 X' r in O(np).
  VectorXd project(const VectorXd& r) const;
  /// Rows of X whose mask entry is true.
  MatrixXd observed_rows(const Mask& mask) const;

 private:
  MatrixXd x_;
  MatrixXd gram_;
  Eigen::LLT<MatrixXd> factor_;
  double log_det_gram_ = 0.0;
};

Design build_design(MatrixXd x);

/// Entries of y where mask is true, in row order. Unobserved slots are never read.
VectorXd gather(const VectorXd& y, const Mask& mask);
Index count_observed(const Mask& mask);

/// (X'WX)^-1 X'Wy with W = diag(mask). Throws RankDeficient if X'WX is singular.
VectorXd ols(const Design& design, const VectorXd& y, const Mask& mask);

/// Sum of iid N(0, sigma2) log-densities of resid.
double log_mvn_iid(const VectorXd& resid, double sigma2);

/// log N(resid; 0, sigma2 I_n + eta H) via the projection decomposition
/// resid = H resid + (I - H) resid. No n x n matrix is formed.
double log_mvn_projected(const VectorXd& resid, double sigma2, double eta, const Design& design);

/// log N(resid_obs; 0, sigma2 I_{n_t} + eta X_t (X'X)^-1 X_t'), X_t = observed rows.
///
/// With M = sigma2 X'X + eta X_t'X_t the determinant lemma gives
///   log det = (n_t - p) log sigma2 + log det M - log det X'X
/// and Woodbury gives
///   r' S^-1 r = |r|^2 / sigma2 - (eta / sigma2) z' M^-1 z,   z = X_t' r,
/// so every dense factorization is p x p.
double log_mvn_masked(const VectorXd& resid_obs, double sigma2, double eta, const Design& design,
                      const Mask& mask);

}  // namespace ebshrink

#endif
