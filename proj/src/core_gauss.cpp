#include "ebshrink/core_gauss.hpp"

#include <cmath>
#include <string>

#include "ebshrink/error.hpp"

namespace ebshrink {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_variance(double sigma2, double eta) {
  if (!std::isfinite(sigma2) || !std::isfinite(eta)) {
    throw Error(ErrorKind::NonFinite, "variance parameters must be finite");
  }
  if (sigma2 <= 0.0 || eta < 0.0) {
    throw Error(ErrorKind::InvalidParams, "need sigma2 > 0 and eta >= 0");
  }
}

void check_finite(const VectorXd& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " contains NaN/Inf");
}

}  // namespace

Eigen::LLT<MatrixXd> factor_spd(const MatrixXd& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw Error(ErrorKind::BadShape, std::string(what) + " must be square and non-empty");
  }
  const double max_diag = a.diagonal().maxCoeff();
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !(max_diag > 0.0)) {
    throw Error(ErrorKind::RankDeficient, std::string(what) + " is not positive definite");
  }
  const VectorXd pivots = llt.matrixLLT().diagonal().array().square();
  if (!(pivots.minCoeff() > kPivotTolerance * max_diag)) {
    throw Error(ErrorKind::RankDeficient, std::string(what) + " is numerically singular");
  }
  return llt;
}

double log_det(const Eigen::LLT<MatrixXd>& factor) {
  return 2.0 * factor.matrixLLT().diagonal().array().log().sum();
}

Design::Design(MatrixXd x) : x_(std::move(x)) {
  if (x_.rows() == 0 || x_.cols() == 0) throw Error(ErrorKind::BadShape, "design matrix is empty");
  if (!x_.allFinite()) throw Error(ErrorKind::NonFinite, "design matrix contains NaN/Inf");
  gram_ = x_.transpose() * x_;
  // Rank is checked before shape: an n <= p design is reported as rank
  // deficient whenever its Gram matrix is singular.
  factor_ = factor_spd(gram_, "Gram matrix X'X");
  if (x_.rows() <= x_.cols()) {
    throw Error(ErrorKind::BadShape, "need more samples than covariates (n > p)");
  }
  log_det_gram_ = log_det(factor_);
}

VectorXd Design::project(const VectorXd& r) const {
  return x_ * factor_.solve(x_.transpose() * r);
}

MatrixXd Design::observed_rows(const Mask& mask) const {
  if (mask.size() != n()) throw Error(ErrorKind::BadShape, "mask length must equal n");
  MatrixXd xt(count_observed(mask), p());
  Index k = 0;
  for (Index i = 0; i < n(); ++i) {
    if (mask(i)) xt.row(k++) = x_.row(i);
  }
  return xt;
}

Design build_design(MatrixXd x) { return Design(std::move(x)); }

Index count_observed(const Mask& mask) { return mask.count(); }

VectorXd gather(const VectorXd& y, const Mask& mask) {
  if (y.size() != mask.size()) throw Error(ErrorKind::BadShape, "response and mask lengths differ");
  VectorXd out(count_observed(mask));
  Index k = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (mask(i)) out(k++) = y(i);
  }
  return out;
}

VectorXd ols(const Design& design, const VectorXd& y, const Mask& mask) {
  if (y.size() != design.n()) throw Error(ErrorKind::BadShape, "response length must equal n");
  const Index n_obs = count_observed(mask);
  if (n_obs < 1) throw Error(ErrorKind::BadShape, "no observed responses");
  if (n_obs == design.n()) {
    check_finite(y, "response");
    return design.solve_gram(design.x().transpose() * y);
  }
  const MatrixXd xt = design.observed_rows(mask);
  const VectorXd yt = gather(y, mask);
  check_finite(yt, "response");
  const MatrixXd gw = xt.transpose() * xt;
  return factor_spd(gw, "masked Gram X'WX").solve(xt.transpose() * yt);
}

double log_mvn_iid(const VectorXd& resid, double sigma2) {
  check_variance(sigma2, 0.0);
  check_finite(resid, "residual");
  const double n = static_cast<double>(resid.size());
  return -0.5 * (n * kLog2Pi + n * std::log(sigma2) + resid.squaredNorm() / sigma2);
}

double log_mvn_projected(const VectorXd& resid, double sigma2, double eta, const Design& design) {
  check_variance(sigma2, eta);
  check_finite(resid, "residual");
  if (resid.size() != design.n()) throw Error(ErrorKind::BadShape, "residual length must equal n");
  const double n = static_cast<double>(design.n());
  const double p = static_cast<double>(design.p());
  const VectorXd u = design.project(resid);
  const double fitted = u.squaredNorm();
  const double orth = (resid - u).squaredNorm();
  const double a = sigma2 + eta;
  return -0.5 * n * kLog2Pi - 0.5 * (p * std::log(a) + (n - p) * std::log(sigma2)) -
         0.5 * (fitted / a + orth / sigma2);
}

double log_mvn_masked(const VectorXd& resid_obs, double sigma2, double eta, const Design& design,
                      const Mask& mask) {
  check_variance(sigma2, eta);
  check_finite(resid_obs, "residual");
  if (mask.size() != design.n()) throw Error(ErrorKind::BadShape, "mask length must equal n");
  const Index n_obs = count_observed(mask);
  if (resid_obs.size() != n_obs) {
    throw Error(ErrorKind::BadShape, "residual length must equal the observed count");
  }
  const MatrixXd xt = design.observed_rows(mask);
  const double nt = static_cast<double>(n_obs);
  const double p = static_cast<double>(design.p());

  const MatrixXd m = sigma2 * design.gram() + eta * (xt.transpose() * xt);
  const auto m_factor = factor_spd(m, "sigma2 X'X + eta X_t'X_t");
  const VectorXd z = xt.transpose() * resid_obs;
  const double correction = eta / sigma2 * z.dot(m_factor.solve(z));

  const double logdet = (nt - p) * std::log(sigma2) + log_det(m_factor) - design.log_det_gram();
  const double quad = resid_obs.squaredNorm() / sigma2 - correction;
  return -0.5 * nt * kLog2Pi - 0.5 * logdet - 0.5 * quad;
}

}  // namespace ebshrink
