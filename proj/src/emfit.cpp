#include "ebshrink/emfit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ebshrink/detail/optimize.hpp"
#include "ebshrink/detail/task_cache.hpp"
#include "ebshrink/error.hpp"

namespace ebshrink {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLambdaTol = 1e-12;
constexpr double kDegenerateMass = 1e-12;
// Half-width, in log units, of the sigma2 bracket in the masked M-step.
const double kLogBracket = std::log(1e4);
constexpr double kLineTol = 1e-10;
constexpr int kSweeps = 3;

double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double active_mass(const MatrixXd& resp) { return resp.col(1).sum(); }

void check_resp(const detail::PanelCache& cache, const MatrixXd& resp) {
  if (resp.rows() != cache.m() || resp.cols() != 2) {
    throw Error(ErrorKind::BadShape, "responsibilities must be m x 2");
  }
  if (!resp.allFinite()) throw Error(ErrorKind::NonFinite, "responsibilities contain NaN/Inf");
}

// Q restricted to the variance parameters, with the weights w_t = B'X_t'(y_t - X_t beta)
// precomputed for the current beta. The tau terms are constant here and omitted.
double q_variance(const detail::PanelCache& cache, const MatrixXd& resp,
                  const std::vector<VectorXd>& w, double sigma2, double eta) {
  double q = 0.0;
  for (Index t = 0; t < cache.m(); ++t) {
    const auto& task = cache.tasks[t];
    const double t0 = resp(t, 0);
    const double t1 = resp(t, 1);
    if (t0 != 0.0) q += t0 * task.log_g0(sigma2);
    if (t1 != 0.0) q += t1 * task.log_g1(w[t], sigma2, eta);
  }
  return q;
}

std::vector<VectorXd> all_weights(const detail::PanelCache& cache, const VectorXd& beta) {
  std::vector<VectorXd> w;
  w.reserve(cache.tasks.size());
  for (const auto& task : cache.tasks) w.push_back(task.weights(task.k.transpose() * beta));
  return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// Panel

ResponsePanel make_panel(MatrixXd y, MaskMatrix mask, std::vector<std::string> names) {
  if (mask.rows() != y.rows() || mask.cols() != y.cols()) {
    throw Error(ErrorKind::BadShape, "mask shape must match the response matrix");
  }
  if (names.empty()) {
    for (Index t = 0; t < y.cols(); ++t) names.push_back("tissue_" + std::to_string(t + 1));
  }
  if (static_cast<Index>(names.size()) != y.cols()) {
    throw Error(ErrorKind::BadShape, "one tissue name per response column is required");
  }
  return ResponsePanel{std::move(y), std::move(mask), std::move(names)};
}

ResponsePanel make_panel(MatrixXd y, std::vector<std::string> names) {
  MaskMatrix mask = MaskMatrix::Constant(y.rows(), y.cols(), true);
  return make_panel(std::move(y), std::move(mask), std::move(names));
}

void validate_panel(const Design& design, const ResponsePanel& panel) {
  if (panel.n() != design.n()) throw Error(ErrorKind::BadShape, "panel rows must equal n");
  if (panel.m() < 1) throw Error(ErrorKind::BadShape, "panel has no tasks");
  if (panel.mask.rows() != panel.n() || panel.mask.cols() != panel.m()) {
    throw Error(ErrorKind::BadShape, "mask shape must match the response matrix");
  }
  if (static_cast<Index>(panel.tissue_names.size()) != panel.m()) {
    throw Error(ErrorKind::BadShape, "one tissue name per response column is required");
  }
  for (Index t = 0; t < panel.m(); ++t) {
    if (panel.mask.col(t).count() < design.p() + 1) {
      throw Error(ErrorKind::BadShape, "tissue '" + panel.tissue_names[t] +
                                           "' has fewer than p + 1 observed responses");
    }
    for (Index i = 0; i < panel.n(); ++i) {
      if (panel.mask(i, t) && !std::isfinite(panel.y(i, t))) {
        throw Error(ErrorKind::NonFinite, "observed response is NaN/Inf in tissue '" +
                                              panel.tissue_names[t] + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Spectral task cache

namespace detail {

VectorXd TaskCache::weights(const VectorXd& kappa) const {
  return zeta - lambda.cwiseProduct(kappa);
}

double TaskCache::log_g0(double sigma2) const {
  const double n = static_cast<double>(n_obs);
  return -0.5 * (n * kLog2Pi + n * std::log(sigma2) + yy / sigma2);
}

double TaskCache::log_g1(const VectorXd& w, double sigma2, double eta) const {
  const double n = static_cast<double>(n_obs);
  const Index p = lambda.size();
  double logdet = (n - static_cast<double>(p)) * std::log(sigma2);
  double quad = rss / sigma2;
  for (Index i = 0; i < p; ++i) {
    const double d = sigma2 + eta * lambda(i);
    logdet += std::log(d);
    if (lambda(i) > kLambdaTol) quad += w(i) * w(i) / (lambda(i) * d);
  }
  return -0.5 * (n * kLog2Pi + logdet + quad);
}

PanelCache::PanelCache(const Design& design, const ResponsePanel& panel) : p(design.p()) {
  validate_panel(design, panel);
  const MatrixXd l = design.gram_factor().matrixL();
  const auto l_view = design.gram_factor().matrixL();
  tasks.reserve(static_cast<std::size_t>(panel.m()));
  for (Index t = 0; t < panel.m(); ++t) {
    TaskCache task;
    const Mask mask = panel.column_mask(t);
    task.n_obs = mask.count();
    task.complete = task.n_obs == design.n();
    if (task.complete) {
      const VectorXd y = panel.column(t);
      task.yy = y.squaredNorm();
      task.k = l;
      task.lambda = VectorXd::Ones(p);
      task.zeta = l_view.solve(design.x().transpose() * y);
      task.beta_ols = l_view.transpose().solve(task.zeta);
      task.rss = (y - design.x() * task.beta_ols).squaredNorm();
    } else {
      const MatrixXd xt = design.observed_rows(mask);
      const VectorXd yt = gather(panel.column(t), mask);
      task.yy = yt.squaredNorm();
      const MatrixXd gw = xt.transpose() * xt;
      const MatrixXd half = l_view.solve(gw);
      MatrixXd c = l_view.solve(half.transpose());
      c = 0.5 * (c + c.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
      const MatrixXd& v = eig.eigenvectors();
      task.lambda = eig.eigenvalues().cwiseMax(0.0);
      task.k = l * v;
      task.zeta = v.transpose() * l_view.solve(xt.transpose() * yt);
      VectorXd scaled = VectorXd::Zero(p);
      for (Index i = 0; i < p; ++i) {
        if (task.lambda(i) > kLambdaTol) scaled(i) = task.zeta(i) / task.lambda(i);
      }
      task.beta_ols = l_view.transpose().solve(v * scaled);
      task.rss = (yt - xt * task.beta_ols).squaredNorm();
    }
    total_yy += task.yy;
    total_obs += task.n_obs;
    tasks.push_back(std::move(task));
  }
  sigma2_floor = std::max(1e-12 * total_yy / static_cast<double>(total_obs), 1e-300);
}

MatrixXd PanelCache::component_logdens(const PriorParams& params) const {
  MatrixXd out(m(), 2);
  for (Index t = 0; t < m(); ++t) {
    const auto& task = tasks[t];
    const VectorXd w = task.weights(task.k.transpose() * params.beta);
    out(t, 0) = task.log_g0(params.sigma2);
    out(t, 1) = task.log_g1(w, params.sigma2, params.eta);
  }
  return out;
}

EStepResult e_step_cached(const PanelCache& cache, const PriorParams& params) {
  if (params.beta.size() != cache.p) throw Error(ErrorKind::BadShape, "prior mean length must equal p");
  const MatrixXd logdens = cache.component_logdens(params);
  if (!logdens.allFinite()) throw Error(ErrorKind::NonFinite, "component log-density is not finite");
  const double log_tau1 = std::log(params.tau1);
  const double log_tau0 = std::log(params.tau0());
  EStepResult out;
  out.resp.resize(cache.m(), 2);
  for (Index t = 0; t < cache.m(); ++t) {
    const double a1 = log_tau1 + logdens(t, 1);
    const double a0 = log_tau0 + logdens(t, 0);
    const double lse = log_sum_exp(a0, a1);
    // Exponentiate the smaller component; the larger is its complement.
    if (a1 < a0) {
      out.resp(t, 1) = std::exp(a1 - lse);
      out.resp(t, 0) = 1.0 - out.resp(t, 1);
    } else {
      out.resp(t, 0) = std::exp(a0 - lse);
      out.resp(t, 1) = 1.0 - out.resp(t, 0);
    }
    out.loglik += lse;
  }
  return out;
}

double q_cached(const PanelCache& cache, const MatrixXd& resp, const PriorParams& params) {
  check_resp(cache, resp);
  const MatrixXd logdens = cache.component_logdens(params);
  const double log_tau1 = std::log(params.tau1);
  const double log_tau0 = std::log(params.tau0());
  double q = 0.0;
  for (Index t = 0; t < cache.m(); ++t) {
    q += resp(t, 0) * (log_tau0 + logdens(t, 0)) + resp(t, 1) * (log_tau1 + logdens(t, 1));
  }
  return q;
}

PriorParams m_step_complete_cached(const PanelCache& cache, const MatrixXd& resp,
                                   const FitOptions& options) {
  check_resp(cache, resp);
  for (const auto& task : cache.tasks) {
    if (!task.complete) throw Error(ErrorKind::BadShape, "m_step_complete needs a fully observed panel");
  }
  const double s1 = active_mass(resp);
  if (s1 < kDegenerateMass) {
    throw Error(ErrorKind::DegenerateResponsibilities, "all tasks assigned to the null component");
  }
  const double m = static_cast<double>(cache.m());
  const double n = static_cast<double>(cache.tasks.front().n_obs);
  const double p = static_cast<double>(cache.p);

  PriorParams next;
  next.tau1 = std::clamp(s1 / m, options.tau_clamp, 1.0 - options.tau_clamp);

  next.beta = VectorXd::Zero(cache.p);
  for (Index t = 0; t < cache.m(); ++t) next.beta += resp(t, 1) * cache.tasks[t].beta_ols;
  next.beta /= s1;

  // y'Hy = |zeta|^2 and (y - X beta)'H(y - X beta) = |zeta - K'beta|^2 in the cached basis.
  double weighted_fit = 0.0;
  double spread = 0.0;
  for (Index t = 0; t < cache.m(); ++t) {
    const auto& task = cache.tasks[t];
    weighted_fit += resp(t, 1) * task.zeta.squaredNorm();
    spread += resp(t, 1) * (task.zeta - task.k.transpose() * next.beta).squaredNorm();
  }
  const double sigma2 = (cache.total_yy - weighted_fit) / (m * n - p * s1);
  next.sigma2 = std::max(sigma2, cache.sigma2_floor);
  next.eta = spread / (p * s1) - next.sigma2;

  if (next.eta < options.eta_floor) {
    // Constrained maximizer: eta pinned at the floor, sigma2 re-solved.
    next.eta = options.eta_floor;
    const auto w = all_weights(cache, next.beta);
    const double start = std::max((cache.total_yy - weighted_fit + spread) / (m * n), cache.sigma2_floor);
    const double center = std::log(start);
    const auto best = golden_section_max(
        [&](double log_s2) { return q_variance(cache, resp, w, std::exp(log_s2), next.eta); },
        center - 2.0, center + 2.0, 1e-12);
    next.sigma2 = std::max(std::exp(best.x), cache.sigma2_floor);
  }
  return next;
}

PriorParams m_step_masked_cached(const PanelCache& cache, const MatrixXd& resp,
                                 const PriorParams& current, const FitOptions& options) {
  check_resp(cache, resp);
  const Index p = cache.p;
  const double s1 = active_mass(resp);

  PriorParams next = current;
  next.tau1 = std::clamp(s1 / static_cast<double>(cache.m()), options.tau_clamp,
                         1.0 - options.tau_clamp);

  // beta: weighted GLS at the current variance parameters.
  //   X_t' S_t^-1 X_t = K diag(lambda / d) K',  X_t' S_t^-1 y_t = K diag(1 / d) zeta,
  // with d = sigma2 + eta * lambda.
  if (s1 >= kDegenerateMass) {
    MatrixXd lhs = MatrixXd::Zero(p, p);
    VectorXd rhs = VectorXd::Zero(p);
    for (Index t = 0; t < cache.m(); ++t) {
      const double weight = resp(t, 1);
      if (weight == 0.0) continue;
      const auto& task = cache.tasks[t];
      const VectorXd d = (current.sigma2 + current.eta * task.lambda.array()).matrix();
      const VectorXd scale = task.lambda.cwiseQuotient(d);
      lhs.noalias() += weight * task.k * scale.asDiagonal() * task.k.transpose();
      rhs.noalias() += weight * task.k * task.zeta.cwiseQuotient(d);
    }
    lhs = 0.5 * (lhs + lhs.transpose()).eval();
    Eigen::LLT<MatrixXd> llt(lhs);
    if (llt.info() == Eigen::Success) {
      const VectorXd candidate = llt.solve(rhs);
      if (candidate.allFinite()) next.beta = candidate;
    }
  }

  // (sigma2, eta): coordinate ascent in log scale; a move is kept only if it
  // raises Q, so the sweep never goes downhill.
  const auto w = all_weights(cache, next.beta);
  double log_s2 = std::log(std::max(next.sigma2, cache.sigma2_floor));
  double log_eta = std::log(std::max(next.eta, options.eta_floor));
  const double log_floor = std::log(options.eta_floor);
  double best = q_variance(cache, resp, w, std::exp(log_s2), std::exp(log_eta));
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    const auto s2_move = golden_section_max(
        [&](double x) { return q_variance(cache, resp, w, std::exp(x), std::exp(log_eta)); },
        log_s2 - kLogBracket, log_s2 + kLogBracket, kLineTol);
    if (s2_move.value > best) {
      best = s2_move.value;
      log_s2 = s2_move.x;
    }
    if (s1 >= kDegenerateMass) {
      const double upper = std::max(log_eta, log_s2) + kLogBracket;
      const auto eta_move = golden_section_max(
          [&](double x) { return q_variance(cache, resp, w, std::exp(log_s2), std::exp(x)); },
          log_floor, upper, kLineTol);
      if (eta_move.value > best) {
        best = eta_move.value;
        log_eta = eta_move.x;
      }
    }
  }
  next.sigma2 = std::max(std::exp(log_s2), cache.sigma2_floor);
  next.eta = std::max(std::exp(log_eta), options.eta_floor);
  return next;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations

EStepResult e_step(const Design& design, const ResponsePanel& panel, const PriorParams& params) {
  const detail::PanelCache cache(design, panel);
  return detail::e_step_cached(cache, normalize_params(params));
}

double observed_loglik(const Design& design, const ResponsePanel& panel, const PriorParams& params) {
  return e_step(design, panel, params).loglik;
}

double expected_complete_loglik(const Design& design, const ResponsePanel& panel,
                                const MatrixXd& resp, const PriorParams& params) {
  const detail::PanelCache cache(design, panel);
  return detail::q_cached(cache, resp, normalize_params(params));
}

PriorParams m_step_complete(const Design& design, const ResponsePanel& panel, const MatrixXd& resp,
                            const FitOptions& options) {
  const detail::PanelCache cache(design, panel);
  return detail::m_step_complete_cached(cache, resp, options);
}

PriorParams m_step_masked(const Design& design, const ResponsePanel& panel, const MatrixXd& resp,
                          const PriorParams& current, const FitOptions& options) {
  const detail::PanelCache cache(design, panel);
  return detail::m_step_masked_cached(cache, resp,
                                      normalize_params(current, options.tau_clamp, options.eta_floor),
                                      options);
}

PriorParams init_params(const Design& design, const ResponsePanel& panel, const FitOptions& options) {
  validate_panel(design, panel);
  const Index m = panel.m();
  const Index p = design.p();
  std::vector<VectorXd> estimates;
  estimates.reserve(static_cast<std::size_t>(m));
  double rss = 0.0;
  double dof = 0.0;
  double yy = 0.0;
  Index n_obs = 0;
  for (Index t = 0; t < m; ++t) {
    const Mask mask = panel.column_mask(t);
    const VectorXd y = panel.column(t);
    estimates.push_back(ols(design, y, mask));
    const VectorXd yt = gather(y, mask);
    rss += (yt - design.observed_rows(mask) * estimates.back()).squaredNorm();
    dof += static_cast<double>(yt.size() - p);
    yy += yt.squaredNorm();
    n_obs += yt.size();
  }

  PriorParams init;
  init.tau1 = 0.5;
  init.beta = VectorXd::Zero(p);
  for (const auto& b : estimates) init.beta += b;
  init.beta /= static_cast<double>(m);

  const double sigma2_floor = std::max(1e-12 * yy / static_cast<double>(n_obs), 1e-300);
  init.sigma2 = std::max(rss / dof, sigma2_floor);

  double spread = 0.0;
  for (const auto& b : estimates) {
    const VectorXd diff = b - init.beta;
    spread += diff.dot(design.gram() * diff);
  }
  spread /= static_cast<double>(m);
  init.eta = std::max(spread / static_cast<double>(p) - init.sigma2, 10.0 * options.eta_floor);
  return init;
}

FitResult fit(const Design& design, const ResponsePanel& panel, const FitOptions& options) {
  if (!(options.tol > 0.0) || options.max_iter < 1 || !(options.eta_floor > 0.0) ||
      !(options.tau_clamp > 0.0) || !(options.tau_clamp < 0.5)) {
    throw Error(ErrorKind::BadConfig, "fit options must be positive");
  }
  const detail::PanelCache cache(design, panel);
  const bool complete = panel.complete();

  FitResult result;
  result.tissue_names = panel.tissue_names;
  PriorParams params = normalize_params(init_params(design, panel, options), options.tau_clamp,
                                        options.eta_floor);
  for (int it = 0;; ++it) {
    const EStepResult es = detail::e_step_cached(cache, params);
    if (!result.loglik_trace.empty()) {
      const double prev = result.loglik_trace.back();
      result.loglik_trace.push_back(es.loglik);
      if (std::abs(es.loglik - prev) <= options.tol * std::max(1.0, std::abs(prev))) {
        result.converged = true;
        break;
      }
    } else {
      result.loglik_trace.push_back(es.loglik);
    }
    if (it == options.max_iter) break;
    try {
      params = complete ? detail::m_step_complete_cached(cache, es.resp, options)
                        : detail::m_step_masked_cached(cache, es.resp, params, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateResponsibilities) throw;
      params.tau1 = options.tau_clamp;
      params.sigma2 = std::max(cache.total_yy / static_cast<double>(cache.total_obs), cache.sigma2_floor);
      result.null_model = true;
      result.converged = true;
      result.loglik_trace.push_back(detail::e_step_cached(cache, params).loglik);
      ++result.iterations;
      break;
    }
    ++result.iterations;
  }

  result.params = params;
  result.posteriors.reserve(static_cast<std::size_t>(panel.m()));
  for (Index t = 0; t < panel.m(); ++t) {
    result.posteriors.push_back(
        tissue_posterior(design, panel.column(t), panel.column_mask(t), params));
  }
  return result;
}

}  // namespace ebshrink
