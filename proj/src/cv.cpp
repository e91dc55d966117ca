#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ebshrink/detail/format.hpp"
#include "ebshrink/error.hpp"
#include "ebshrink/iocli.hpp"
#include "ebshrink/parallel.hpp"

namespace ebshrink {

double squared_correlation(const VectorXd& predicted, const VectorXd& truth) {
  if (predicted.size() != truth.size() || truth.size() == 0) {
    throw Error(ErrorKind::BadShape, "prediction and truth lengths differ");
  }
  if (predicted == truth) return 1.0;
  const VectorXd a = predicted.array() - predicted.mean();
  const VectorXd b = truth.array() - truth.mean();
  const double saa = a.squaredNorm();
  const double sbb = b.squaredNorm();
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  const double r = a.dot(b) / std::sqrt(saa * sbb);
  return std::clamp(r * r, 0.0, 1.0);
}

const char* CvReport::csv_header() { return "tissue,n_test,pmse,r2,pmse_ols,r2_ols"; }

std::string CvReport::to_csv() const {
  using detail::format_real;
  std::string out = std::string(csv_header()) + "\n";
  for (const auto& r : rows) {
    out += r.tissue + "," + std::to_string(r.n_test) + "," + format_real(r.pmse) + "," +
           format_real(r.r2) + "," + format_real(r.pmse_ols) + "," + format_real(r.r2_ols) + "\n";
  }
  return out;
}

CvReport kfold_cv(const Design& design, const ResponsePanel& panel, Index k, std::uint64_t seed,
                  const FitOptions& options) {
  validate_panel(design, panel);
  if (k < 2) throw Error(ErrorKind::BadConfig, "need at least two folds");
  const Index n = panel.n();
  const Index m = panel.m();
  const Index p = design.p();

  CvReport report;
  report.folds = k;
  report.fold_of = Eigen::MatrixXi::Constant(n, m, -1);
  std::vector<Index> fold_sizes(static_cast<std::size_t>(k * m), 0);
  for (Index t = 0; t < m; ++t) {
    std::vector<Index> observed;
    for (Index i = 0; i < n; ++i) {
      if (panel.mask(i, t)) observed.push_back(i);
    }
    if (static_cast<Index>(observed.size()) < k) {
      throw Error(ErrorKind::FoldTooSmall,
                  "tissue '" + panel.tissue_names[static_cast<std::size_t>(t)] + "' has fewer observed samples than folds");
    }
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    for (std::size_t i = observed.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(observed[i - 1], observed[pick(rng)]);
    }
    for (std::size_t j = 0; j < observed.size(); ++j) {
      const auto fold = static_cast<Index>(j) % k;
      report.fold_of(observed[j], t) = static_cast<int>(fold);
      ++fold_sizes[static_cast<std::size_t>(t * k + fold)];
    }
  }
  report.min_fold_size = *std::min_element(fold_sizes.begin(), fold_sizes.end());
  report.max_fold_size = *std::max_element(fold_sizes.begin(), fold_sizes.end());

  // Each held-out entry belongs to exactly one fold, so per-fold results can
  // be merged in any order without changing the output.
  std::vector<MatrixXd> eb_pred(static_cast<std::size_t>(k));
  std::vector<MatrixXd> ols_pred(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t f) {
    MaskMatrix train = panel.mask;
    for (Index t = 0; t < m; ++t) {
      for (Index i = 0; i < n; ++i) {
        if (report.fold_of(i, t) == static_cast<int>(f)) train(i, t) = false;
      }
      if (train.col(t).count() < p + 1) {
        throw Error(ErrorKind::FoldTooSmall, "training split of tissue '" +
                                                 panel.tissue_names[static_cast<std::size_t>(t)] +
                                                 "' has fewer than p + 1 samples");
      }
    }
    const ResponsePanel training{panel.y, train, panel.tissue_names};
    const FitResult result = fit(design, training, options);
    eb_pred[f] = predict(design.x(), result);
    MatrixXd ols_effects(p, m);
    for (Index t = 0; t < m; ++t) ols_effects.col(t) = ols(design, panel.column(t), training.column_mask(t));
    ols_pred[f] = design.x() * ols_effects;
  });

  for (Index t = 0; t < m; ++t) {
    std::vector<double> truth, eb, base;
    for (Index i = 0; i < n; ++i) {
      const int f = report.fold_of(i, t);
      if (f < 0) continue;
      truth.push_back(panel.y(i, t));
      eb.push_back(eb_pred[static_cast<std::size_t>(f)](i, t));
      base.push_back(ols_pred[static_cast<std::size_t>(f)](i, t));
    }
    const auto size = static_cast<Index>(truth.size());
    const Eigen::Map<const VectorXd> y_true(truth.data(), size);
    const Eigen::Map<const VectorXd> y_eb(eb.data(), size);
    const Eigen::Map<const VectorXd> y_ols(base.data(), size);
    CvTissueRow row;
    row.tissue = panel.tissue_names[static_cast<std::size_t>(t)];
    row.n_test = size;
    row.pmse = (y_eb - y_true).squaredNorm() / static_cast<double>(size);
    row.r2 = squared_correlation(y_eb, y_true);
    row.pmse_ols = (y_ols - y_true).squaredNorm() / static_cast<double>(size);
    row.r2_ols = squared_correlation(y_ols, y_true);
    report.rows.push_back(std::move(row));
  }
  return report;
}

StoufferResult stouffer_combine(const VectorXd& z_scores) {
  if (z_scores.size() < 1) throw Error(ErrorKind::BadShape, "need at least one z-score");
  if (!z_scores.allFinite()) throw Error(ErrorKind::NonFinite, "z-scores contain NaN/Inf");
  StoufferResult out;
  out.z = z_scores.sum() / std::sqrt(static_cast<double>(z_scores.size()));
  out.p_value = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  return out;
}

}  // namespace ebshrink
