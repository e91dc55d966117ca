#ifndef EBSHRINK_IOCLI_HPP
#define EBSHRINK_IOCLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ebshrink/core_gauss.hpp"
#include "ebshrink/emfit.hpp"

namespace ebshrink {

// ---------------------------------------------------------------------------
// Tab-separated matrices
//
// First line holds column ids. When its first cell is "#id", every following
// line starts with a row id. Cells are decimal numbers; "NA" marks a missing
// response and is accepted only when allow_na is set.

struct MatrixFile {
  MatrixXd values;
  std::vector<std::string> row_ids;   ///< empty when the file has no id column
  std::vector<std::string> col_ids;
  MaskMatrix na_mask;                 ///< true where the cell was NA
};

MatrixFile parse_matrix_tsv(std::istream& in, bool allow_na, const std::string& source = "<stream>");
MatrixFile read_matrix_tsv(const std::string& path, bool allow_na);
/// Values are written with 17 significant digits; masked cells as NA.
void write_matrix_tsv(std::ostream& out, const MatrixFile& file);
void write_matrix_tsv(const std::string& path, const MatrixFile& file);

// ---------------------------------------------------------------------------
// Fit reports (JSON)
//
// {"params": {"tau1", "beta": [], "eta", "sigma2"},
//  "posteriors": [{"tissue", "h", "post_mean": [], "log_bf", "log_odds"}],
//  "loglik_trace": [], "iterations", "converged"}

std::string fit_to_json(const FitResult& result);
FitResult fit_from_json(const std::string& text);
void write_fit_json(const std::string& path, const FitResult& result);
FitResult read_fit_json(const std::string& path);

/// Column t = x_new * post_mean of task t.
MatrixXd predict(const MatrixXd& x_new, const FitResult& result);

// ---------------------------------------------------------------------------
// Cross-validation

struct CvTissueRow {
  std::string tissue;
  Index n_test = 0;
  double pmse = 0.0;        ///< empirical-Bayes fit
  double r2 = 0.0;
  double pmse_ols = 0.0;    ///< per-tissue OLS on the same folds
  double r2_ols = 0.0;
};

struct CvReport {
  std::vector<CvTissueRow> rows;
  Index folds = 0;
  Index min_fold_size = 0;
  Index max_fold_size = 0;
  /// fold_of(i, t) in [0, folds) for observed entries, -1 where unobserved.
  Eigen::MatrixXi fold_of;

  static const char* csv_header();
  std::string to_csv() const;
};

/// Squared Pearson correlation; 1 for an exact match, 0 when either side has
/// zero variance otherwise.
double squared_correlation(const VectorXd& predicted, const VectorXd& truth);

/// Per tissue, the observed samples are shuffled and dealt into k folds
/// (sizes differ by at most one). Fold i of every tissue is held out at once,
/// the masked-data model is fit on the rest, and held-out entries predicted.
CvReport kfold_cv(const Design& design, const ResponsePanel& panel, Index k, std::uint64_t seed,
                  const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Stouffer screening

struct StoufferResult {
  double z = 0.0;
  double p_value = 1.0;   ///< two-sided
};

StoufferResult stouffer_combine(const VectorXd& z_scores);

// ---------------------------------------------------------------------------
// Command line

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
int cli_main(int argc, const char* const* argv);

}  // namespace ebshrink

#endif
