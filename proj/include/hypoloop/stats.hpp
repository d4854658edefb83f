#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hypoloop/domain.hpp"

namespace hypoloop {

// n x (p+1) regressors with a leading intercept column of ones. Labels cover
// the p non-intercept columns; the first `hypothesis_count` are hypothesis ids,
// any remaining ones are covariate names.
struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::string> column_labels;
  std::size_t hypothesis_count = 0;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t predictors() const { return column_labels.size(); }

  // Throws DomainError on layout problems (wrong width, intercept not all ones,
  // non-finite entries).
  void validate() const;
};

// `embedding` must have no missing entries (see impute_mode). Covariates, when
// given, are appended after the hypothesis columns.
DesignMatrix make_design(const EmbeddingMatrix& embedding, std::vector<std::string> hypothesis_ids,
                         const Eigen::MatrixXd& covariates = {},
                         std::vector<std::string> covariate_labels = {});

// Replaces missing entries by the column mode computed over `mode_rows`
// (all rows when empty). Ties go to the smallest option index; a column with
// no observed value in `mode_rows` is filled with 0.
EmbeddingMatrix impute_mode(const EmbeddingMatrix& embedding,
                            const std::vector<std::size_t>& mode_rows = {});

// p = 2 * (1 - F_t(|t|; dof)) = I_{dof/(dof+t^2)}(dof/2, 1/2).
double student_t_two_sided_p(double t_stat, double dof);

struct OlsOptions {
  // A centred column is aliased when its pivoted R diagonal falls below this
  // fraction of the largest one.
  double rank_tolerance = 1e-10;
};

// Least squares via Householder QR. Zero-variance and linearly dependent
// columns are flagged aliased (coefficient 0, p = 1) and left out of the fit;
// the intercept is never dropped.
AssessmentResult ols_fit(const DesignMatrix& design, std::span<const double> y,
                         const OlsOptions& options = {});

std::vector<double> ols_predict(const AssessmentResult& model, const DesignMatrix& design);

// RMSE, MAE and R^2 = 1 - SS_res / SS_tot. R^2 is left empty when y is constant.
Metrics prediction_metrics(std::span<const double> y, std::span<const double> yhat);

struct CorrelationMatrix {
  std::size_t k = 0;
  std::vector<double> values;         // row-major k x k, 0 where undefined
  std::vector<std::uint8_t> defined;  // 0 where a column has zero variance

  double at(std::size_t i, std::size_t j) const { return values[i * k + j]; }
  bool is_defined(std::size_t i, std::size_t j) const { return defined[i * k + j] != 0; }
};

CorrelationMatrix pearson_matrix(const Eigen::MatrixXd& columns);
// Missing entries are mode-imputed over all rows first.
CorrelationMatrix pearson_matrix(const EmbeddingMatrix& embedding);

struct ShapReport {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;  // rows x predictors
  double base_value = 0.0;
  std::vector<double> mean_abs;
  std::vector<std::size_t> ranking;  // predictor indices by mean |SHAP|, descending
};

// Exact SHAP values for a linear model with independent features:
// phi_ij = beta_j * (x_ij - mean_j), base value = mean prediction over the rows.
ShapReport linear_shap(const AssessmentResult& model, const DesignMatrix& design);

enum class Correction { none, bonferroni };
std::string_view to_string(Correction c);
Correction correction_from_string(std::string_view s);

struct PruneResult {
  std::vector<std::string> kept_ids;
  std::vector<std::string> pruned_ids;
  std::vector<std::size_t> kept_indices;
  std::vector<std::size_t> pruned_indices;
  std::size_t m_pruned = 0;
};

// Prunes hypothesis columns with p > alpha (p == alpha is kept). Covariate
// columns are never pruned.
PruneResult significance_prune(const AssessmentResult& result, double alpha,
                               Correction correction = Correction::none);

}  // namespace hypoloop
