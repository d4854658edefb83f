#include "hypoloop/stats.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hypoloop/errors.hpp"

namespace hypoloop {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void DesignMatrix::validate() const {
  if (x.cols() != static_cast<Eigen::Index>(column_labels.size() + 1)) {
    throw DomainError("design matrix width does not match its column labels");
  }
  if (hypothesis_count > column_labels.size()) {
    throw DomainError("hypothesis_count exceeds the number of columns");
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (x(i, 0) != 1.0) throw DomainError("design matrix column 0 must be the intercept (all ones)");
  }
  if (!x.allFinite()) throw DomainError("design matrix has non-finite entries");
}

DesignMatrix make_design(const EmbeddingMatrix& embedding, std::vector<std::string> hypothesis_ids,
                         const Eigen::MatrixXd& covariates,
                         std::vector<std::string> covariate_labels) {
  if (hypothesis_ids.size() != embedding.cols()) {
    throw DomainError("hypothesis id count does not match embedding width");
  }
  const auto n = static_cast<Eigen::Index>(embedding.rows());
  const auto k = static_cast<Eigen::Index>(embedding.cols());
  const Eigen::Index c = covariates.size() == 0 ? 0 : covariates.cols();
  if (c != static_cast<Eigen::Index>(covariate_labels.size())) {
    throw DomainError("covariate label count does not match covariate columns");
  }
  if (c > 0 && covariates.rows() != n) throw DomainError("covariate rows do not match embedding");

  DesignMatrix d;
  d.x.resize(n, 1 + k + c);
  d.x.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      if (embedding.is_missing(ui, uj)) {
        throw DomainError("embedding has missing entries; impute before building the design");
      }
      d.x(i, 1 + j) = embedding.at(ui, uj);
    }
  }
  if (c > 0) d.x.rightCols(c) = covariates;
  d.hypothesis_count = static_cast<std::size_t>(k);
  d.column_labels = std::move(hypothesis_ids);
  for (auto& l : covariate_labels) d.column_labels.push_back(std::move(l));
  d.validate();
  return d;
}

EmbeddingMatrix impute_mode(const EmbeddingMatrix& embedding,
                            const std::vector<std::size_t>& mode_rows) {
  EmbeddingMatrix out = embedding;
  std::vector<std::size_t> rows = mode_rows;
  if (rows.empty()) {
    rows.resize(embedding.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  for (std::size_t j = 0; j < embedding.cols(); ++j) {
    std::vector<std::size_t> counts;
    for (std::size_t i : rows) {
      if (embedding.is_missing(i, j)) continue;
      const auto v = static_cast<std::size_t>(embedding.at(i, j));
      if (v >= counts.size()) counts.resize(v + 1, 0);
      ++counts[v];
    }
    int mode = 0;
    if (!counts.empty()) {
      mode = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    for (std::size_t i = 0; i < embedding.rows(); ++i) {
      if (embedding.is_missing(i, j)) out.set(i, j, mode);
    }
  }
  return out;
}

double student_t_two_sided_p(double t_stat, double dof) {
  if (!(dof >= 1.0)) throw DomainError("t-test needs at least one degree of freedom");
  if (std::isnan(t_stat)) throw DomainError("t statistic is NaN");
  if (std::isinf(t_stat)) return 0.0;
  if (t_stat == 0.0) return 1.0;
  const double t2 = t_stat * t_stat;
  // Both forms are the same quantity; the complement keeps precision when
  // x = dof / (dof + t^2) is close to 1.
  double p;
  if (t2 < dof) {
    p = boost::math::ibetac(0.5, dof / 2.0, t2 / (dof + t2));
  } else {
    p = boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + t2));
  }
  return std::clamp(p, 0.0, 1.0);
}

AssessmentResult ols_fit(const DesignMatrix& design, std::span<const double> y,
                         const OlsOptions& options) {
  design.validate();
  const Eigen::Index n = design.x.rows();
  const Eigen::Index p = design.x.cols() - 1;
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw DomainError("outcome length does not match design rows");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("outcome has non-finite values");
  }
  if (n - (p + 1) < 1) {
    throw InferenceError("no residual degrees of freedom: n=" + std::to_string(n) +
                         ", parameters=" + std::to_string(p + 1));
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

  // Columns that do not vary are aliased with the intercept outright.
  std::vector<Eigen::Index> varying;
  for (Eigen::Index j = 1; j <= p; ++j) {
    const auto col = design.x.col(j);
    if (col.maxCoeff() != col.minCoeff()) varying.push_back(j);
  }

  // Rank detection on intercept-centred columns, so the intercept always stays.
  std::vector<Eigen::Index> independent;
  if (!varying.empty()) {
    Eigen::MatrixXd centred(n, static_cast<Eigen::Index>(varying.size()));
    for (std::size_t c = 0; c < varying.size(); ++c) {
      const auto col = design.x.col(varying[c]);
      centred.col(static_cast<Eigen::Index>(c)) = col.array() - col.mean();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(centred.rows(), centred.cols());
    pivoted.setThreshold(options.rank_tolerance);
    pivoted.compute(centred);
    const Eigen::Index rank = pivoted.rank();
    const auto& perm = pivoted.colsPermutation().indices();
    for (Eigen::Index r = 0; r < rank; ++r) independent.push_back(varying[perm(r)]);
    std::sort(independent.begin(), independent.end());
  }

  const auto m = static_cast<Eigen::Index>(independent.size() + 1);
  Eigen::MatrixXd xs(n, m);
  xs.col(0) = design.x.col(0);
  for (std::size_t c = 0; c < independent.size(); ++c) {
    xs.col(static_cast<Eigen::Index>(c + 1)) = design.x.col(independent[c]);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(xs);
  const Eigen::VectorXd beta = qr.solve(yv);
  const Eigen::VectorXd fitted = xs * beta;
  const Eigen::VectorXd resid = yv - fitted;
  const double rss = resid.squaredNorm();
  const Eigen::Index dof = n - m;
  const double sigma2 = rss / static_cast<double>(dof);

  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(m, m).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::VectorXd unscaled_var = (r_inv * r_inv.transpose()).diagonal();

  AssessmentResult out;
  out.labels = design.column_labels;
  out.hypothesis_count = design.hypothesis_count;
  out.coefficients.assign(static_cast<std::size_t>(p + 1), 0.0);
  out.std_errors.assign(static_cast<std::size_t>(p + 1), kNaN);
  out.t_stats.assign(static_cast<std::size_t>(p + 1), kNaN);
  out.p_values.assign(static_cast<std::size_t>(p), 1.0);
  out.aliased.assign(static_cast<std::size_t>(p), true);
  out.dof = static_cast<int>(dof);
  out.rank = static_cast<int>(m);

  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index col = c == 0 ? 0 : independent[static_cast<std::size_t>(c - 1)];
    const auto uc = static_cast<std::size_t>(col);
    const double b = beta(c);
    const double se = std::sqrt(sigma2 * unscaled_var(c));
    double t;
    if (se > 0.0) {
      t = b / se;
    } else {
      t = b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b);
    }
    out.coefficients[uc] = b;
    out.std_errors[uc] = se;
    out.t_stats[uc] = t;
    if (col > 0) {
      out.p_values[uc - 1] = student_t_two_sided_p(t, static_cast<double>(dof));
      out.aliased[uc - 1] = false;
    }
  }
  out.fitted.assign(fitted.data(), fitted.data() + n);
  out.metrics = prediction_metrics(y, out.fitted);
  return out;
}

std::vector<double> ols_predict(const AssessmentResult& model, const DesignMatrix& design) {
  design.validate();
  if (static_cast<std::size_t>(design.x.cols()) != model.coefficients.size()) {
    throw DomainError("design layout does not match the fitted model");
  }
  const Eigen::Map<const Eigen::VectorXd> beta(model.coefficients.data(),
                                               static_cast<Eigen::Index>(model.coefficients.size()));
  const Eigen::VectorXd yhat = design.x * beta;
  return {yhat.data(), yhat.data() + yhat.size()};
}

Metrics prediction_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DomainError("observed and predicted lengths differ");
  if (y.size() < 2) throw DomainError("metrics need at least two observations");
  const auto n = static_cast<double>(y.size());
  double sse = 0.0;
  double sae = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    sse += e * e;
    sae += std::abs(e);
    mean += y[i];
  }
  mean /= n;
  double sst = 0.0;
  for (double v : y) sst += (v - mean) * (v - mean);

  Metrics m;
  m.rmse = std::sqrt(sse / n);
  m.mae = sae / n;
  if (sst > 0.0) m.r2 = 1.0 - sse / sst;
  return m;
}

CorrelationMatrix pearson_matrix(const Eigen::MatrixXd& columns) {
  const auto k = static_cast<std::size_t>(columns.cols());
  CorrelationMatrix out;
  out.k = k;
  out.values.assign(k * k, 0.0);
  out.defined.assign(k * k, 0);
  Eigen::MatrixXd centred = columns;
  std::vector<double> norm(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto col = centred.col(static_cast<Eigen::Index>(j));
    col.array() -= col.mean();
    norm[j] = col.norm();
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (norm[i] == 0.0) continue;
    out.values[i * k + i] = 1.0;
    out.defined[i * k + i] = 1;
    for (std::size_t j = i + 1; j < k; ++j) {
      if (norm[j] == 0.0) continue;
      const double dot =
          centred.col(static_cast<Eigen::Index>(i)).dot(centred.col(static_cast<Eigen::Index>(j)));
      const double r = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      out.values[i * k + j] = out.values[j * k + i] = r;
      out.defined[i * k + j] = out.defined[j * k + i] = 1;
    }
  }
  return out;
}

CorrelationMatrix pearson_matrix(const EmbeddingMatrix& embedding) {
  const EmbeddingMatrix full = impute_mode(embedding);
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(full.rows()),
                       static_cast<Eigen::Index>(full.cols()));
  for (std::size_t i = 0; i < full.rows(); ++i) {
    for (std::size_t j = 0; j < full.cols(); ++j) {
      cols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = full.at(i, j);
    }
  }
  return pearson_matrix(cols);
}

ShapReport linear_shap(const AssessmentResult& model, const DesignMatrix& design) {
  design.validate();
  if (static_cast<std::size_t>(design.x.cols()) != model.coefficients.size() ||
      design.column_labels != model.labels) {
    throw DomainError("design layout does not match the fitted model");
  }
  if (design.x.rows() == 0) throw DomainError("SHAP needs at least one row");
  const Eigen::Index n = design.x.rows();
  const Eigen::Index p = design.x.cols() - 1;

  ShapReport out;
  out.labels = model.labels;
  out.values.resize(n, p);
  const std::vector<double> yhat = ols_predict(model, design);
  out.base_value = std::accumulate(yhat.begin(), yhat.end(), 0.0) / static_cast<double>(n);
  out.mean_abs.assign(static_cast<std::size_t>(p), 0.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double beta = model.coefficients[static_cast<std::size_t>(j + 1)];
    const auto col = design.x.col(j + 1);
    const double mean = col.mean();
    out.values.col(j) = beta * (col.array() - mean);
    out.mean_abs[static_cast<std::size_t>(j)] = out.values.col(j).cwiseAbs().mean();
  }
  out.ranking.resize(static_cast<std::size_t>(p));
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](std::size_t a, std::size_t b) {
    return out.mean_abs[a] > out.mean_abs[b];
  });
  return out;
}

std::string_view to_string(Correction c) {
  return c == Correction::bonferroni ? "bonferroni" : "none";
}

Correction correction_from_string(std::string_view s) {
  if (s == "none") return Correction::none;
  if (s == "bonferroni") return Correction::bonferroni;
  throw ValidationError("unknown multiple-testing correction '" + std::string(s) + "'");
}

PruneResult significance_prune(const AssessmentResult& result, double alpha,
                               Correction correction) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in (0, 1]");
  if (result.p_values.size() < result.hypothesis_count ||
      result.labels.size() < result.hypothesis_count) {
    throw DomainError("assessment is missing hypothesis p-values");
  }
  const double scale =
      correction == Correction::bonferroni ? static_cast<double>(result.hypothesis_count) : 1.0;
  PruneResult out;
  for (std::size_t j = 0; j < result.hypothesis_count; ++j) {
    const double p = std::min(1.0, result.p_values[j] * scale);
    if (p > alpha) {
      out.pruned_ids.push_back(result.labels[j]);
      out.pruned_indices.push_back(j);
    } else {
      out.kept_ids.push_back(result.labels[j]);
      out.kept_indices.push_back(j);
    }
  }
  out.m_pruned = out.pruned_ids.size();
  return out;
}

}  // namespace hypoloop
