#include "hypoloop/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hypoloop/errors.hpp"
#include "hypoloop/ingest.hpp"
#include "hypoloop/stats.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

using nlohmann::json;

double neg_log10_p(double p) {
  if (std::isnan(p)) return 0.0;
  return -std::log10(std::clamp(p, 1e-300, 1.0));
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

json hypotheses_document(const HypothesisSet& set) {
  json list = json::array();
  for (const auto& h : set.members()) {
    list.push_back({{"id", h.id()},
                    {"question", h.question()},
                    {"options", h.options()},
                    {"origin", to_string(h.origin())},
                    {"created_iter", h.created_iter()}});
  }
  return {{"schema_version", "hypoloop.hypotheses/1"}, {"iter", set.iter()}, {"hypotheses", list}};
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  return format_double(v);
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const Metrics& m) {
  return {{"rmse", jnum(m.rmse)}, {"mae", jnum(m.mae)}, {"r2", m.r2 ? jnum(*m.r2) : json(nullptr)}};
}

DesignMatrix take_rows(const DesignMatrix& d, const std::vector<std::size_t>& rows) {
  DesignMatrix out;
  out.column_labels = d.column_labels;
  out.hypothesis_count = d.hypothesis_count;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), d.x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = d.x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

std::vector<double> take(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

struct ReportInputs {
  const RunState& state;
  const IterationRecord& inc;
  const EmbeddingMatrix& embedding;
  Eigen::MatrixXd covariates;
  std::vector<std::size_t> train, val, test;
};

DesignMatrix design_for(const ReportInputs& in, const std::vector<std::size_t>& mode_rows) {
  const EmbeddingMatrix imputed = impute_mode(in.embedding, mode_rows);
  return make_design(imputed, in.inc.set.ids(), in.covariates, in.state.dataset.covariate_names);
}

std::string question_of(const HypothesisSet& set, const std::string& label) {
  if (auto j = set.index_of(label)) return set[*j].question();
  return label;
}

}  // namespace

ReportBundle final_report(const RunState& state) {
  const IterationRecord* inc = state.incumbent();
  if (inc == nullptr) throw ReportError("the run has no accepted iteration to report on");
  if (!state.final_embedding) {
    throw ReportError("the checkpoint has no final embedding (run did not finish)");
  }
  const DatasetSummary& ds = state.dataset;
  const std::size_t n = ds.segment_ids.size();
  const EmbeddingMatrix& emb = *state.final_embedding;
  if (emb.rows() != n || emb.cols() != inc->set.k()) {
    throw ReportError("final embedding shape does not match the incumbent set");
  }

  ReportInputs in{state, *inc, emb, {}, {}, {}, {}};
  const std::size_t c = ds.covariate_names.size();
  if (c > 0) {
    in.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        in.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            ds.covariates[i * c + j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    switch (ds.splits[i]) {
      case Split::train: in.train.push_back(i); break;
      case Split::val: in.val.push_back(i); break;
      case Split::test: in.test.push_back(i); break;
    }
  }

  const AssessmentResult& model = inc->assessment;
  const DesignMatrix design = design_for(in, in.train);
  if (design.column_labels != model.labels) {
    throw ReportError("incumbent model terms do not match the final embedding");
  }
  const std::vector<double> yhat = ols_predict(model, design);

  const auto split_metrics = [&](const std::vector<std::size_t>& rows) -> json {
    if (rows.empty()) return nullptr;
    return metrics_json(prediction_metrics(take(ds.outcome, rows), take(yhat, rows)));
  };

  ReportBundle bundle;

  // metrics.json
  std::optional<json> cv_json;
  std::string cv_csv;
  const std::size_t folds = state.settings.cv_folds;
  if (folds >= 2 && n >= folds) {
    std::vector<double> oof(n, 0.0);
    std::vector<std::size_t> fold_of(n, 0);
    const auto fold_list = kfold_splits(n, folds, state.seed);
    for (std::size_t f = 0; f < fold_list.size(); ++f) {
      const Fold& fold = fold_list[f];
      const DesignMatrix full = design_for(in, fold.train);
      AssessmentResult fit;
      try {
        fit = ols_fit(take_rows(full, fold.train), take(ds.outcome, fold.train));
      } catch (const InferenceError& e) {
        throw ReportError(std::string("cross-validation fit failed: ") + e.what());
      }
      const std::vector<double> pred = ols_predict(fit, take_rows(full, fold.test));
      for (std::size_t r = 0; r < fold.test.size(); ++r) {
        oof[fold.test[r]] = pred[r];
        fold_of[fold.test[r]] = f;
      }
    }
    cv_json = json{{"folds", folds}, {"metrics", metrics_json(prediction_metrics(ds.outcome, oof))}};
    std::ostringstream os;
    os << "#schema=hypoloop.cv_predictions.v1\n";
    os << "segment_id,split,fold,observed,predicted\n";
    for (std::size_t i = 0; i < n; ++i) {
      os << csv_field(ds.segment_ids[i]) << ',' << to_string(ds.splits[i]) << ',' << fold_of[i]
         << ',' << num(ds.outcome[i]) << ',' << num(oof[i]) << '\n';
    }
    cv_csv = os.str();
  }

  json metrics = {
      {"schema_version", "hypoloop.metrics/1"},
      {"config_hash", state.config_hash},
      {"seed", state.seed},
      {"stop_reason", state.stop_reason ? json(to_string(*state.stop_reason)) : json(nullptr)},
      {"stop_iter", state.stop_iter},
      {"iterations_recorded", state.iterations.size()},
      {"incumbent_iter", state.incumbent_iter},
      {"k", inc->set.k()},
      {"alpha", state.settings.alpha},
      {"accept_metric", state.settings.accept_metric},
      {"best_val_metric", jnum(state.best_val_metric)},
      {"counts", {{"train", in.train.size()}, {"val", in.val.size()}, {"test", in.test.size()}}},
      {"train", split_metrics(in.train)},
      {"val", split_metrics(in.val)},
      {"test", split_metrics(in.test)},
      {"cross_validation", cv_json ? *cv_json : json(nullptr)}};
  bundle.push_back({"metrics.json", metrics.dump(2) + "\n"});

  // coefficients.csv
  {
    std::ostringstream os;
    os << "#schema=hypoloop.coefficients.v1\n";
    os << "term,kind,question,coefficient,std_error,t_stat,p_value,aliased\n";
    os << "(intercept),intercept,," << num(model.coefficients[0]) << ','
       << num(model.std_errors[0]) << ',' << num(model.t_stats[0]) << ",,false\n";
    for (std::size_t j = 0; j < model.labels.size(); ++j) {
      const bool hyp = j < model.hypothesis_count;
      os << csv_field(model.labels[j]) << ',' << (hyp ? "hypothesis" : "covariate") << ','
         << csv_field(hyp ? question_of(inc->set, model.labels[j]) : "") << ','
         << num(model.coefficients[j + 1]) << ',' << num(model.std_errors[j + 1]) << ','
         << num(model.t_stats[j + 1]) << ',' << num(model.p_values[j]) << ','
         << (model.aliased[j] ? "true" : "false") << '\n';
    }
    bundle.push_back({"coefficients.csv", os.str()});
  }

  // SHAP over every row of the dataset.
  const ShapReport shap = linear_shap(model, design);
  {
    std::ostringstream os;
    os << "#schema=hypoloop.significance.v1\n";
    os << "id,question,mean_abs_shap,neg_log10_p,p_value\n";
    for (std::size_t j = 0; j < model.hypothesis_count; ++j) {
      os << model.labels[j] << ',' << csv_field(inc->set[j].question()) << ','
         << num(shap.mean_abs[j]) << ',' << num(neg_log10_p(model.p_values[j])) << ','
         << num(model.p_values[j]) << '\n';
    }
    bundle.push_back({"significance.csv", os.str()});
  }
  {
    std::ostringstream os;
    os << "#schema=hypoloop.shap_ranking.v1\n";
    os << "rank,term,question,mean_abs_shap,coefficient\n";
    for (std::size_t r = 0; r < shap.ranking.size(); ++r) {
      const std::size_t j = shap.ranking[r];
      os << (r + 1) << ',' << csv_field(shap.labels[j]) << ','
         << csv_field(j < model.hypothesis_count ? inc->set[j].question() : "") << ','
         << num(shap.mean_abs[j]) << ',' << num(model.coefficients[j + 1]) << '\n';
    }
    os << "#base_value=" << num(shap.base_value) << '\n';
    os << "#explainer=linear\n";
    bundle.push_back({"shap_ranking.csv", os.str()});
  }

  // correlation.csv
  {
    const CorrelationMatrix corr = pearson_matrix(emb);
    std::ostringstream os;
    os << "#schema=hypoloop.correlation.v1\n";
    os << "id";
    for (const auto& id : inc->set.ids()) os << ',' << id;
    os << '\n';
    for (std::size_t i = 0; i < corr.k; ++i) {
      os << inc->set[i].id();
      for (std::size_t j = 0; j < corr.k; ++j) {
        os << ',' << (corr.is_defined(i, j) ? num(corr.at(i, j)) : std::string("NA"));
      }
      os << '\n';
    }
    bundle.push_back({"correlation.csv", os.str()});
  }

  // iterations.csv
  {
    std::ostringstream os;
    os << "#schema=hypoloop.iterations.v1\n";
    os << "t,accepted,prompt_mode,attempts,m_pruned,parent_iter,set_hash,val_rmse,val_mae,val_r2\n";
    for (const auto& it : state.iterations) {
      os << it.t << ',' << (it.accepted ? "true" : "false") << ',' << to_string(it.prompt_mode)
         << ',' << it.attempts << ',' << it.m_pruned << ',' << it.parent_iter << ','
         << it.set.hash() << ',' << num(it.val_metrics.rmse) << ',' << num(it.val_metrics.mae)
         << ',' << (it.val_metrics.r2 ? num(*it.val_metrics.r2) : std::string("NA")) << '\n';
    }
    bundle.push_back({"iterations.csv", os.str()});
  }

  if (!cv_csv.empty()) bundle.push_back({"cv_predictions.csv", cv_csv});
  bundle.push_back({"hypotheses.json", hypotheses_document(inc->set).dump(2) + "\n"});
  return bundle;
}

void write_report(const std::filesystem::path& dir, const ReportBundle& bundle) {
  std::filesystem::create_directories(dir);
  for (const auto& f : bundle) write_file_atomic(dir / f.name, f.content);
}

}  // namespace hypoloop
