#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypoloop/domain.hpp"

namespace hypoloop {

struct ReportFile {
  std::string name;
  std::string content;
};

// Files in a fixed order. CSV files start with "#schema=hypoloop.<name>.v1";
// JSON documents carry a top-level "schema_version".
using ReportBundle = std::vector<ReportFile>;

// -log10(p) with p clamped to [1e-300, 1].
double neg_log10_p(double p);

// Builds the report from a checkpointed state only: no endpoint calls and no
// randomness beyond the seeded fold assignment, so the output is a pure
// function of the state. Throws ReportError when there is no accepted
// iteration or no final embedding.
//
//   metrics.json        train/val/test metrics of the incumbent model, run summary
//   coefficients.csv    per-term coefficient, std error, t, p
//   significance.csv    mean |SHAP| against -log10 p per hypothesis
//   shap_ranking.csv    predictors by mean |SHAP|
//   correlation.csv     k x k Pearson matrix of the answers
//   iterations.csv      one line per recorded iteration
//   cv_predictions.csv  out-of-fold predictions per segment (when cv_folds >= 2)
//   hypotheses.json     the incumbent set
ReportBundle final_report(const RunState& state);

void write_report(const std::filesystem::path& dir, const ReportBundle& bundle);

// CSV field quoting (RFC 4180).
std::string csv_field(std::string_view s);

nlohmann::json hypotheses_document(const HypothesisSet& set);

}  // namespace hypoloop
