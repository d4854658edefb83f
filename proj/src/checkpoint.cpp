#include "hypoloop/checkpoint.hpp"

#include <cmath>
#include <limits>

#include "hypoloop/errors.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

using nlohmann::json;

namespace {

// JSON has no inf/nan; encode them as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double to_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw CheckpointError("expected a number, got " + j.dump());
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::vector<double> to_nums(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(to_num(x));
  return out;
}

json metrics_to_json(const Metrics& m) {
  return {{"rmse", num(m.rmse)}, {"mae", num(m.mae)}, {"r2", m.r2 ? num(*m.r2) : json(nullptr)}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.rmse = to_num(j.at("rmse"));
  m.mae = to_num(j.at("mae"));
  if (!j.at("r2").is_null()) m.r2 = to_num(j.at("r2"));
  return m;
}

json set_to_json(const HypothesisSet& s) {
  json members = json::array();
  for (const auto& h : s.members()) members.push_back(hypothesis_to_json(h));
  return {{"iter", s.iter()}, {"members", members}};
}

HypothesisSet set_from_json(const json& j) {
  std::vector<Hypothesis> members;
  for (const auto& h : j.at("members")) members.push_back(hypothesis_from_json(h));
  return HypothesisSet(j.at("iter").get<int>(), std::move(members));
}

json assessment_to_json(const AssessmentResult& a) {
  return {{"labels", a.labels},
          {"hypothesis_count", a.hypothesis_count},
          {"coefficients", nums(a.coefficients)},
          {"std_errors", nums(a.std_errors)},
          {"t_stats", nums(a.t_stats)},
          {"p_values", nums(a.p_values)},
          {"aliased", a.aliased},
          {"metrics", metrics_to_json(a.metrics)},
          {"dof", a.dof},
          {"rank", a.rank}};
}

AssessmentResult assessment_from_json(const json& j) {
  AssessmentResult a;
  a.labels = j.at("labels").get<std::vector<std::string>>();
  a.hypothesis_count = j.at("hypothesis_count").get<std::size_t>();
  a.coefficients = to_nums(j.at("coefficients"));
  a.std_errors = to_nums(j.at("std_errors"));
  a.t_stats = to_nums(j.at("t_stats"));
  a.p_values = to_nums(j.at("p_values"));
  a.aliased = j.at("aliased").get<std::vector<bool>>();
  a.metrics = metrics_from_json(j.at("metrics"));
  a.dof = j.at("dof").get<int>();
  a.rank = j.at("rank").get<int>();
  const std::size_t p = a.labels.size();
  if (a.coefficients.size() != p + 1 || a.std_errors.size() != p + 1 ||
      a.t_stats.size() != p + 1 || a.p_values.size() != p || a.aliased.size() != p ||
      a.hypothesis_count > p) {
    throw CheckpointError("assessment arrays have inconsistent lengths");
  }
  return a;
}

json embedding_to_json(const EmbeddingMatrix& e) {
  json rows = json::array();
  for (std::size_t i = 0; i < e.rows(); ++i) rows.push_back(e.row_string(i));
  return {{"set_id", e.set_id()}, {"rows", e.rows()}, {"cols", e.cols()}, {"data", rows}};
}

EmbeddingMatrix embedding_from_json(const json& j) {
  EmbeddingMatrix e(j.at("set_id").get<std::string>(), j.at("rows").get<std::size_t>(),
                    j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != e.rows()) throw CheckpointError("embedding row count mismatch");
  for (std::size_t i = 0; i < e.rows(); ++i) e.set_row_from_string(i, data[i].get<std::string>());
  return e;
}

json iteration_to_json(const IterationRecord& r) {
  return {{"t", r.t},
          {"set", set_to_json(r.set)},
          {"assessment", assessment_to_json(r.assessment)},
          {"val_metrics", metrics_to_json(r.val_metrics)},
          {"accepted", r.accepted},
          {"m_pruned", r.m_pruned},
          {"pruned_ids", r.pruned_ids},
          {"parent_iter", r.parent_iter},
          {"prompt_mode", to_string(r.prompt_mode)},
          {"attempts", r.attempts}};
}

IterationRecord iteration_from_json(const json& j) {
  IterationRecord r;
  r.t = j.at("t").get<int>();
  r.set = set_from_json(j.at("set"));
  r.assessment = assessment_from_json(j.at("assessment"));
  r.val_metrics = metrics_from_json(j.at("val_metrics"));
  r.accepted = j.at("accepted").get<bool>();
  r.m_pruned = j.at("m_pruned").get<int>();
  r.pruned_ids = j.at("pruned_ids").get<std::vector<std::string>>();
  r.parent_iter = j.at("parent_iter").get<int>();
  r.prompt_mode = generation_mode_from_string(j.at("prompt_mode").get<std::string>());
  r.attempts = j.at("attempts").get<int>();
  return r;
}

json dataset_to_json(const DatasetSummary& d) {
  json splits = json::array();
  for (Split s : d.splits) splits.push_back(to_string(s));
  return {{"manifest_hash", d.manifest_hash},   {"segment_ids", d.segment_ids},
          {"outcome", nums(d.outcome)},         {"splits", splits},
          {"covariate_names", d.covariate_names}, {"covariates", nums(d.covariates)}};
}

DatasetSummary dataset_from_json(const json& j) {
  DatasetSummary d;
  d.manifest_hash = j.at("manifest_hash").get<std::string>();
  d.segment_ids = j.at("segment_ids").get<std::vector<std::string>>();
  d.outcome = to_nums(j.at("outcome"));
  for (const auto& s : j.at("splits")) d.splits.push_back(split_from_string(s.get<std::string>()));
  d.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
  d.covariates = to_nums(j.at("covariates"));
  const std::size_t n = d.segment_ids.size();
  if (d.outcome.size() != n || d.splits.size() != n ||
      d.covariates.size() != n * d.covariate_names.size()) {
    throw CheckpointError("dataset summary arrays have inconsistent lengths");
  }
  return d;
}

json settings_to_json(const RunSettings& s) {
  return {{"k", s.k},
          {"max_iters", s.max_iters},
          {"alpha", num(s.alpha)},
          {"correction", s.correction},
          {"accept_metric", s.accept_metric},
          {"cv_folds", s.cv_folds},
          {"use_covariates", s.use_covariates}};
}

RunSettings settings_from_json(const json& j) {
  RunSettings s;
  s.k = j.at("k").get<std::size_t>();
  s.max_iters = j.at("max_iters").get<int>();
  s.alpha = to_num(j.at("alpha"));
  s.correction = j.at("correction").get<std::string>();
  s.accept_metric = j.at("accept_metric").get<std::string>();
  s.cv_folds = j.at("cv_folds").get<std::size_t>();
  s.use_covariates = j.at("use_covariates").get<bool>();
  return s;
}

}  // namespace

json hypothesis_to_json(const Hypothesis& h) {
  return {{"id", h.id()},
          {"question", h.question()},
          {"options", h.options()},
          {"origin", to_string(h.origin())},
          {"created_iter", h.created_iter()}};
}

Hypothesis hypothesis_from_json(const json& j) {
  Hypothesis h = Hypothesis::make(j.at("question").get<std::string>(),
                                  j.at("options").get<std::vector<std::string>>(),
                                  generation_mode_from_string(j.at("origin").get<std::string>()),
                                  j.at("created_iter").get<int>());
  if (j.contains("id") && j.at("id").get<std::string>() != h.id()) {
    throw CheckpointError("hypothesis id does not match its question: " + h.question());
  }
  return h;
}

json state_to_json(const RunState& s) {
  json iterations = json::array();
  for (const auto& it : s.iterations) iterations.push_back(iteration_to_json(it));
  return {{"config_hash", s.config_hash},
          {"settings", settings_to_json(s.settings)},
          {"seed", s.seed},
          {"iterations", iterations},
          {"incumbent_iter", s.incumbent_iter},
          {"best_val_metric", num(s.best_val_metric)},
          {"stop_reason", s.stop_reason ? json(to_string(*s.stop_reason)) : json(nullptr)},
          {"stop_iter", s.stop_iter},
          {"abort_message", s.abort_message},
          {"dataset", dataset_to_json(s.dataset)},
          {"final_embedding",
           s.final_embedding ? embedding_to_json(*s.final_embedding) : json(nullptr)}};
}

RunState state_from_json(const json& j) {
  RunState s;
  s.config_hash = j.at("config_hash").get<std::string>();
  s.settings = settings_from_json(j.at("settings"));
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& it : j.at("iterations")) s.iterations.push_back(iteration_from_json(it));
  s.incumbent_iter = j.at("incumbent_iter").get<int>();
  s.best_val_metric = to_num(j.at("best_val_metric"));
  if (!j.at("stop_reason").is_null()) {
    s.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
  }
  s.stop_iter = j.at("stop_iter").get<int>();
  s.abort_message = j.at("abort_message").get<std::string>();
  s.dataset = dataset_from_json(j.at("dataset"));
  if (!j.at("final_embedding").is_null()) {
    s.final_embedding = embedding_from_json(j.at("final_embedding"));
    if (s.final_embedding->rows() != s.dataset.segment_ids.size()) {
      throw CheckpointError("final embedding does not cover the dataset");
    }
  }
  return s;
}

std::string serialize_state(const RunState& state) {
  const json body = state_to_json(state);
  const std::string dumped = body.dump();
  json doc;
  doc["schema_version"] = kStateSchema;
  doc["sha256"] = sha256_hex(dumped);
  doc["state"] = body;
  return doc.dump(1) + "\n";
}

RunState deserialize_state(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema_version")) {
    throw CheckpointError("checkpoint has no schema_version (expected " +
                          std::string(kStateSchema) + ")");
  }
  const json& version = doc.at("schema_version");
  if (!version.is_string() || version.get<std::string>() != kStateSchema) {
    throw CheckpointError("unsupported checkpoint schema_version " + version.dump() +
                          " (expected " + std::string(kStateSchema) + ")");
  }
  if (!doc.contains("state") || !doc.contains("sha256") || !doc.at("sha256").is_string()) {
    throw CheckpointError("checkpoint " + std::string(kStateSchema) +
                          " is missing the state or sha256 field");
  }
  const std::string digest = sha256_hex(doc.at("state").dump());
  if (digest != doc.at("sha256").get<std::string>()) {
    throw CheckpointError("checkpoint integrity check failed: sha256 mismatch");
  }
  try {
    return state_from_json(doc.at("state"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint (") + std::string(kStateSchema) +
                          "): " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const RunState& state) {
  write_file_atomic(path, serialize_state(state));
}

RunState load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw CheckpointError("no checkpoint at " + path.string());
  }
  return deserialize_state(read_file(path));
}

EventLog::EventLog(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error("cannot open event log " + path.string());
}

void EventLog::write(const json& event) {
  std::lock_guard lock(mutex_);
  json line = event;
  line["seq"] = seq_++;
  out_ << line.dump() << '\n';
  out_.flush();
}

std::uint64_t EventLog::count() const {
  std::lock_guard lock(mutex_);
  return seq_;
}

}  // namespace hypoloop
