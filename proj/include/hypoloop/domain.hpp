#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hypoloop {

// Which prompt produced a hypothesis (or an iteration's candidates).
enum class GenerationMode { seed, exploit, explore };

std::string_view to_string(GenerationMode mode);
GenerationMode generation_mode_from_string(std::string_view s);

// Lowercases, collapses runs of whitespace to one space, strips trailing
// punctuation. Idempotent. Throws ValidationError on empty-after-trim input.
std::string normalize_question(std::string_view text);

// One natural-language question with a closed answer list. The id is a
// content hash of the normalized question, so regenerating the same question
// always yields the same id.
class Hypothesis {
 public:
  static Hypothesis make(std::string_view question,
                         std::vector<std::string> options = default_options(),
                         GenerationMode origin = GenerationMode::seed, int created_iter = 0);

  static std::vector<std::string> default_options() { return {"no", "yes"}; }
  static std::string id_for(std::string_view question);

  const std::string& id() const { return id_; }
  const std::string& question() const { return question_; }
  const std::string& canonical() const { return canonical_; }
  const std::vector<std::string>& options() const { return options_; }
  GenerationMode origin() const { return origin_; }
  int created_iter() const { return created_iter_; }

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;

 private:
  Hypothesis() = default;

  std::string id_;
  std::string question_;
  std::string canonical_;
  std::vector<std::string> options_;
  GenerationMode origin_ = GenerationMode::seed;
  int created_iter_ = 0;
};

// Ordered working set H^t. Member ids (hence normalized questions) are unique.
class HypothesisSet {
 public:
  HypothesisSet() = default;
  HypothesisSet(int iter, std::vector<Hypothesis> members);

  int iter() const { return iter_; }
  std::size_t k() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const std::vector<Hypothesis>& members() const { return members_; }
  const Hypothesis& operator[](std::size_t j) const { return members_[j]; }

  std::vector<std::string> ids() const;
  bool contains_question(std::string_view question) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  // Hash over question texts and option lists in order; changes whenever any
  // question, option, or the ordering changes.
  std::string hash() const;

  friend bool operator==(const HypothesisSet&, const HypothesisSet&) = default;

 private:
  int iter_ = 0;
  std::vector<Hypothesis> members_;
};

enum class Split { train, val, test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

struct CrashInputs {
  double no_crash = 0.0;   // annual average crash count
  double aadt = 0.0;       // average annual daily traffic
  double length_km = 0.0;  // segment length

  friend bool operator==(const CrashInputs&, const CrashInputs&) = default;
};

struct SegmentRecord {
  std::string segment_id;
  std::string image_ref;
  std::optional<CrashInputs> inputs;  // absent when the manifest gave crash_rate directly
  double crash_rate = 0.0;
  Split split = Split::train;
  std::map<std::string, double> extra_covariates;

  friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

// n x k answers; entry (i, j) is the 0-based option index picked for
// hypothesis j on image i, or missing.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::string set_id, std::size_t rows, std::size_t cols);

  const std::string& set_id() const { return set_id_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool is_missing(std::size_t i, std::size_t j) const { return missing_[i * cols_ + j] != 0; }
  int at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  void set(std::size_t i, std::size_t j, int value);
  void set_missing(std::size_t i, std::size_t j);

  std::size_t missing_count() const;
  double missing_fraction() const;

  // Throws DomainError unless every present value is within its option range.
  void validate(const HypothesisSet& set) const;

  // Rows in the given order (used for split views).
  EmbeddingMatrix select_rows(const std::vector<std::size_t>& rows) const;

  // Serialized row: comma-separated indices with '?' for missing.
  std::string row_string(std::size_t i) const;
  void set_row_from_string(std::size_t i, std::string_view row);

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::string set_id_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<int> values_;
  std::vector<std::uint8_t> missing_;
};

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> r2;  // undefined when the observed outcome is constant

  double require_r2() const;
};

// Output of one OLS assessment. Column 0 of `coefficients` is the intercept;
// the remaining entries align with `labels` (hypothesis ids first, then any
// covariate names).
struct AssessmentResult {
  std::vector<std::string> labels;
  std::size_t hypothesis_count = 0;
  std::vector<double> coefficients;  // size labels+1
  std::vector<double> std_errors;    // size labels+1, NaN for aliased columns
  std::vector<double> t_stats;       // size labels+1
  std::vector<double> p_values;      // size labels, two-sided, in [0, 1]
  std::vector<bool> aliased;         // size labels
  std::vector<double> fitted;
  Metrics metrics;
  int dof = 0;
  int rank = 0;

  // p-values of the hypothesis columns only.
  std::vector<double> hypothesis_p_values() const;
};

enum class StopReason { max_iters, all_significant, patience_exhausted, aborted };
std::string_view to_string(StopReason reason);
StopReason stop_reason_from_string(std::string_view s);

struct IterationRecord {
  int t = 0;
  HypothesisSet set;
  AssessmentResult assessment;
  Metrics val_metrics;
  bool accepted = false;
  int m_pruned = 0;
  std::vector<std::string> pruned_ids;
  int parent_iter = -1;  // iteration whose assessment drove the pruning
  GenerationMode prompt_mode = GenerationMode::seed;
  int attempts = 0;
};

// Outcome and split per row, enough to rebuild reports without the manifest.
struct DatasetSummary {
  std::string manifest_hash;
  std::vector<std::string> segment_ids;
  std::vector<double> outcome;
  std::vector<Split> splits;
  // Extra covariates (row-major rows x names), present only when the run used them.
  std::vector<std::string> covariate_names;
  std::vector<double> covariates;
};

// Loop settings the report needs to reproduce its tables from a checkpoint.
struct RunSettings {
  std::size_t k = 0;
  int max_iters = 0;
  double alpha = 0.05;
  std::string correction = "none";
  std::string accept_metric = "rmse";
  std::size_t cv_folds = 5;
  bool use_covariates = false;
};

struct RunState {
  std::string config_hash;
  RunSettings settings;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> iterations;
  int incumbent_iter = -1;
  double best_val_metric = 0.0;
  std::optional<StopReason> stop_reason;
  int stop_iter = 0;
  std::string abort_message;
  DatasetSummary dataset;
  // Incumbent set answered on every row (all splits), filled when the run ends.
  std::optional<EmbeddingMatrix> final_embedding;

  const IterationRecord* incumbent() const;
};

}  // namespace hypoloop
