#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "hypoloop/clients.hpp"
#include "hypoloop/domain.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/ingest.hpp"
#include "hypoloop/stats.hpp"
#include "hypoloop/vqa.hpp"

namespace hypoloop {

enum class AcceptMetric { rmse, mae, r2 };
std::string_view to_string(AcceptMetric m);
AcceptMetric accept_metric_from_string(std::string_view s);

double metric_value(const Metrics& m, AcceptMetric which);

// True when `candidate` beats `incumbent` by more than a relative epsilon
// (lower is better for rmse/mae, higher for r2).
bool improves(double candidate, double incumbent, AcceptMetric which, double relative_epsilon);

struct LoopConfig {
  std::size_t k = 50;
  int max_iters = 10;
  double alpha = 0.05;
  double p_explore = 0.1;
  AcceptMetric accept_metric = AcceptMetric::rmse;
  int retries_per_iter = 3;  // fresh candidate sets per iteration before carrying the incumbent
  int patience = 5;          // consecutive iterations without an accepted update
  int generation_retries = 3;
  double relative_epsilon = 1e-6;
  Correction correction = Correction::none;
  bool use_covariates = false;
  std::size_t cv_folds = 5;
  std::string domain_context = std::string(kDefaultDomainContext);
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range fields. alpha = 1 is accepted (nothing
  // can be pruned).
  void validate() const;
  RunSettings settings() const;
};

struct LoopIo {
  LlmClient& llm;
  MllmClient& mllm;
  VqaCache& cache;
  EmbedOptions embed;
  std::function<void(const RunState&)> checkpoint;  // called after every state change
  EventSink events;
};

// One embed + fit on train + score on validation.
struct Evaluation {
  EmbeddingMatrix embedding;  // rows of the train+val view
  AssessmentResult assessment;
  Metrics val_metrics;
  EmbedStats stats;
};

// Iterative hypothesis search:
//   t = 0: bootstrap k hypotheses, assess.
//   t >= 1: prune the incumbent's hypotheses with p > alpha, generate m^t
//   replacements (explore with probability p_explore), embed train+val, fit on
//   train, score on val; keep the candidate only if the validation metric
//   improves, otherwise resample up to retries_per_iter times and then carry
//   the incumbent forward.
// Stops on max_iters, when nothing is prunable, or after `patience` iterations
// without an accepted update. The incumbent set is finally embedded on every
// row. Generation failures and embedding-ceiling breaches checkpoint an
// aborted state and rethrow.
RunState run_discovery(const LoopConfig& config, const DatasetSnapshot& snapshot, LoopIo& io,
                       std::string config_hash = {});

// Covariate names (sorted) and row-major values for the given records; throws
// IngestError when a record lacks one of the names.
std::vector<std::string> covariate_names(const DatasetSnapshot& snapshot);

}  // namespace hypoloop
