#include "hypoloop/loop.hpp"

#include <cmath>
#include <set>

#include "hypoloop/errors.hpp"
#include "hypoloop/rng.hpp"

namespace hypoloop {

using nlohmann::json;

std::string_view to_string(AcceptMetric m) {
  switch (m) {
    case AcceptMetric::rmse: return "rmse";
    case AcceptMetric::mae: return "mae";
    case AcceptMetric::r2: return "r2";
  }
  return "?";
}

AcceptMetric accept_metric_from_string(std::string_view s) {
  if (s == "rmse") return AcceptMetric::rmse;
  if (s == "mae") return AcceptMetric::mae;
  if (s == "r2") return AcceptMetric::r2;
  throw ConfigError("unknown accept metric '" + std::string(s) + "'");
}

double metric_value(const Metrics& m, AcceptMetric which) {
  switch (which) {
    case AcceptMetric::rmse: return m.rmse;
    case AcceptMetric::mae: return m.mae;
    case AcceptMetric::r2: return m.require_r2();
  }
  return m.rmse;
}

bool improves(double candidate, double incumbent, AcceptMetric which, double relative_epsilon) {
  const double margin = relative_epsilon * std::abs(incumbent);
  if (which == AcceptMetric::r2) return candidate > incumbent + margin;
  return candidate < incumbent - margin;
}

void LoopConfig::validate() const {
  if (k < 2) throw ConfigError("loop.k must be >= 2");
  if (max_iters < 1) throw ConfigError("loop.max_iters must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("loop.alpha must lie in (0, 1]");
  if (!(p_explore >= 0.0 && p_explore <= 1.0)) {
    throw ConfigError("loop.p_explore must lie in [0, 1]");
  }
  if (retries_per_iter < 1) throw ConfigError("loop.retries_per_iter must be >= 1");
  if (patience < 1) throw ConfigError("loop.patience must be >= 1");
  if (generation_retries < 0) throw ConfigError("loop.generation_retries must be >= 0");
  if (!(relative_epsilon >= 0.0)) throw ConfigError("loop.relative_epsilon must be >= 0");
  if (cv_folds == 1) throw ConfigError("loop.cv_folds must be 0 (off) or >= 2");
}

RunSettings LoopConfig::settings() const {
  RunSettings s;
  s.k = k;
  s.max_iters = max_iters;
  s.alpha = alpha;
  s.correction = std::string(to_string(correction));
  s.accept_metric = std::string(to_string(accept_metric));
  s.cv_folds = cv_folds;
  s.use_covariates = use_covariates;
  return s;
}

std::vector<std::string> covariate_names(const DatasetSnapshot& snapshot) {
  std::set<std::string> names;
  for (const auto& r : snapshot.records) {
    for (const auto& [name, value] : r.extra_covariates) names.insert(name);
  }
  std::vector<std::size_t> incomplete;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    if (snapshot.records[i].extra_covariates.size() != names.size()) incomplete.push_back(i + 1);
  }
  if (!incomplete.empty()) {
    throw IngestError("covariates requested but some records lack values", incomplete);
  }
  return {names.begin(), names.end()};
}

namespace {

Eigen::MatrixXd covariate_matrix(const DatasetSnapshot& snap, const std::vector<std::string>& names,
                                 const std::vector<std::size_t>& rows) {
  if (names.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cov = snap.records[rows[r]].extra_covariates;
    for (std::size_t c = 0; c < names.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov.at(names[c]);
    }
  }
  return m;
}

std::vector<double> pick(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

class Discovery {
 public:
  Discovery(const LoopConfig& config, const DatasetSnapshot& snapshot, LoopIo& io)
      : cfg_(config), snapshot_(snapshot), io_(io), fit_view_(snapshot.subset({Split::train, Split::val})) {
    train_rows_ = fit_view_.indices_of(Split::train);
    val_rows_ = fit_view_.indices_of(Split::val);
    if (train_rows_.empty() || val_rows_.empty()) {
      throw IngestError("the discovery loop needs non-empty train and validation splits");
    }
    const auto y = fit_view_.outcome();
    y_train_ = pick(y, train_rows_);
    y_val_ = pick(y, val_rows_);
    if (cfg_.use_covariates) {
      cov_names_ = covariate_names(snapshot_);
      cov_train_ = covariate_matrix(fit_view_, cov_names_, train_rows_);
      cov_val_ = covariate_matrix(fit_view_, cov_names_, val_rows_);
    }
  }

  void emit(json event) const {
    if (io_.events) io_.events(event);
  }

  Evaluation evaluate(const HypothesisSet& set, int t, int attempt) const {
    EmbedResult er = embed_dataset(fit_view_, set, io_.mllm, io_.cache, io_.embed, io_.events);
    const EmbeddingMatrix imputed = impute_mode(er.matrix, train_rows_);
    const auto train_design =
        make_design(imputed.select_rows(train_rows_), set.ids(), cov_train_, cov_names_);
    const auto val_design =
        make_design(imputed.select_rows(val_rows_), set.ids(), cov_val_, cov_names_);
    Evaluation ev;
    ev.assessment = ols_fit(train_design, y_train_);
    ev.val_metrics = prediction_metrics(y_val_, ols_predict(ev.assessment, val_design));
    ev.embedding = std::move(er.matrix);
    ev.stats = er.stats;

    json misses = json::object();
    for (std::size_t j = 0; j < set.k(); ++j) misses[set[j].id()] = er.stats.question_misses[j];
    emit({{"event", "embed"},
          {"t", t},
          {"attempt", attempt},
          {"ids", set.ids()},
          {"endpoint_calls", er.stats.endpoint_calls},
          {"row_cache_hits", er.stats.row_cache_hits},
          {"failed_images", er.stats.failed_images},
          {"missing_fraction", ev.embedding.missing_fraction()},
          {"question_misses", misses}});
    return ev;
  }

  RunState run(std::string config_hash) {
    state_.config_hash = std::move(config_hash);
    state_.settings = cfg_.settings();
    state_.seed = cfg_.seed;
    state_.dataset = snapshot_.summary();
    if (cfg_.use_covariates) {
      std::vector<std::size_t> all(snapshot_.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const Eigen::MatrixXd cov = covariate_matrix(snapshot_, cov_names_, all);
      state_.dataset.covariate_names = cov_names_;
      for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index c = 0; c < cov.cols(); ++c) state_.dataset.covariates.push_back(cov(i, c));
      }
    }
    try {
      loop();
    } catch (const GenerationError& e) {
      abort(e.what());
      throw;
    } catch (const EmbeddingCeilingError& e) {
      abort(e.what());
      throw;
    } catch (const EndpointError& e) {
      abort(e.what());
      throw;
    }
    return state_;
  }

 private:
  void checkpoint() const {
    if (io_.checkpoint) io_.checkpoint(state_);
  }

  void abort(const std::string& message) {
    state_.stop_reason = StopReason::aborted;
    state_.abort_message = message;
    emit({{"event", "abort"}, {"detail", message}});
    checkpoint();
  }

  void loop() {
    const double alpha = cfg_.alpha;
    emit({{"event", "start"}, {"k", cfg_.k}, {"max_iters", cfg_.max_iters}, {"seed", cfg_.seed}});

    GenerationRequest boot;
    boot.m_new = cfg_.k;
    boot.mode = GenerationMode::seed;
    boot.domain_context = cfg_.domain_context;
    boot.alpha = alpha;
    boot.iteration = 0;
    HypothesisSet set0(0, generate_replacements(boot, io_.llm, cfg_.generation_retries, io_.events));
    Evaluation ev0 = evaluate(set0, 0, 0);
    IterationRecord first;
    first.t = 0;
    first.set = std::move(set0);
    first.assessment = std::move(ev0.assessment);
    first.val_metrics = ev0.val_metrics;
    first.accepted = true;
    first.prompt_mode = GenerationMode::seed;
    first.attempts = 1;
    state_.iterations.push_back(std::move(first));
    state_.incumbent_iter = 0;
    state_.best_val_metric = metric_value(ev0.val_metrics, cfg_.accept_metric);
    emit({{"event", "iteration"}, {"t", 0}, {"accepted", true},
          {"val_metric", state_.best_val_metric}});
    checkpoint();

    StopReason stop = StopReason::max_iters;
    int stop_iter = cfg_.max_iters;
    int stale = 0;
    for (int t = 1; t <= cfg_.max_iters; ++t) {
      const IterationRecord inc = *state_.incumbent();
      const PruneResult prune = significance_prune(inc.assessment, alpha, cfg_.correction);
      if (prune.m_pruned == 0) {
        stop = StopReason::all_significant;
        stop_iter = t;
        break;
      }
      std::vector<Hypothesis> kept;
      for (std::size_t j : prune.kept_indices) kept.push_back(inc.set[j]);

      SplitMix64 mode_rng(derive_seed(cfg_.seed ^ rng_tag::kPromptMode, static_cast<std::uint64_t>(t)));
      IterationRecord rec;
      for (int attempt = 0; attempt < cfg_.retries_per_iter; ++attempt) {
        GenerationRequest req;
        req.prior_set = inc.set;
        req.prior_pvalues = inc.assessment.hypothesis_p_values();
        req.m_new = prune.m_pruned;
        req.mode = choose_prompt_mode(mode_rng, cfg_.p_explore);
        req.domain_context = cfg_.domain_context;
        req.alpha = alpha;
        req.iteration = t;
        req.attempt = attempt;
        std::vector<Hypothesis> members = kept;
        for (auto& h : generate_replacements(req, io_.llm, cfg_.generation_retries, io_.events)) {
          members.push_back(std::move(h));
        }
        HypothesisSet candidate(t, std::move(members));
        if (candidate.k() != cfg_.k) throw Error("candidate set size drifted from k");
        Evaluation ev = evaluate(candidate, t, attempt);
        const double score = metric_value(ev.val_metrics, cfg_.accept_metric);

        rec = IterationRecord{};
        rec.t = t;
        rec.set = std::move(candidate);
        rec.assessment = std::move(ev.assessment);
        rec.val_metrics = ev.val_metrics;
        rec.m_pruned = static_cast<int>(prune.m_pruned);
        rec.pruned_ids = prune.pruned_ids;
        rec.parent_iter = inc.t;
        rec.prompt_mode = req.mode;
        rec.attempts = attempt + 1;
        rec.accepted =
            improves(score, state_.best_val_metric, cfg_.accept_metric, cfg_.relative_epsilon);
        emit({{"event", "candidate"}, {"t", t}, {"attempt", attempt},
              {"mode", to_string(req.mode)}, {"val_metric", score},
              {"incumbent_metric", state_.best_val_metric}, {"accepted", rec.accepted}});
        if (rec.accepted) {
          state_.best_val_metric = score;
          break;
        }
      }
      state_.iterations.push_back(rec);
      if (rec.accepted) {
        state_.incumbent_iter = t;
        stale = 0;
      } else {
        ++stale;
      }
      emit({{"event", "iteration"}, {"t", t}, {"accepted", rec.accepted},
            {"m_pruned", rec.m_pruned}, {"incumbent", state_.incumbent_iter},
            {"val_metric", state_.best_val_metric}});
      checkpoint();
      if (stale >= cfg_.patience) {
        stop = StopReason::patience_exhausted;
        stop_iter = t;
        break;
      }
    }

    const IterationRecord& final_inc = *state_.incumbent();
    EmbedResult full =
        embed_dataset(snapshot_, final_inc.set, io_.mllm, io_.cache, io_.embed, io_.events);
    state_.final_embedding = std::move(full.matrix);
    state_.stop_reason = stop;
    state_.stop_iter = stop_iter;
    emit({{"event", "stop"}, {"reason", to_string(stop)}, {"t", stop_iter},
          {"incumbent", state_.incumbent_iter}});
    checkpoint();
  }

  const LoopConfig& cfg_;
  const DatasetSnapshot& snapshot_;
  LoopIo& io_;
  DatasetSnapshot fit_view_;
  std::vector<std::size_t> train_rows_;
  std::vector<std::size_t> val_rows_;
  std::vector<double> y_train_;
  std::vector<double> y_val_;
  std::vector<std::string> cov_names_;
  Eigen::MatrixXd cov_train_;
  Eigen::MatrixXd cov_val_;
  RunState state_;
};

}  // namespace

RunState run_discovery(const LoopConfig& config, const DatasetSnapshot& snapshot, LoopIo& io,
                       std::string config_hash) {
  config.validate();
  Discovery d(config, snapshot, io);
  return d.run(std::move(config_hash));
}

}  // namespace hypoloop
