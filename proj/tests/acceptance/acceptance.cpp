// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hypoloop/checkpoint.hpp"
#include "hypoloop/errors.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/ingest.hpp"
#include "hypoloop/loop.hpp"
#include "hypoloop/report.hpp"
#include "hypoloop/stats.hpp"
#include "hypoloop/synth.hpp"
#include "hypoloop/util.hpp"
#include "hypoloop/vqa.hpp"
#include "oracles.hpp"

using namespace hypoloop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << "failed: " << what;
      pass = false;
    }
  }
};

DesignMatrix design_from(const oracle::Matrix& rows) {
  DesignMatrix d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(rows[0].size());
  d.x.resize(n, p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.x(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      d.x(i, j + 1) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) d.column_labels.push_back("x" + std::to_string(j));
  d.hypothesis_count = static_cast<std::size_t>(p);
  return d;
}

struct Instance {
  oracle::Matrix features;
  std::vector<double> y;
};

Instance random_instance(std::uint64_t seed, std::size_t n, std::size_t k) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Instance in;
  std::vector<double> beta(k + 1);
  for (auto& b : beta) b = 3.0 * normal(gen);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(k);
    double yi = beta[0];
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = normal(gen) * (1.0 + static_cast<double>(j)) + 0.5 * static_cast<double>(j);
      yi += beta[j + 1] * row[j];
    }
    in.features.push_back(row);
    in.y.push_back(yi + normal(gen));
  }
  return in;
}

oracle::Matrix with_intercept(const oracle::Matrix& f) {
  oracle::Matrix x;
  for (const auto& r : f) {
    std::vector<double> row = {1.0};
    row.insert(row.end(), r.begin(), r.end());
    x.push_back(row);
  }
  return x;
}

// ---------------------------------------------------------------------------

Outcome stats_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_coef = 0.0;
  double worst_orth = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto in = random_instance(seed, 50, 4);
    const auto fit = ols_fit(design_from(in.features), in.y);
    const auto want = oracle::normal_equations(with_intercept(in.features), in.y);
    for (std::size_t j = 0; j < want.size(); ++j) {
      worst_coef = std::max(worst_coef, std::abs(fit.coefficients[j] - want[j]));
    }
    const auto x = with_intercept(in.features);
    for (std::size_t a = 0; a < x[0].size(); ++a) {
      double dot = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) dot += x[i][a] * (in.y[i] - fit.fitted[i]);
      worst_orth = std::max(worst_orth, std::abs(dot));
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst_coef < 1e-8, "coefficient error " + format_double(worst_coef));
  o.require(worst_orth < 1e-8, "|X'r|_inf " + format_double(worst_orth));
  o.require(secs < 5.0, "runtime " + format_fixed(secs, 2) + " s");
  o.detail << (o.pass ? "" : "; ") << "max |beta - oracle| = " << format_double(worst_coef)
           << ", max |X'r| = " << format_double(worst_orth) << ", " << format_fixed(secs, 3)
           << " s";
  return o;
}

Outcome t_distribution() {
  Outcome o;
  const double lib = student_t_two_sided_p(2.0, 10.0);
  const double ref = oracle::t_two_sided_p(2.0, 10.0);
  o.require(std::abs(ref - 0.07339) <= 1e-4, "oracle p " + format_double(ref));
  o.require(std::abs(lib - 0.07339) <= 1e-4, "library p " + format_double(lib));
  o.require(std::abs(lib - ref) <= 1e-4, "library vs oracle");
  bool symmetric = true;
  for (double t = -8.0; t <= 8.0; t += 0.37) {
    for (double dof : {1.0, 2.5, 10.0, 100.0}) {
      symmetric &= student_t_two_sided_p(t, dof) == student_t_two_sided_p(-t, dof);
    }
  }
  o.require(symmetric, "p(t) == p(-t)");
  o.require(student_t_two_sided_p(0.0, 10.0) == 1.0, "p(0) == 1");
  o.detail << (o.pass ? "" : "; ") << "p(2, 10) = " << format_fixed(lib, 8) << ", oracle "
           << format_fixed(ref, 8);
  return o;
}

Outcome linear_shap_check() {
  Outcome o;
  double worst_local = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto in = random_instance(1000 + seed, 50, 4);
    const auto d = design_from(in.features);
    const auto model = ols_fit(d, in.y);
    const auto shap = linear_shap(model, d);
    const auto yhat = ols_predict(model, d);
    double mean = 0.0;
    for (double v : yhat) mean += v / static_cast<double>(yhat.size());
    for (Eigen::Index i = 0; i < shap.values.rows(); ++i) {
      const double total = shap.values.row(i).sum();
      worst_local = std::max(worst_local, std::abs(total - (yhat[static_cast<std::size_t>(i)] - mean)));
    }
  }
  o.require(worst_local < 1e-9, "local accuracy " + format_double(worst_local));

  // Model fitted elsewhere; attributions on a 3-feature, 4-row instance whose
  // own column means are the background.
  const auto train = random_instance(77, 50, 3);
  const auto model = ols_fit(design_from(train.features), train.y);
  const oracle::Matrix rows = {{0.5, -1.0, 2.0}, {1.5, 0.0, -0.5}, {-2.0, 3.0, 1.0}, {0.0, 1.0, 0.25}};
  const auto shap = linear_shap(model, design_from(rows));
  std::vector<double> means(3, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < 3; ++j) means[j] += r[j] / 4.0;
  }
  double worst_enum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto phi = oracle::shapley_enumerate(model.coefficients, rows[i], means);
    for (std::size_t j = 0; j < 3; ++j) {
      worst_enum = std::max(worst_enum, std::abs(shap.values(static_cast<Eigen::Index>(i),
                                                             static_cast<Eigen::Index>(j)) - phi[j]));
    }
  }
  o.require(worst_enum < 1e-9, "enumeration mismatch " + format_double(worst_enum));
  o.detail << (o.pass ? "" : "; ") << "local accuracy err " << format_double(worst_local)
           << ", enumeration err " << format_double(worst_enum);
  return o;
}

Outcome metric_definitions() {
  Outcome o;
  const auto m = prediction_metrics(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2});
  o.require(std::abs(m.rmse - 0.8164966) <= 1e-6, "rmse " + format_double(m.rmse));
  o.require(std::abs(m.mae - 0.6666667) <= 1e-6, "mae " + format_double(m.mae));
  o.require(m.r2.has_value() && std::abs(*m.r2) <= 1e-9, "r2");
  o.detail << (o.pass ? "" : "; ") << "rmse " << format_fixed(m.rmse, 7) << ", mae "
           << format_fixed(m.mae, 7) << ", r2 " << (m.r2 ? format_double(*m.r2) : "NA");
  return o;
}

Outcome crash_rate() {
  Outcome o;
  const double cr = compute_crash_rate(10, 10000, 2.0);
  o.require(std::abs(cr - 1.3698630137) <= 1e-9, "CR " + format_double(cr));
  o.require(compute_crash_rate(0, 10000, 2.0) == 0.0, "zero crashes");
  o.detail << (o.pass ? "" : "; ") << "CR(10, 10000, 2.0) = " << format_fixed(cr, 10);
  return o;
}

// ---------------------------------------------------------------------------
// Synthetic discovery runs shared by criteria 6-8.

struct SynthRun {
  std::uint64_t seed = 0;
  SyntheticWorld world;
  LoopConfig config;
  RunState state;
  std::vector<std::string> checkpoints;
  json metrics;
  double seconds = 0.0;
};

LoopConfig recovery_config(std::uint64_t seed) {
  LoopConfig c;
  c.k = 12;
  c.max_iters = 10;
  c.alpha = 0.05;
  c.seed = seed;
  return c;
}

SynthRun synth_run(std::uint64_t seed, const LoopConfig& config) {
  SynthRun r;
  r.seed = seed;
  r.world = default_world(seed);
  r.config = config;
  const auto t0 = Clock::now();
  const GeneratedWorld g = generate_world(r.world);
  MockMllmClient mllm(g, r.world.flip_prob, r.world.seed);
  MockLlmClient llm(r.world, 0.5, config.seed);
  MemoryVqaCache cache;
  LoopIo io{llm, mllm, cache, {}, [&](const RunState& s) { r.checkpoints.push_back(serialize_state(s)); },
            {}};
  r.state = run_discovery(config, g.snapshot, io, "acceptance");
  r.seconds = seconds_since(t0);
  for (const auto& f : final_report(r.state)) {
    if (f.name == "metrics.json") r.metrics = json::parse(f.content);
  }
  return r;
}

std::vector<SynthRun> parallel_runs(const std::vector<std::uint64_t>& seeds) {
  std::vector<std::future<SynthRun>> jobs;
  for (auto s : seeds) jobs.push_back(std::async(std::launch::async, [s] { return synth_run(s, recovery_config(s)); }));
  std::vector<SynthRun> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

struct Recovery {
  std::size_t found = 0;
  std::size_t wrong_sign = 0;
};

Recovery recovery_of(const SynthRun& r) {
  Recovery rec;
  const IterationRecord& inc = *r.state.incumbent();
  TruthTable truth;
  for (std::size_t f = 0; f < r.world.true_factors.size(); ++f) {
    truth.factor_of_question.emplace(normalize_question(r.world.true_factors[f].question), f);
  }
  for (std::size_t j = 0; j < inc.set.k(); ++j) {
    const auto f = truth.factor_index(inc.set[j].question());
    if (!f) continue;
    ++rec.found;
    const double beta = inc.assessment.coefficients[j + 1];
    if ((beta > 0) != (r.world.true_factors[*f].coefficient > 0)) ++rec.wrong_sign;
  }
  return rec;
}

Outcome ground_truth_recovery(const std::vector<SynthRun>& runs, double wall) {
  Outcome o;
  std::size_t good_seeds = 0;
  std::size_t wrong_sign = 0;
  double r2_sum = 0.0;
  double ceiling = 0.0;
  std::ostringstream per_seed;
  for (const auto& r : runs) {
    const Recovery rec = recovery_of(r);
    if (rec.found >= 7) ++good_seeds;
    wrong_sign += rec.wrong_sign;
    const double r2 = r.metrics["test"]["r2"].get<double>();
    r2_sum += r2;
    ceiling = noise_ceiling_r2(r.world);
    per_seed << " seed" << r.seed << ":" << rec.found << "/8,R2=" << format_fixed(r2, 3);
    o.require(std::abs(r2 - ceiling) <= 0.1,
              "seed " + std::to_string(r.seed) + " test R2 " + format_fixed(r2, 3));
  }
  const double mean_r2 = r2_sum / static_cast<double>(runs.size());
  o.require(good_seeds >= 4, std::to_string(good_seeds) + "/5 seeds with >= 7/8 factors");
  o.require(wrong_sign == 0, std::to_string(wrong_sign) + " recovered coefficients with the wrong sign");
  o.require(std::abs(mean_r2 - ceiling) <= 0.1, "mean test R2");
  o.require(wall < 60.0, "runtime " + format_fixed(wall, 1) + " s");
  o.detail << (o.pass ? "" : "; ") << good_seeds << "/5 seeds >= 7/8," << per_seed.str()
           << ", mean R2 " << format_fixed(mean_r2, 3) << " vs ceiling " << format_fixed(ceiling, 3)
           << ", " << format_fixed(wall, 1) << " s";
  return o;
}

Outcome independence(const std::vector<SynthRun>& runs) {
  Outcome o;
  double worst = 1.0;
  for (const auto& r : runs) {
    const CorrelationMatrix c = pearson_matrix(*r.state.final_embedding);
    std::size_t pairs = 0;
    std::size_t low = 0;
    for (std::size_t i = 0; i < c.k; ++i) {
      for (std::size_t j = i + 1; j < c.k; ++j) {
        ++pairs;
        if (c.is_defined(i, j) && std::abs(c.at(i, j)) < 0.2) ++low;
      }
    }
    const double frac = static_cast<double>(low) / static_cast<double>(pairs);
    worst = std::min(worst, frac);
    o.require(frac >= 0.85, "seed " + std::to_string(r.seed) + " fraction " + format_fixed(frac, 3));
  }
  o.detail << (o.pass ? "" : "; ") << "min fraction of pairs with |r| < 0.2: " << format_fixed(worst, 3);
  return o;
}

Outcome invariants(const std::vector<SynthRun>& runs) {
  Outcome o;
  std::size_t audited = 0;
  for (const auto& r : runs) {
    const auto& its = r.state.iterations;
    const std::string tag = "seed " + std::to_string(r.seed);
    double last_rmse = std::numeric_limits<double>::infinity();
    for (const auto& rec : its) {
      ++audited;
      o.require(rec.set.k() == r.config.k, tag + " |H| at t=" + std::to_string(rec.t));
      if (rec.t > 0) {
        const auto& parent = its[static_cast<std::size_t>(rec.parent_iter)];
        for (const auto& id : rec.pruned_ids) {
          const auto j = parent.set.index_of(id);
          o.require(j && parent.assessment.p_values[*j] > r.config.alpha,
                    tag + " pruned " + id + " at t=" + std::to_string(rec.t));
        }
      }
      if (rec.accepted) {
        o.require(rec.val_metrics.rmse <= last_rmse, tag + " incumbent RMSE worsened");
        last_rmse = rec.val_metrics.rmse;
      }
    }
  }

  // Replay every seed and compare each checkpoint write.
  std::vector<std::future<SynthRun>> replays;
  for (const auto& r : runs) {
    replays.push_back(std::async(std::launch::async, [&r] { return synth_run(r.seed, r.config); }));
  }
  std::size_t identical = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const SynthRun again = replays[i].get();
    if (again.checkpoints == runs[i].checkpoints) ++identical;
  }
  o.require(identical == runs.size(), "replay differs");
  o.detail << (o.pass ? "" : "; ") << audited << " iterations audited, " << identical << "/"
           << runs.size() << " replays byte-identical";
  return o;
}

// ---------------------------------------------------------------------------

HypothesisSet golden_prior_set() {
  return HypothesisSet(2, {Hypothesis::make("Is there a marked crosswalk visible?"),
                           Hypothesis::make("Are there trees lining the street?"),
                           Hypothesis::make("How many travel lanes are there?",
                                            {"one", "two", "three or more"}),
                           Hypothesis::make("Is there a bus stop visible?"),
                           Hypothesis::make("Is the sidewalk wider than two meters?")});
}

Outcome prompt_fidelity() {
  Outcome o;
  const fs::path golden = fs::path(HYPOLOOP_SOURCE_DIR) / "tests" / "golden";
  const auto matches = [&](const std::string& name, const std::string& text) {
    const bool ok = fs::exists(golden / name) && read_file(golden / name) == text;
    o.require(ok, "golden " + name);
  };
  GenerationRequest req;
  req.prior_set = golden_prior_set();
  req.prior_pvalues = {0.0001, 0.4321, 0.05, 0.0499, 0.73};
  req.m_new = 3;
  req.mode = GenerationMode::exploit;
  req.iteration = 3;
  matches("hypo_exploit_m3.txt", render_prompt(req));
  req.mode = GenerationMode::explore;
  matches("hypo_explore_m3.txt", render_prompt(req));
  GenerationRequest seed;
  seed.m_new = 50;
  seed.mode = GenerationMode::seed;
  matches("hypo_seed_k50.txt", render_prompt(seed));
  const HypothesisSet pair(0, {Hypothesis::make("Is there a marked crosswalk visible?"),
                               Hypothesis::make("How many travel lanes are there?",
                                                {"one", "two", "three or more"})});
  matches("emb_batch_k2.txt", render_batch_prompt(pair));
  matches("emb_single.txt", render_single_prompt(pair[1]));

  // Every (question, p) pair appears on one line of the exploit prompt.
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t pairs = 0;
  bool all_present = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + gen() % 40;
    std::vector<Hypothesis> members;
    std::vector<double> ps;
    for (std::size_t j = 0; j < k; ++j) {
      members.push_back(Hypothesis::make("Is object " + std::to_string(trial) + "-" +
                                         std::to_string(j) + " visible?"));
      ps.push_back(j % 7 == 0 ? 0.0 : unif(gen));
    }
    GenerationRequest r;
    r.prior_set = HypothesisSet(1, members);
    r.prior_pvalues = ps;
    r.m_new = 1 + gen() % k;
    r.mode = GenerationMode::exploit;
    const std::string prompt = render_prompt(r);
    std::istringstream lines(prompt);
    std::vector<std::string> all;
    for (std::string line; std::getline(lines, line);) all.push_back(line);
    for (std::size_t j = 0; j < k; ++j) {
      ++pairs;
      const std::string q = members[j].question();
      const std::string p = "p=" + format_fixed(ps[j], 4);
      const bool found = std::any_of(all.begin(), all.end(), [&](const std::string& l) {
        return l.find(q) != std::string::npos && l.find(p) != std::string::npos;
      });
      all_present &= found;
    }
  }
  o.require(all_present, "exploit prompt lost a (question, p) pair");

  // Explore rate with the loop's own per-iteration draw.
  std::size_t explore = 0;
  const std::size_t draws = 10000;
  for (std::size_t t = 1; t <= draws; ++t) {
    SplitMix64 rng(derive_seed(12345 ^ rng_tag::kPromptMode, t));
    explore += choose_prompt_mode(rng, 0.1) == GenerationMode::explore;
  }
  const double rate = static_cast<double>(explore) / static_cast<double>(draws);
  o.require(rate >= 0.08 && rate <= 0.12, "explore rate " + format_fixed(rate, 4));
  o.detail << (o.pass ? "" : "; ") << "5 goldens, " << pairs << " (question, p) pairs, explore rate "
           << format_fixed(rate, 4);
  return o;
}

Outcome resilience() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "hypoloop_acceptance_resilience";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const SyntheticWorld world = default_world(11);
  const GeneratedWorld g = generate_world(world);
  LoopConfig cfg = recovery_config(11);
  cfg.max_iters = 3;

  // 3% failing images: completes, gaps are filled with the train-row mode.
  {
    MockMllmClient mllm(g, world.flip_prob, world.seed, 0.03);
    MockLlmClient llm(world, 0.5, cfg.seed);
    MemoryVqaCache cache;
    LoopIo io{llm, mllm, cache, {}, [&](const RunState& s) { save_checkpoint(dir / "ok.json", s); }, {}};
    try {
      const RunState s = run_discovery(cfg, g.snapshot, io);
      const EmbeddingMatrix& e = *s.final_embedding;
      o.require(s.stop_reason != StopReason::aborted, "3% run aborted");
      o.require(e.missing_fraction() > 0.0 && e.missing_fraction() <= 0.05,
                "3% missing fraction " + format_fixed(e.missing_fraction(), 4));
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < s.dataset.splits.size(); ++i) {
        if (s.dataset.splits[i] == Split::train) train.push_back(i);
      }
      const EmbeddingMatrix imputed = impute_mode(e, train);
      std::size_t filled = 0;
      bool mode_ok = true;
      for (std::size_t j = 0; j < e.cols(); ++j) {
        std::vector<std::size_t> counts(s.incumbent()->set[j].options().size(), 0);
        for (std::size_t i : train) {
          if (!e.is_missing(i, j)) ++counts[static_cast<std::size_t>(e.at(i, j))];
        }
        const int mode = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        for (std::size_t i = 0; i < e.rows(); ++i) {
          mode_ok &= !imputed.is_missing(i, j);
          if (e.is_missing(i, j)) {
            ++filled;
            mode_ok &= imputed.at(i, j) == mode;
          } else {
            mode_ok &= imputed.at(i, j) == e.at(i, j);
          }
        }
      }
      o.require(mode_ok, "mode imputation");
      o.require(!final_report(s).empty(), "report on the 3% run");
      o.detail << filled << " gaps mode-imputed at 3%";
    } catch (const std::exception& ex) {
      o.require(false, std::string("3% run threw: ") + ex.what());
    }
  }

  // 10% failing images: aborts with the ceiling error, checkpoint still loads.
  {
    MockMllmClient mllm(g, world.flip_prob, world.seed, 0.10);
    MockLlmClient llm(world, 0.5, cfg.seed);
    MemoryVqaCache cache;
    LoopIo io{llm, mllm, cache, {}, [&](const RunState& s) { save_checkpoint(dir / "abort.json", s); }, {}};
    bool ceiling = false;
    try {
      run_discovery(cfg, g.snapshot, io);
    } catch (const EmbeddingCeilingError& e) {
      ceiling = true;
      o.detail << "; 10% aborted: " << e.what();
    } catch (const std::exception& e) {
      o.require(false, std::string("10% run threw the wrong error: ") + e.what());
    }
    o.require(ceiling, "10% run did not raise the ceiling error");
    try {
      const RunState s = load_checkpoint(dir / "abort.json");
      o.require(s.stop_reason == StopReason::aborted, "checkpoint not marked aborted");
      o.require(!s.abort_message.empty(), "abort message");
    } catch (const std::exception& e) {
      o.require(false, std::string("checkpoint unreadable: ") + e.what());
    }
  }
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  struct Row {
    int id;
    std::string name;
    Outcome outcome;
  };
  std::vector<Row> rows;
  const auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": "
              << o.detail.str() << std::endl;
    rows.push_back({id, name, std::move(o)});
  };

  run(1, "stats correctness", stats_correctness);
  run(2, "t-distribution oracle", t_distribution);
  run(3, "linear SHAP", linear_shap_check);
  run(4, "metric definitions", metric_definitions);
  run(5, "crash rate", crash_rate);

  std::vector<SynthRun> runs;
  double wall = 0.0;
  try {
    const auto t0 = Clock::now();
    runs = parallel_runs({1, 2, 3, 4, 5});
    wall = seconds_since(t0);
  } catch (const std::exception& e) {
    std::cout << "synthetic runs failed: " << e.what() << std::endl;
  }
  const auto need_runs = [&](const std::function<Outcome()>& fn) {
    return [&runs, fn] {
      if (runs.size() != 5) {
        Outcome o;
        o.require(false, "synthetic runs unavailable");
        return o;
      }
      return fn();
    };
  };
  run(6, "ground-truth recovery", need_runs([&] { return ground_truth_recovery(runs, wall); }));
  run(7, "hypothesis independence", need_runs([&] { return independence(runs); }));
  run(8, "loop invariants", need_runs([&] { return invariants(runs); }));
  run(9, "prompt fidelity", prompt_fidelity);
  run(10, "resilience", resilience);

  const auto failed = std::count_if(rows.begin(), rows.end(), [](const Row& r) { return !r.outcome.pass; });
  std::cout << (rows.size() - static_cast<std::size_t>(failed)) << "/" << rows.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
