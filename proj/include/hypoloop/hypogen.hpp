#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hypoloop/clients.hpp"
#include "hypoloop/domain.hpp"
#include "hypoloop/errors.hpp"
#include "hypoloop/rng.hpp"

namespace hypoloop {

inline constexpr std::string_view kDefaultDomainContext = "segment-level crash rate";

// Inputs to one hypothesis-generation prompt. An empty prior set selects the
// bootstrap (seed) prompt.
struct GenerationRequest {
  HypothesisSet prior_set;
  std::vector<double> prior_pvalues;
  std::size_t m_new = 0;
  GenerationMode mode = GenerationMode::exploit;
  std::string domain_context = std::string(kDefaultDomainContext);
  double alpha = 0.05;
  int iteration = 0;  // iteration the generated hypotheses belong to
  int attempt = 0;    // resample index within the iteration

  // Throws DomainError when p-values and the prior set are misaligned or
  // m_new is out of range.
  void validate() const;
};

// One uniform draw: explore when u < p_explore.
GenerationMode choose_prompt_mode(SplitMix64& rng, double p_explore);

std::string render_prompt(const GenerationRequest& request);

// Fewer than the requested number of unique hypotheses survived parsing.
class ShortfallError : public ParseError {
 public:
  ShortfallError(const std::string& what, std::vector<Hypothesis> survivors)
      : ParseError(what), survivors_(std::move(survivors)) {}
  const std::vector<Hypothesis>& survivors() const { return survivors_; }

 private:
  std::vector<Hypothesis> survivors_;
};

class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, std::vector<Hypothesis> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<Hypothesis>& partial() const { return partial_; }

 private:
  std::vector<Hypothesis> partial_;
};

// Extracts the first JSON array of {question, options} objects from a model
// reply (surrounding prose and code fences are tolerated). Items whose
// normalized question is in `exclude` or repeats an earlier item are dropped;
// malformed items are skipped. Options default to ["no", "yes"]. Returns at
// most m_new hypotheses; throws ParseError when no array is found and
// ShortfallError when fewer than m_new survive.
std::vector<Hypothesis> parse_generation(std::string_view reply, std::size_t m_new,
                                         const std::vector<std::string>& exclude,
                                         GenerationMode origin, int created_iter);

using EventSink = std::function<void(const nlohmann::json&)>;

// render -> call -> parse until m_new unique hypotheses are collected. The
// same prompt is resent on every retry; at most 1 + retries calls are made.
std::vector<Hypothesis> generate_replacements(const GenerationRequest& request, LlmClient& client,
                                              int retries, const EventSink& events = {});

}  // namespace hypoloop
