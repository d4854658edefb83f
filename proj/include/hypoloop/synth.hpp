#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypoloop/clients.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/ingest.hpp"

namespace hypoloop {

struct TrueFactor {
  std::string question;
  double coefficient = 0.0;
  double prevalence = 0.5;
};

// Desk-scale world with planted binary visual factors. The loop never sees
// the truth table; tests and mocks do.
struct SyntheticWorld {
  std::size_t n = 2000;
  std::vector<TrueFactor> true_factors;
  std::vector<std::string> decoy_pool;
  double noise_sd = 0.5;
  double flip_prob = 0.05;
  // Outcome baseline; when unset it is chosen so the outcome stays positive
  // (5 + sum of |negative coefficients| + 6 noise sd).
  std::optional<double> intercept;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  double effective_intercept() const;
  void validate() const;
};

// 8 road-scene factors with |beta| in [0.5, 2] and 32 decoy questions.
SyntheticWorld default_world(std::uint64_t seed = 0);

SyntheticWorld world_from_json(const nlohmann::json& j);
nlohmann::json world_to_json(const SyntheticWorld& world);
SyntheticWorld load_world(const std::filesystem::path& path);

struct TruthTable {
  std::vector<TrueFactor> factors;
  std::map<std::string, std::size_t> factor_of_question;  // normalized question -> factor
  std::vector<std::vector<std::uint8_t>> bits;            // scene x factor

  std::optional<std::size_t> factor_index(std::string_view question) const;
};

struct GeneratedWorld {
  DatasetSnapshot snapshot;
  TruthTable truth;
};

// Scene i gets segment_id "scene-<i>" and image_ref "synth://scene/<i>".
// y = intercept + sum_f beta_f * bit_f + Normal(0, noise_sd).
GeneratedWorld generate_world(const SyntheticWorld& spec);

// Scene index encoded in a synthetic image reference; nullopt if not synthetic.
std::optional<std::size_t> scene_of_image_ref(std::string_view image_ref);

// Answers for one scene. A question matching a true factor returns the truth
// bit flipped with probability flip_prob; any other question returns a fair
// coin. Each question draws from its own stream seeded by
// (scene_seed, normalized question), so answers do not depend on set order.
std::vector<int> mock_mllm_answer(const TruthTable& truth, std::size_t scene,
                                  const HypothesisSet& set, double flip_prob,
                                  std::uint64_t scene_seed);

// Analytic best-linear-predictor R^2 for the observed (flipped) factor
// answers: sum_f beta_f^2 Cov(f, o_f)^2 / Var(o_f) divided by Var(y).
double noise_ceiling_r2(const SyntheticWorld& spec);

class MockMllmClient final : public MllmClient {
 public:
  MockMllmClient(const GeneratedWorld& world, double flip_prob, std::uint64_t seed,
                 double fail_fraction = 0.0, std::string model = "mock-mllm");

  std::string answer(const VqaRequest& request) override;
  std::string model_id() const override { return model_; }

  bool fails_on(std::size_t scene) const;

 private:
  const GeneratedWorld& world_;
  double flip_prob_;
  std::uint64_t seed_;
  double fail_fraction_;
  std::string model_;
};

// Samples m_new questions without replacement from the true factors and decoys
// not already in the prior set. With probability `exploit_bias` per draw (seed
// and exploit prompts) the draw is restricted to undiscovered true factors;
// explore prompts draw uniformly. A small pool yields a short reply.
class MockLlmClient final : public LlmClient {
 public:
  MockLlmClient(const SyntheticWorld& world, double exploit_bias, std::uint64_t seed);

  std::string complete(const ChatRequest& request) override;

 private:
  std::vector<std::string> true_questions_;
  std::vector<std::string> decoys_;
  double exploit_bias_;
  std::uint64_t seed_;
};

}  // namespace hypoloop
