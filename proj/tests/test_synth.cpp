#include <doctest.h>

#include <set>

#include "hypoloop/errors.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/stats.hpp"
#include "hypoloop/synth.hpp"
#include "hypoloop/vqa.hpp"

using namespace hypoloop;

namespace {

HypothesisSet set_of(const std::vector<std::string>& questions) {
  std::vector<Hypothesis> m;
  for (const auto& q : questions) m.push_back(Hypothesis::make(q));
  return HypothesisSet(0, m);
}

std::vector<std::string> truth_questions(const SyntheticWorld& w) {
  std::vector<std::string> out;
  for (const auto& f : w.true_factors) out.push_back(f.question);
  return out;
}

EmbeddingMatrix mock_embedding(const GeneratedWorld& g, const HypothesisSet& set, double flip,
                               std::uint64_t seed) {
  EmbeddingMatrix e(set.hash(), g.snapshot.size(), set.k());
  for (std::size_t i = 0; i < g.snapshot.size(); ++i) {
    const auto a = mock_mllm_answer(g.truth, i, set, flip, derive_seed(seed, i));
    for (std::size_t j = 0; j < set.k(); ++j) e.set(i, j, a[j]);
  }
  return e;
}

std::vector<std::string> ids_of(const HypothesisSet& set) {
  std::vector<std::string> ids;
  for (const auto& h : set.members()) ids.push_back(h.id());
  return ids;
}

std::string reply_for(MockLlmClient& llm, const GenerationRequest& req, std::uint64_t nonce = 0) {
  ChatRequest chat;
  chat.generation = &req;
  chat.nonce = nonce;
  return llm.complete(chat);
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("noiseless single-factor world has two outcome levels two apart") {
    SyntheticWorld w;
    w.n = 200;
    w.true_factors = {{"Is there a tree?", 2.0, 0.5}};
    w.noise_sd = 0.0;
    const auto g = generate_world(w);
    std::set<double> levels;
    for (std::size_t i = 0; i < w.n; ++i) {
      const double y = g.snapshot.records[i].crash_rate;
      levels.insert(y);
      CHECK(y == w.effective_intercept() + 2.0 * g.truth.bits[i][0]);
    }
    REQUIRE(levels.size() == 2);
    CHECK(*levels.rbegin() - *levels.begin() == 2.0);
    CHECK(g.snapshot.records[7].image_ref == "synth://scene/7");
    CHECK(scene_of_image_ref("synth://scene/7") == std::optional<std::size_t>(7));
    CHECK_FALSE(scene_of_image_ref("photos/7.jpg").has_value());
  }

  TEST_CASE("world validation") {
    SyntheticWorld w = default_world();
    w.true_factors[0].prevalence = 0.0;
    CHECK_THROWS_AS(generate_world(w), DomainError);
    w = default_world();
    w.flip_prob = 1.5;
    CHECK_THROWS_AS(generate_world(w), DomainError);
    w = default_world();
    w.decoy_pool.push_back(w.true_factors[0].question);
    CHECK_THROWS_AS(generate_world(w), DomainError);
    w = default_world();
    w.n = 50;
    CHECK_THROWS_AS(generate_world(w), DomainError);
  }

  TEST_CASE("empirical prevalences track the world file") {
    const auto w = default_world(3);
    const auto g = generate_world(w);
    for (std::size_t f = 0; f < w.true_factors.size(); ++f) {
      double on = 0;
      for (const auto& bits : g.truth.bits) on += bits[f];
      CHECK(std::abs(on / static_cast<double>(w.n) - w.true_factors[f].prevalence) < 0.04);
    }
  }

  TEST_CASE("flip probability 0 and 1 are exact; 0.05 is close") {
    const auto w = default_world(1);
    const auto g = generate_world(w);
    const auto set = set_of(truth_questions(w));
    for (double flip : {0.0, 1.0}) {
      const auto e = mock_embedding(g, set, flip, 9);
      for (std::size_t i = 0; i < w.n; ++i) {
        for (std::size_t f = 0; f < set.k(); ++f) {
          const int bit = g.truth.bits[i][f];
          CHECK(e.at(i, f) == (flip == 0.0 ? bit : 1 - bit));
        }
      }
    }
    const auto e = mock_embedding(g, set, 0.05, 9);
    double flips = 0;
    for (std::size_t i = 0; i < w.n; ++i) {
      for (std::size_t f = 0; f < set.k(); ++f) flips += e.at(i, f) != g.truth.bits[i][f];
    }
    const double rate = flips / static_cast<double>(w.n * set.k());
    CHECK(rate >= 0.04);
    CHECK(rate <= 0.06);
  }

  TEST_CASE("answers do not depend on set order") {
    const auto w = default_world(2);
    const auto g = generate_world(w);
    const auto a = set_of({w.true_factors[0].question, w.decoy_pool[0], w.decoy_pool[1]});
    const auto b = set_of({w.decoy_pool[1], w.true_factors[0].question, w.decoy_pool[0]});
    for (std::size_t i = 0; i < 50; ++i) {
      const auto ra = mock_mllm_answer(g.truth, i, a, 0.05, 77 + i);
      const auto rb = mock_mllm_answer(g.truth, i, b, 0.05, 77 + i);
      CHECK(ra[0] == rb[1]);
      CHECK(ra[1] == rb[2]);
      CHECK(ra[2] == rb[0]);
    }
  }

  TEST_CASE("OLS on the true factors recovers the coefficients without noise") {
    SyntheticWorld w = default_world(5);
    w.noise_sd = 0.0;
    w.flip_prob = 0.0;
    const auto g = generate_world(w);
    const auto set = set_of(truth_questions(w));
    const auto design = make_design(mock_embedding(g, set, 0.0, 1), ids_of(set));
    const auto y = g.snapshot.outcome();
    const auto fit = ols_fit(design, y);
    CHECK(std::abs(fit.coefficients[0] - w.effective_intercept()) < 1e-8);
    for (std::size_t f = 0; f < w.true_factors.size(); ++f) {
      CHECK(std::abs(fit.coefficients[f + 1] - w.true_factors[f].coefficient) < 1e-8);
    }
  }

  TEST_CASE("decoys are rarely significant") {
    std::size_t significant = 0;
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto w = default_world(seed);
      const auto g = generate_world(w);
      auto questions = truth_questions(w);
      for (std::size_t d = 0; d < 8; ++d) questions.push_back(w.decoy_pool[d]);
      const auto set = set_of(questions);
      const auto design = make_design(mock_embedding(g, set, w.flip_prob, seed), ids_of(set));
      const auto fit = ols_fit(design, g.snapshot.outcome());
      for (std::size_t j = 8; j < 16; ++j) {
        ++total;
        if (fit.p_values[j] < 0.05) ++significant;
      }
    }
    const double fraction = static_cast<double>(significant) / static_cast<double>(total);
    CHECK(fraction <= 0.12);
  }

  TEST_CASE("generation is a pure function of the world") {
    const auto w = default_world(4);
    const auto a = generate_world(w);
    const auto b = generate_world(w);
    CHECK(a.snapshot.records == b.snapshot.records);
    CHECK(a.truth.bits == b.truth.bits);
    CHECK(a.snapshot.manifest_hash == b.snapshot.manifest_hash);
    const auto c = generate_world(default_world(5));
    CHECK(a.snapshot.manifest_hash != c.snapshot.manifest_hash);
  }

  TEST_CASE("world JSON round trip") {
    SyntheticWorld w = default_world(8);
    w.intercept = 12.5;
    w.n = 300;
    const auto back = world_from_json(world_to_json(w));
    CHECK(world_to_json(back) == world_to_json(w));
    CHECK(back.intercept == std::optional<double>(12.5));
    CHECK(back.true_factors.size() == 8);
    CHECK(back.decoy_pool == w.decoy_pool);
  }

  TEST_CASE("noise ceiling shrinks with flips and noise") {
    SyntheticWorld w = default_world();
    w.noise_sd = 0.0;
    w.flip_prob = 0.0;
    CHECK(noise_ceiling_r2(w) == doctest::Approx(1.0).epsilon(1e-12));
    w.flip_prob = 0.5;
    CHECK(noise_ceiling_r2(w) == doctest::Approx(0.0));
    const double base = noise_ceiling_r2(default_world());
    CHECK(base > 0.0);
    CHECK(base < 1.0);
  }

  TEST_CASE("mock LLM with full exploit bias proposes only true factors") {
    const auto w = default_world();
    MockLlmClient llm(w, 1.0, 3);
    GenerationRequest req;
    req.m_new = 8;
    req.mode = GenerationMode::seed;
    const auto got = parse_generation(reply_for(llm, req), 8, {}, GenerationMode::seed, 0);
    std::set<std::string> truth;
    for (const auto& q : truth_questions(w)) truth.insert(normalize_question(q));
    for (const auto& h : got) CHECK(truth.contains(h.canonical()));
    CHECK(got.size() == 8);
  }

  TEST_CASE("mock LLM never repeats the prior set and can run short") {
    SyntheticWorld w = default_world();
    w.decoy_pool.resize(2);
    MockLlmClient llm(w, 0.0, 3);
    GenerationRequest req;
    req.prior_set = set_of({w.true_factors[0].question, w.decoy_pool[0]});
    req.prior_pvalues = {0.01, 0.9};
    req.m_new = 1;
    req.mode = GenerationMode::explore;
    for (std::uint64_t nonce = 0; nonce < 20; ++nonce) {
      const auto got = parse_generation(reply_for(llm, req, nonce), 1, {}, GenerationMode::explore, 1);
      CHECK_FALSE(req.prior_set.contains_question(got[0].question()));
    }

    GenerationRequest big;
    big.m_new = 20;
    big.mode = GenerationMode::seed;
    // 8 true + 2 decoys available, so the reply has 10 items.
    const std::string reply = reply_for(llm, big);
    CHECK_THROWS_AS(parse_generation(reply, 20, {}, GenerationMode::seed, 0), ShortfallError);
    try {
      parse_generation(reply, 20, {}, GenerationMode::seed, 0);
    } catch (const ShortfallError& e) {
      CHECK(e.survivors().size() == 10);
    }
  }

  TEST_CASE("mock LLM replies are deterministic in seed and nonce") {
    const auto w = default_world();
    MockLlmClient a(w, 0.5, 11);
    MockLlmClient b(w, 0.5, 11);
    MockLlmClient c(w, 0.5, 12);
    GenerationRequest req;
    req.m_new = 6;
    req.mode = GenerationMode::seed;
    CHECK(reply_for(a, req, 1) == reply_for(b, req, 1));
    CHECK(reply_for(a, req, 1) != reply_for(a, req, 2));
    CHECK(reply_for(a, req, 1) != reply_for(c, req, 1));
  }

  TEST_CASE("mock MLLM failures are a fixed function of the scene") {
    const auto w = default_world();
    const auto g = generate_world(w);
    MockMllmClient m1(g, 0.05, 1, 0.1);
    MockMllmClient m2(g, 0.05, 1, 0.1);
    std::size_t failing = 0;
    for (std::size_t i = 0; i < w.n; ++i) {
      CHECK(m1.fails_on(i) == m2.fails_on(i));
      failing += m1.fails_on(i);
    }
    const double rate = static_cast<double>(failing) / static_cast<double>(w.n);
    CHECK(rate > 0.07);
    CHECK(rate < 0.13);

    const auto set = set_of({w.true_factors[0].question});
    const std::string prompt = render_batch_prompt(set);
    for (std::size_t i = 0; i < 30; ++i) {
      const std::string ref = "synth://scene/" + std::to_string(i);
      VqaRequest req;
      req.image_ref = ref;
      req.prompt = prompt;
      req.set = &set;
      if (m1.fails_on(i)) {
        CHECK_THROWS_AS(m1.answer(req), EndpointError);
      } else {
        CHECK(m1.answer(req) == m2.answer(req));
      }
    }
    MockMllmClient never(g, 0.05, 1, 0.0);
    for (std::size_t i = 0; i < 100; ++i) CHECK_FALSE(never.fails_on(i));
  }
}
