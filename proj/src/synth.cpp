#include "hypoloop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "hypoloop/errors.hpp"
#include "hypoloop/rng.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

using nlohmann::json;

namespace {

constexpr std::string_view kSynthPrefix = "synth://scene/";
constexpr std::uint64_t kFailTag = 0x4641494C00000007ULL;  // "FAIL"

}  // namespace

double SyntheticWorld::effective_intercept() const {
  if (intercept) return *intercept;
  double negative = 0.0;
  for (const auto& f : true_factors) negative += std::min(f.coefficient, 0.0);
  return 5.0 - negative + 6.0 * noise_sd;
}

void SyntheticWorld::validate() const {
  if (true_factors.empty()) throw DomainError("synthetic world needs at least one true factor");
  if (n < 10 * (true_factors.size() + 1)) {
    throw DomainError("synthetic world needs n >= 10 * (factors + 1) scenes");
  }
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw DomainError("noise_sd must be >= 0");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw DomainError("flip_prob must lie in [0, 1]");
  std::set<std::string> seen;
  for (const auto& f : true_factors) {
    if (f.coefficient == 0.0 || !std::isfinite(f.coefficient)) {
      throw DomainError("true factor '" + f.question + "' needs a nonzero coefficient");
    }
    if (!(f.prevalence > 0.0 && f.prevalence < 1.0)) {
      throw DomainError("true factor '" + f.question + "' needs prevalence strictly inside (0, 1)");
    }
    if (!seen.insert(normalize_question(f.question)).second) {
      throw DomainError("duplicate question '" + f.question + "' in synthetic world");
    }
  }
  for (const auto& d : decoy_pool) {
    if (!seen.insert(normalize_question(d)).second) {
      throw DomainError("duplicate question '" + d + "' in synthetic world");
    }
  }
}

SyntheticWorld default_world(std::uint64_t seed) {
  SyntheticWorld w;
  w.seed = seed;
  w.true_factors = {
      {"Is there a median strip separating opposing traffic?", -1.5, 0.35},
      {"Is there a marked crosswalk visible?", 1.2, 0.50},
      {"Are pedestrians visible on or near the roadway?", 1.8, 0.45},
      {"Does the road have more than two travel lanes?", 1.0, 0.40},
      {"Is the road surface marked with visible lane lines?", -0.8, 0.60},
      {"Is there a bus stop visible?", 0.7, 0.25},
      {"Are there advertisements or billboards visible?", 0.5, 0.30},
      {"Are there barriers or guardrails along the road?", -2.0, 0.20},
  };
  w.decoy_pool = {
      "Is the sky mostly cloudy?",
      "Are there trees visible along the sidewalk?",
      "Is there a fire hydrant visible?",
      "Are the buildings taller than five stories?",
      "Is there a church or place of worship visible?",
      "Are there parked cars along the curb?",
      "Is there a bicycle lane marked on the road?",
      "Is there visible graffiti on walls?",
      "Is there a street vendor or food cart visible?",
      "Is the pavement visibly cracked or damaged?",
      "Is there construction scaffolding visible?",
      "Are there street lamps visible?",
      "Is there a traffic signal visible?",
      "Is there a stop sign visible?",
      "Are there awnings over shop entrances?",
      "Is there a park or green space visible?",
      "Are there trash bins on the sidewalk?",
      "Is there a taxi visible?",
      "Is the road surface wet?",
      "Are there shadows from buildings across the road?",
      "Is there a delivery truck visible?",
      "Are there flags or banners on buildings?",
      "Is there a subway entrance visible?",
      "Are there benches on the sidewalk?",
      "Is there a parking meter visible?",
      "Are there visible overhead utility wires?",
      "Is there a cyclist visible?",
      "Is there a one-way street sign visible?",
      "Are there planters or flower boxes visible?",
      "Is there a bridge or overpass visible?",
      "Are there glass storefronts visible?",
      "Is there a loading zone sign visible?",
  };
  return w;
}

SyntheticWorld world_from_json(const json& j) {
  SyntheticWorld w;
  try {
    w.n = j.at("n").get<std::size_t>();
    for (const auto& f : j.at("true_factors")) {
      w.true_factors.push_back({f.at("question").get<std::string>(),
                                f.at("coefficient").get<double>(),
                                f.at("prevalence").get<double>()});
    }
    w.decoy_pool = j.value("decoys", std::vector<std::string>{});
    w.noise_sd = j.value("noise_sd", w.noise_sd);
    w.flip_prob = j.value("flip_prob", w.flip_prob);
    if (j.contains("intercept") && !j["intercept"].is_null()) w.intercept = j["intercept"].get<double>();
    w.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("split")) {
      const auto s = j["split"].get<std::vector<double>>();
      if (s.size() != 3) throw ConfigError("world split must list train/val/test ratios");
      w.ratios = {s[0], s[1], s[2]};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid synthetic world spec: ") + e.what());
  }
  w.validate();
  return w;
}

json world_to_json(const SyntheticWorld& w) {
  json factors = json::array();
  for (const auto& f : w.true_factors) {
    factors.push_back(
        {{"question", f.question}, {"coefficient", f.coefficient}, {"prevalence", f.prevalence}});
  }
  json j = {{"schema_version", "hypoloop.world/1"},
            {"n", w.n},
            {"true_factors", factors},
            {"decoys", w.decoy_pool},
            {"noise_sd", w.noise_sd},
            {"flip_prob", w.flip_prob},
            {"seed", w.seed},
            {"split", {w.ratios.train, w.ratios.val, w.ratios.test}}};
  if (w.intercept) j["intercept"] = *w.intercept;
  return j;
}

SyntheticWorld load_world(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse world spec " + path.string() + ": " + e.what());
  }
  return world_from_json(j);
}

std::optional<std::size_t> TruthTable::factor_index(std::string_view question) const {
  const auto it = factor_of_question.find(normalize_question(question));
  if (it == factor_of_question.end()) return std::nullopt;
  return it->second;
}

GeneratedWorld generate_world(const SyntheticWorld& spec) {
  spec.validate();
  GeneratedWorld out;
  out.truth.factors = spec.true_factors;
  for (std::size_t f = 0; f < spec.true_factors.size(); ++f) {
    out.truth.factor_of_question.emplace(normalize_question(spec.true_factors[f].question), f);
  }
  const double intercept = spec.effective_intercept();
  SplitMix64 rng(spec.seed ^ rng_tag::kWorld);
  out.truth.bits.resize(spec.n);
  auto& records = out.snapshot.records;
  records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto& bits = out.truth.bits[i];
    bits.resize(spec.true_factors.size());
    double y = intercept;
    for (std::size_t f = 0; f < spec.true_factors.size(); ++f) {
      bits[f] = rng.bernoulli(spec.true_factors[f].prevalence) ? 1 : 0;
      y += spec.true_factors[f].coefficient * bits[f];
    }
    y += rng.normal(0.0, spec.noise_sd);
    if (y < 0.0) throw DomainError("synthetic outcome went negative; raise the intercept");
    char id[32];
    std::snprintf(id, sizeof id, "scene-%05zu", i);
    SegmentRecord rec;
    rec.segment_id = id;
    rec.image_ref = std::string(kSynthPrefix) + std::to_string(i);
    rec.crash_rate = y;
    records.push_back(std::move(rec));
  }
  assign_splits(records, spec.ratios, spec.seed);
  out.snapshot.split_counts = split_counts_for(spec.n, spec.ratios);
  out.snapshot.manifest_hash = sha256_hex(world_to_json(spec).dump());
  return out;
}

std::optional<std::size_t> scene_of_image_ref(std::string_view image_ref) {
  if (image_ref.rfind(kSynthPrefix, 0) != 0) return std::nullopt;
  const std::string_view digits = image_ref.substr(kSynthPrefix.size());
  if (digits.empty()) return std::nullopt;
  std::size_t v = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

std::vector<int> mock_mllm_answer(const TruthTable& truth, std::size_t scene,
                                  const HypothesisSet& set, double flip_prob,
                                  std::uint64_t scene_seed) {
  std::vector<int> out;
  out.reserve(set.k());
  for (const auto& h : set.members()) {
    SplitMix64 rng(derive_seed(scene_seed, hash64(h.canonical())));
    const auto f = truth.factor_index(h.question());
    if (f && scene < truth.bits.size()) {
      const int bit = truth.bits[scene][*f];
      out.push_back(rng.bernoulli(flip_prob) ? 1 - bit : bit);
    } else {
      out.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
  }
  return out;
}

double noise_ceiling_r2(const SyntheticWorld& spec) {
  const double eps = spec.flip_prob;
  double var_y = spec.noise_sd * spec.noise_sd;
  double explained = 0.0;
  for (const auto& f : spec.true_factors) {
    const double p = f.prevalence;
    const double b2 = f.coefficient * f.coefficient;
    var_y += b2 * p * (1.0 - p);
    const double q = p * (1.0 - eps) + (1.0 - p) * eps;
    const double var_o = q * (1.0 - q);
    const double cov = p * (1.0 - eps - q);
    if (var_o > 0.0) explained += b2 * cov * cov / var_o;
  }
  return explained / var_y;
}

MockMllmClient::MockMllmClient(const GeneratedWorld& world, double flip_prob, std::uint64_t seed,
                               double fail_fraction, std::string model)
    : world_(world),
      flip_prob_(flip_prob),
      seed_(seed),
      fail_fraction_(fail_fraction),
      model_(std::move(model)) {}

bool MockMllmClient::fails_on(std::size_t scene) const {
  if (fail_fraction_ <= 0.0) return false;
  SplitMix64 rng(derive_seed(seed_ ^ kFailTag, scene));
  return rng.uniform() < fail_fraction_;
}

std::string MockMllmClient::answer(const VqaRequest& request) {
  if (request.set == nullptr) throw EndpointError("mock MLLM needs the structured hypothesis set");
  const auto scene = scene_of_image_ref(request.image_ref);
  if (!scene || *scene >= world_.truth.bits.size()) {
    throw EndpointError("mock MLLM does not know image '" + std::string(request.image_ref) + "'");
  }
  if (fails_on(*scene)) throw EndpointError("mock MLLM failure on scene " + std::to_string(*scene));
  const auto answers = mock_mllm_answer(world_.truth, *scene, *request.set, flip_prob_,
                                        derive_seed(seed_ ^ rng_tag::kMockVqa, *scene));
  std::string reply = "[";
  for (std::size_t j = 0; j < answers.size(); ++j) {
    if (j) reply += ", ";
    reply += std::to_string(answers[j]);
  }
  return reply + "]";
}

MockLlmClient::MockLlmClient(const SyntheticWorld& world, double exploit_bias, std::uint64_t seed)
    : decoys_(world.decoy_pool), exploit_bias_(exploit_bias), seed_(seed) {
  for (const auto& f : world.true_factors) true_questions_.push_back(f.question);
}

std::string MockLlmClient::complete(const ChatRequest& request) {
  if (request.generation == nullptr) throw EndpointError("mock LLM needs the structured request");
  const GenerationRequest& gen = *request.generation;
  const auto available = [&](const std::vector<std::string>& src) {
    std::vector<std::string> out;
    for (const auto& q : src) {
      if (!gen.prior_set.contains_question(q)) out.push_back(q);
    }
    return out;
  };
  std::vector<std::string> truth = available(true_questions_);
  std::vector<std::string> decoys = available(decoys_);

  SplitMix64 rng(derive_seed(derive_seed(seed_ ^ rng_tag::kMockLlm, request.nonce),
                             hash64(gen.prior_set.hash())));
  json items = json::array();
  for (std::size_t d = 0; d < gen.m_new; ++d) {
    if (truth.empty() && decoys.empty()) break;
    const bool biased = gen.mode != GenerationMode::explore && !truth.empty() &&
                        rng.uniform() < exploit_bias_;
    std::string pick;
    if (biased) {
      const auto idx = static_cast<std::size_t>(rng.below(truth.size()));
      pick = truth[idx];
      truth.erase(truth.begin() + static_cast<std::ptrdiff_t>(idx));
    } else {
      const auto idx = static_cast<std::size_t>(rng.below(truth.size() + decoys.size()));
      if (idx < truth.size()) {
        pick = truth[idx];
        truth.erase(truth.begin() + static_cast<std::ptrdiff_t>(idx));
      } else {
        const std::size_t di = idx - truth.size();
        pick = decoys[di];
        decoys.erase(decoys.begin() + static_cast<std::ptrdiff_t>(di));
      }
    }
    items.push_back({{"question", pick}, {"options", {"no", "yes"}}});
  }
  return "Here are the proposed hypotheses.\n```json\n" + items.dump(2) + "\n```\n";
}

}  // namespace hypoloop
