#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "hypoloop/errors.hpp"
#include "hypoloop/util.hpp"
#include "hypoloop/vqa.hpp"

using namespace hypoloop;
namespace fs = std::filesystem;

namespace {

std::size_t scene_of(std::string_view ref) {
  return static_cast<std::size_t>(std::stoul(std::string(ref.substr(ref.rfind('/') + 1))));
}

// Closed-form answer used by the mock and recomputed independently in tests.
int closed_form(std::size_t scene, const Hypothesis& h) {
  return static_cast<int>((scene * 7 + h.question().size()) % h.options().size());
}

class ClosedFormMllm : public MllmClient {
 public:
  std::string answer(const VqaRequest& req) override {
    ++calls;
    {
      std::lock_guard lock(mutex);
      asked_sizes.push_back(req.set->k());
      prompts.emplace_back(req.prompt);
    }
    const std::size_t scene = scene_of(req.image_ref);
    if (fail_scenes.contains(scene)) throw EndpointError("down", 500);
    if (flaky_scenes.contains(scene) && flaky_seen.insert(scene).second) return "garbled";
    std::string out = "Answer: [";
    for (std::size_t j = 0; j < req.set->k(); ++j) {
      if (j) out += ", ";
      out += std::to_string(closed_form(scene, (*req.set)[j]));
    }
    return out + "]";
  }
  std::string model_id() const override { return model; }

  std::atomic<int> calls{0};
  std::mutex mutex;
  std::vector<std::size_t> asked_sizes;
  std::vector<std::string> prompts;
  std::set<std::size_t> fail_scenes;
  std::set<std::size_t> flaky_scenes;
  std::set<std::size_t> flaky_seen;
  std::string model = "closed-form/v1";
};

DatasetSnapshot synthetic_snapshot(std::size_t n) {
  DatasetSnapshot s;
  for (std::size_t i = 0; i < n; ++i) {
    SegmentRecord r;
    r.segment_id = "s" + std::to_string(i);
    r.image_ref = "synth://scene/" + std::to_string(i);
    r.crash_rate = 1.0;
    s.records.push_back(r);
  }
  return s;
}

HypothesisSet make_set(std::initializer_list<const char*> qs) {
  std::vector<Hypothesis> m;
  for (const char* q : qs) m.push_back(Hypothesis::make(q));
  return HypothesisSet(0, m);
}

}  // namespace

TEST_SUITE("vqa") {
  TEST_CASE("batch prompt enumerates questions with numbered options") {
    const auto two = make_set({"Is there a tree?", "Is it raining?"});
    const std::string p = render_batch_prompt(two);
    CHECK(p.find("Q1. Is there a tree?") != std::string::npos);
    CHECK(p.find("Q2. Is it raining?") != std::string::npos);
    CHECK(p.find("0: no") != std::string::npos);
    CHECK(p.find("1: yes") != std::string::npos);
    CHECK(p.find("list of 2 integers") != std::string::npos);
    CHECK(p.find("Q3.") == std::string::npos);

    const auto one = make_set({"Is there a tree?"});
    CHECK(render_batch_prompt(one).find("list of 1 integers") != std::string::npos);

    const HypothesisSet three(0, {Hypothesis::make("Lanes?", {"one", "two", "three"})});
    const std::string p3 = render_batch_prompt(three);
    CHECK(p3.find("0: one") != std::string::npos);
    CHECK(p3.find("2: three") != std::string::npos);
    CHECK_THROWS_AS(render_batch_prompt(HypothesisSet()), DomainError);
  }

  TEST_CASE("batch answer parsing") {
    const auto set = make_set({"a?", "b?", "c?"});
    auto row = parse_batch_answer("[1, 0, 1]", set);
    CHECK(row.values == std::vector<int>{1, 0, 1});
    CHECK(row.missing == std::vector<bool>{false, false, false});

    row = parse_batch_answer("Answers: [1, 5, 0]", set);
    CHECK(row.missing == std::vector<bool>{false, true, false});
    CHECK(row.values[2] == 0);

    CHECK_THROWS_AS(parse_batch_answer("[1, 0]", set), ParseError);
    CHECK_THROWS_AS(parse_batch_answer("I see a road.", set), ParseError);
    CHECK(parse_batch_answer("1, 1, 0", set).values == std::vector<int>{1, 1, 0});
    CHECK(parse_batch_answer("see [note] then [0, -1, 1]", set).missing ==
          std::vector<bool>{false, true, false});

    const auto h = Hypothesis::make("Lanes?", {"one", "two", "three"});
    CHECK(parse_single_answer("2", h) == 2);
    CHECK(parse_single_answer("The answer is 1.", h) == 1);
    CHECK_FALSE(parse_single_answer("7", h).has_value());
    CHECK_FALSE(parse_single_answer("none", h).has_value());
  }

  TEST_CASE("cache keys change with image, questions, options and model") {
    const auto set = make_set({"a?", "b?"});
    const std::string base = row_cache_key("img1", set.hash(), "m");
    CHECK(base == row_cache_key("img1", set.hash(), "m"));
    CHECK(base != row_cache_key("img2", set.hash(), "m"));
    CHECK(base != row_cache_key("img1", set.hash(), "m2"));
    CHECK(base != row_cache_key("img1", make_set({"a?", "c?"}).hash(), "m"));
    const auto h = Hypothesis::make("a?");
    const auto h3 = Hypothesis::make("a?", {"no", "yes", "maybe"});
    const std::string q = question_cache_key("img1", h, "m");
    CHECK(q != question_cache_key("img1", h3, "m"));
    CHECK(q != question_cache_key("img2", h, "m"));
    CHECK(q != question_cache_key("img1", h, "m2"));
    CHECK(q != question_cache_key("img1", Hypothesis::make("A?"), "m"));
  }

  TEST_CASE("memory and disk caches round-trip and evict without collateral damage") {
    const fs::path root = fs::temp_directory_path() / "hypoloop_cache_test";
    fs::remove_all(root);
    MemoryVqaCache mem;
    DiskVqaCache disk(root);
    for (VqaCache* cache : {static_cast<VqaCache*>(&mem), static_cast<VqaCache*>(&disk)}) {
      const std::string k1 = sha256_hex("one");
      const std::string k2 = sha256_hex("two");
      cache->put("org/model:7b", k1, "1,0,?");
      cache->put("org/model:7b", k2, "0,0,1");
      CHECK(cache->get("org/model:7b", k1) == "1,0,?");
      CHECK_FALSE(cache->get("other", k1).has_value());
      cache->evict("org/model:7b", k1);
      CHECK_FALSE(cache->get("org/model:7b", k1).has_value());
      CHECK(cache->get("org/model:7b", k2) == "0,0,1");
    }
    const std::string k = sha256_hex("two");
    const fs::path p = disk.path_for("org/model:7b", k);
    CHECK(p == root / "org_model_7b" / k.substr(0, 2) / k);
    CHECK(read_file(p) == "0,0,1\n");
    CHECK(fs::exists(root / "org_model_7b" / "index"));
    fs::remove_all(root);
  }

  TEST_CASE("embedding equals the mock's closed form, in record order") {
    const auto snap = synthetic_snapshot(40);
    const HypothesisSet set(0, {Hypothesis::make("Is there a tree?"),
                                Hypothesis::make("How many lanes?", {"1", "2", "3"}),
                                Hypothesis::make("Is it raining right now?")});
    ClosedFormMllm mllm;
    MemoryVqaCache cache;
    const auto res = embed_dataset(snap, set, mllm, cache, {});
    CHECK(res.matrix.rows() == 40);
    CHECK(res.matrix.cols() == 3);
    CHECK(res.matrix.set_id() == set.hash());
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        REQUIRE_FALSE(res.matrix.is_missing(i, j));
        CHECK(res.matrix.at(i, j) == closed_form(i, set[j]));
      }
    }
    CHECK(res.stats.endpoint_calls == 40);
    CHECK(mllm.calls == 40);
  }

  TEST_CASE("warm cache: zero endpoint calls and an identical matrix") {
    const auto snap = synthetic_snapshot(25);
    const auto set = make_set({"a?", "b?", "c?"});
    ClosedFormMllm mllm;
    MemoryVqaCache cache;
    const auto first = embed_dataset(snap, set, mllm, cache, {});
    const int calls = mllm.calls;
    const auto second = embed_dataset(snap, set, mllm, cache, {});
    CHECK(mllm.calls == calls);
    CHECK(second.stats.endpoint_calls == 0);
    CHECK(second.stats.row_cache_hits == 25);
    CHECK(second.matrix == first.matrix);
  }

  TEST_CASE("retained hypotheses are served by the per-question cache") {
    const auto snap = synthetic_snapshot(10);
    ClosedFormMllm mllm;
    MemoryVqaCache cache;
    embed_dataset(snap, make_set({"a?", "b?", "c?"}), mllm, cache, {});
    mllm.asked_sizes.clear();
    const auto next = make_set({"a?", "c?", "d?"});
    const auto res = embed_dataset(snap, next, mllm, cache, {});
    CHECK(res.stats.question_misses == std::vector<std::size_t>{0, 0, 10});
    CHECK(res.stats.row_cache_hits == 0);
    for (auto k : mllm.asked_sizes) CHECK(k == 1);  // only the new question is sent
    for (std::size_t i = 0; i < 10; ++i) CHECK(res.matrix.at(i, 2) == closed_form(i, next[2]));
  }

  TEST_CASE("parallel embedding is bitwise identical to sequential") {
    const auto snap = synthetic_snapshot(120);
    const auto set = make_set({"a?", "bb?", "ccc?", "dddd?"});
    ClosedFormMllm m1;
    ClosedFormMllm m8;
    MemoryVqaCache c1;
    MemoryVqaCache c8;
    EmbedOptions seq;
    EmbedOptions par;
    par.parallelism = 8;
    const auto a = embed_dataset(snap, set, m1, c1, seq);
    const auto b = embed_dataset(snap, set, m8, c8, par);
    CHECK(a.matrix == b.matrix);
    CHECK(a.stats.endpoint_calls == b.stats.endpoint_calls);
  }

  TEST_CASE("failed images retry once, then go missing; ceiling guards the run") {
    const auto snap = synthetic_snapshot(100);
    const auto set = make_set({"a?", "b?"});
    ClosedFormMllm mllm;
    mllm.fail_scenes = {3, 50, 97};
    mllm.flaky_scenes = {10};
    MemoryVqaCache cache;
    std::vector<nlohmann::json> events;
    const auto res = embed_dataset(snap, set, mllm, cache, {},
                                   [&](const nlohmann::json& e) { events.push_back(e); });
    CHECK(res.stats.failed_images == 3);
    CHECK(res.stats.endpoint_calls == 100 + 3 + 1);  // one retry for each failure and the flake
    CHECK(res.matrix.is_missing(3, 0));
    CHECK(res.matrix.is_missing(50, 1));
    CHECK_FALSE(res.matrix.is_missing(10, 0));
    CHECK(res.matrix.missing_fraction() == doctest::Approx(0.03));
    CHECK(events.size() == 3);

    // Failed rows are not cached: a second pass asks again.
    const int before = mllm.calls;
    embed_dataset(snap, set, mllm, cache, {});
    CHECK(mllm.calls - before == 6);

    ClosedFormMllm bad;
    for (std::size_t i = 0; i < 10; ++i) bad.fail_scenes.insert(i * 10);
    MemoryVqaCache c2;
    try {
      embed_dataset(snap, set, bad, c2, {});
      FAIL("expected the missing-answer ceiling to trip");
    } catch (const EmbeddingCeilingError& e) {
      CHECK(e.fraction() == doctest::Approx(0.10));
      CHECK(e.ceiling() == doctest::Approx(0.05));
    }
  }

  TEST_CASE("file images resolve against the manifest directory") {
    const fs::path dir = fs::temp_directory_path() / "hypoloop_img_test";
    fs::create_directories(dir / "imgs");
    std::ofstream(dir / "imgs" / "a.jpg", std::ios::binary) << "\xFF\xD8\xFF" << "abc";
    const auto bytes = resolve_image(dir, "imgs/a.jpg");
    CHECK(bytes.size() == 6);
    CHECK_THROWS_AS(resolve_image(dir, "imgs/missing.jpg"), IngestError);
    fs::remove_all(dir);
  }

  TEST_CASE("embedding preconditions") {
    const auto snap = synthetic_snapshot(3);
    ClosedFormMllm mllm;
    MemoryVqaCache cache;
    CHECK_THROWS_AS(embed_dataset(snap, HypothesisSet(), mllm, cache, {}), DomainError);
    EmbedOptions bad;
    bad.parallelism = 0;
    CHECK_THROWS_AS(embed_dataset(snap, make_set({"a?"}), mllm, cache, bad), ValidationError);
  }
}
