#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hypoloop/clients.hpp"
#include "hypoloop/domain.hpp"
#include "hypoloop/hypogen.hpp"
#include "hypoloop/ingest.hpp"

namespace hypoloop {

std::string render_batch_prompt(const HypothesisSet& set);
std::string render_single_prompt(const Hypothesis& hypothesis);

struct AnswerRow {
  std::vector<int> values;
  std::vector<bool> missing;
};

// Takes the first bracketed integer list in the reply (or the whole reply when
// it is a bare comma-separated list). Out-of-range values become missing; a
// list of the wrong length is a ParseError.
AnswerRow parse_batch_answer(std::string_view reply, const HypothesisSet& set);

// First integer in the reply; nullopt when absent or out of range.
std::optional<int> parse_single_answer(std::string_view reply, const Hypothesis& hypothesis);

// Two key spaces share one store: whole-row entries keyed by
// (image, set, model) and single-answer entries keyed by
// (image, question + options, model).
std::string row_cache_key(std::string_view image_hash, std::string_view set_hash,
                          std::string_view model_id);
std::string question_cache_key(std::string_view image_hash, const Hypothesis& hypothesis,
                               std::string_view model_id);

// Concurrent readers, serialized writers.
class VqaCache {
 public:
  virtual ~VqaCache() = default;
  virtual std::optional<std::string> get(std::string_view model_id, std::string_view key) = 0;
  virtual void put(std::string_view model_id, std::string_view key, std::string_view line) = 0;
  virtual void evict(std::string_view model_id, std::string_view key) = 0;
};

class MemoryVqaCache final : public VqaCache {
 public:
  std::optional<std::string> get(std::string_view model_id, std::string_view key) override;
  void put(std::string_view model_id, std::string_view key, std::string_view line) override;
  void evict(std::string_view model_id, std::string_view key) override;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::string, std::less<>> entries_;
};

// cache/<model-id>/<first two hex chars of key>/<key>, each file one UTF-8
// line. Every write appends the key to cache/<model-id>/index.
class DiskVqaCache final : public VqaCache {
 public:
  explicit DiskVqaCache(std::filesystem::path root);

  std::optional<std::string> get(std::string_view model_id, std::string_view key) override;
  void put(std::string_view model_id, std::string_view key, std::string_view line) override;
  void evict(std::string_view model_id, std::string_view key) override;

  std::filesystem::path path_for(std::string_view model_id, std::string_view key) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::mutex write_mutex_;
};

// Model ids may contain '/' and ':'; this keeps them to one path component.
std::string sanitize_model_id(std::string_view model_id);

// image_ref -> bytes. "synth://" references resolve to their own bytes; other
// references are file paths, relative ones taken against the snapshot base dir.
std::vector<std::byte> resolve_image(const std::filesystem::path& base_dir,
                                     std::string_view image_ref);

struct EmbedOptions {
  std::size_t parallelism = 1;
  double missing_ceiling = 0.05;
  int retries_per_image = 1;
};

struct EmbedStats {
  std::size_t endpoint_calls = 0;
  std::size_t row_cache_hits = 0;
  std::size_t failed_images = 0;
  // Per hypothesis column: images for which that question had to be sent.
  std::vector<std::size_t> question_misses;
};

struct EmbedResult {
  EmbeddingMatrix matrix;
  EmbedStats stats;
};

// One row per record in snapshot order. Consults the row cache, then the
// per-question cache, and sends only uncached questions to the endpoint. At
// most `parallelism` requests are in flight. Throws EmbeddingCeilingError when
// the missing fraction exceeds the ceiling (caches are written first).
EmbedResult embed_dataset(const DatasetSnapshot& snapshot, const HypothesisSet& set,
                          MllmClient& client, VqaCache& cache, const EmbedOptions& options,
                          const EventSink& events = {});

}  // namespace hypoloop
