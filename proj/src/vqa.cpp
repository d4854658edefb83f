#include "hypoloop/vqa.hpp"

#include <atomic>
#include <cctype>
#include <charconv>
#include <fstream>
#include <thread>

#include "hypoloop/errors.hpp"
#include "hypoloop/prompts.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

namespace {

std::string numbered_options(const Hypothesis& h, std::string_view indent) {
  std::string s;
  for (std::size_t i = 0; i < h.options().size(); ++i) {
    s += std::string(indent) + std::to_string(i) + ": " + h.options()[i];
    if (i + 1 < h.options().size()) s += "\n";
  }
  return s;
}

}  // namespace

std::string render_batch_prompt(const HypothesisSet& set) {
  if (set.empty()) throw DomainError("cannot render a VQA prompt for an empty set");
  std::string questions;
  for (std::size_t j = 0; j < set.k(); ++j) {
    if (j) questions += "\n\n";
    questions += "Q" + std::to_string(j + 1) + ". " + set[j].question() + "\n" +
                 numbered_options(set[j], "   ");
  }
  std::string example = "[";
  for (std::size_t j = 0; j < set.k(); ++j) {
    if (j) example += ", ";
    example += "a" + std::to_string(j + 1);
  }
  example += "]";
  return prompts::render(prompts::emb_batch(), {{"count", std::to_string(set.k())},
                                                {"questions", questions},
                                                {"example", example}});
}

std::string render_single_prompt(const Hypothesis& hypothesis) {
  return prompts::render(prompts::emb_single(), {{"question", hypothesis.question()},
                                                 {"options", numbered_options(hypothesis, "")}});
}

namespace {

// Parses "1, 0 ,2" (no brackets). nullopt when any token is not an integer.
std::optional<std::vector<long long>> parse_int_list(std::string_view body) {
  std::vector<long long> out;
  std::size_t pos = 0;
  if (trim(body).empty()) return out;
  while (pos <= body.size()) {
    const std::size_t comma = std::min(body.find(',', pos), body.size());
    std::string tok = trim(body.substr(pos, comma - pos));
    if (tok.size() >= 2 && (tok.front() == '"' || tok.front() == '\'') &&
        tok.back() == tok.front()) {
      tok = tok.substr(1, tok.size() - 2);
    }
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

}  // namespace

AnswerRow parse_batch_answer(std::string_view reply, const HypothesisSet& set) {
  std::optional<std::vector<long long>> list;
  for (std::size_t open = reply.find('['); open != std::string_view::npos;
       open = reply.find('[', open + 1)) {
    const std::size_t close = reply.find(']', open);
    if (close == std::string_view::npos) break;
    list = parse_int_list(reply.substr(open + 1, close - open - 1));
    if (list && !list->empty()) break;
    list.reset();
  }
  if (!list) list = parse_int_list(reply);
  if (!list || list->empty()) throw ParseError("no integer list in VQA reply");
  if (list->size() != set.k()) {
    throw ParseError("VQA reply has " + std::to_string(list->size()) + " answers, expected " +
                     std::to_string(set.k()));
  }
  AnswerRow row;
  row.values.resize(set.k(), 0);
  row.missing.resize(set.k(), false);
  for (std::size_t j = 0; j < set.k(); ++j) {
    const long long v = (*list)[j];
    if (v < 0 || v >= static_cast<long long>(set[j].options().size())) {
      row.missing[j] = true;
    } else {
      row.values[j] = static_cast<int>(v);
    }
  }
  return row;
}

std::optional<int> parse_single_answer(std::string_view reply, const Hypothesis& hypothesis) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    if (i > 0 && reply[i - 1] == '-') return std::nullopt;
    long long v = 0;
    std::from_chars(reply.data() + i, reply.data() + reply.size(), v);
    if (v < 0 || v >= static_cast<long long>(hypothesis.options().size())) return std::nullopt;
    return static_cast<int>(v);
  }
  return std::nullopt;
}

std::string row_cache_key(std::string_view image_hash, std::string_view set_hash,
                          std::string_view model_id) {
  std::string buf = "row\x1f";
  buf.append(image_hash).append("\x1f").append(set_hash).append("\x1f").append(model_id);
  return sha256_hex(buf);
}

std::string question_cache_key(std::string_view image_hash, const Hypothesis& hypothesis,
                               std::string_view model_id) {
  std::string buf = "question\x1f";
  buf.append(image_hash).append("\x1f").append(hypothesis.question()).append("\x1f");
  for (const auto& o : hypothesis.options()) buf.append(o).append("\x1e");
  buf.append("\x1f").append(model_id);
  return sha256_hex(buf);
}

std::optional<std::string> MemoryVqaCache::get(std::string_view model_id, std::string_view key) {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(std::string(model_id) + "/" + std::string(key));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void MemoryVqaCache::put(std::string_view model_id, std::string_view key, std::string_view line) {
  std::unique_lock lock(mutex_);
  entries_[std::string(model_id) + "/" + std::string(key)] = std::string(line);
}

void MemoryVqaCache::evict(std::string_view model_id, std::string_view key) {
  std::unique_lock lock(mutex_);
  entries_.erase(std::string(model_id) + "/" + std::string(key));
}

std::size_t MemoryVqaCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string sanitize_model_id(std::string_view model_id) {
  std::string out;
  for (char c : model_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

DiskVqaCache::DiskVqaCache(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path DiskVqaCache::path_for(std::string_view model_id,
                                             std::string_view key) const {
  if (key.size() < 2) throw DomainError("cache key too short");
  return root_ / sanitize_model_id(model_id) / std::string(key.substr(0, 2)) / std::string(key);
}

std::optional<std::string> DiskVqaCache::get(std::string_view model_id, std::string_view key) {
  std::ifstream in(path_for(model_id, key), std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  return line;
}

void DiskVqaCache::put(std::string_view model_id, std::string_view key, std::string_view line) {
  const auto path = path_for(model_id, key);
  std::lock_guard lock(write_mutex_);
  write_file_atomic(path, std::string(line) + "\n");
  std::ofstream index(root_ / sanitize_model_id(model_id) / "index", std::ios::app);
  index << key << '\n';
}

void DiskVqaCache::evict(std::string_view model_id, std::string_view key) {
  std::lock_guard lock(write_mutex_);
  std::error_code ec;
  std::filesystem::remove(path_for(model_id, key), ec);
}

std::vector<std::byte> resolve_image(const std::filesystem::path& base_dir,
                                     std::string_view image_ref) {
  if (image_ref.rfind("synth://", 0) == 0) {
    std::vector<std::byte> out(image_ref.size());
    for (std::size_t i = 0; i < image_ref.size(); ++i) out[i] = static_cast<std::byte>(image_ref[i]);
    return out;
  }
  std::filesystem::path p(image_ref);
  if (p.is_relative()) p = base_dir / p;
  if (!std::filesystem::exists(p)) throw IngestError("image not found: " + p.string());
  return read_file_bytes(p);
}

namespace {

struct RowOutcome {
  std::vector<int> values;
  std::vector<bool> missing;
  std::vector<bool> asked;
  std::size_t calls = 0;
  bool row_hit = false;
  bool failed = false;
  std::string error;
};

RowOutcome embed_one(const DatasetSnapshot& snapshot, const SegmentRecord& rec,
                     const HypothesisSet& set, MllmClient& client, VqaCache& cache,
                     const std::string& set_hash, const std::string& model,
                     const EmbedOptions& options) {
  const std::size_t k = set.k();
  RowOutcome out;
  out.values.assign(k, 0);
  out.missing.assign(k, true);
  out.asked.assign(k, false);

  const std::vector<std::byte> image = resolve_image(snapshot.base_dir, rec.image_ref);
  const std::string image_hash = sha256_hex(std::span<const std::byte>(image));
  const std::string row_key = row_cache_key(image_hash, set_hash, model);

  if (auto line = cache.get(model, row_key)) {
    EmbeddingMatrix tmp("", 1, k);
    try {
      tmp.set_row_from_string(0, *line);
      for (std::size_t j = 0; j < k; ++j) {
        out.missing[j] = tmp.is_missing(0, j);
        out.values[j] = tmp.at(0, j);
      }
      out.row_hit = true;
      return out;
    } catch (const ParseError&) {
      // Unreadable entry: fall through and re-answer.
    }
  }

  std::vector<std::size_t> pending;
  std::vector<std::string> qkeys(k);
  for (std::size_t j = 0; j < k; ++j) {
    qkeys[j] = question_cache_key(image_hash, set[j], model);
    std::optional<std::string> hit = cache.get(model, qkeys[j]);
    int v = -1;
    if (hit) {
      const std::string s = trim(*hit);
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || v < 0 ||
          static_cast<std::size_t>(v) >= set[j].options().size()) {
        v = -1;
      }
    }
    if (v >= 0) {
      out.values[j] = v;
      out.missing[j] = false;
    } else {
      pending.push_back(j);
    }
  }

  if (!pending.empty()) {
    std::vector<Hypothesis> sub;
    for (std::size_t j : pending) {
      sub.push_back(set[j]);
      out.asked[j] = true;
    }
    const HypothesisSet subset(set.iter(), std::move(sub));
    const std::string prompt = render_batch_prompt(subset);
    bool answered = false;
    for (int attempt = 0; attempt <= options.retries_per_image && !answered; ++attempt) {
      ++out.calls;
      try {
        VqaRequest req;
        req.image_ref = rec.image_ref;
        req.image = image;
        req.prompt = prompt;
        req.set = &subset;
        const AnswerRow row = parse_batch_answer(client.answer(req), subset);
        for (std::size_t s = 0; s < pending.size(); ++s) {
          const std::size_t j = pending[s];
          if (row.missing[s]) continue;
          out.values[j] = row.values[s];
          out.missing[j] = false;
          cache.put(model, qkeys[j], std::to_string(row.values[s]));
        }
        answered = true;
      } catch (const ParseError& e) {
        out.error = e.what();
      } catch (const EndpointError& e) {
        out.error = e.what();
      }
    }
    out.failed = !answered;
  }

  // Endpoint failures are not cached so a later run asks again.
  if (!out.failed) {
    EmbeddingMatrix tmp("", 1, k);
    for (std::size_t j = 0; j < k; ++j) {
      if (!out.missing[j]) tmp.set(0, j, out.values[j]);
    }
    cache.put(model, row_key, tmp.row_string(0));
  }
  return out;
}

}  // namespace

EmbedResult embed_dataset(const DatasetSnapshot& snapshot, const HypothesisSet& set,
                          MllmClient& client, VqaCache& cache, const EmbedOptions& options,
                          const EventSink& events) {
  if (set.empty()) throw DomainError("cannot embed against an empty hypothesis set");
  if (options.parallelism < 1) throw ValidationError("parallelism must be >= 1");
  if (options.retries_per_image < 0) throw ValidationError("retries_per_image must be >= 0");

  const std::size_t n = snapshot.size();
  const std::size_t k = set.k();
  const std::string set_hash = set.hash();
  const std::string model = client.model_id();

  std::vector<RowOutcome> rows(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        rows[i] = embed_one(snapshot, snapshot.records[i], set, client, cache, set_hash, model,
                            options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(options.parallelism, std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EmbedResult result;
  result.matrix = EmbeddingMatrix(set_hash, n, k);
  result.stats.question_misses.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const RowOutcome& r = rows[i];
    result.stats.endpoint_calls += r.calls;
    if (r.row_hit) ++result.stats.row_cache_hits;
    if (r.failed) {
      ++result.stats.failed_images;
      if (events) {
        events({{"event", "vqa_image_failed"},
                {"segment_id", snapshot.records[i].segment_id},
                {"detail", r.error}});
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (r.asked[j]) ++result.stats.question_misses[j];
      if (!r.missing[j]) result.matrix.set(i, j, r.values[j]);
    }
  }
  result.matrix.validate(set);

  const double fraction = result.matrix.missing_fraction();
  if (fraction > options.missing_ceiling) {
    throw EmbeddingCeilingError("missing VQA answers " + format_fixed(100.0 * fraction, 2) +
                                    "% exceed the " +
                                    format_fixed(100.0 * options.missing_ceiling, 2) + "% ceiling",
                                fraction, options.missing_ceiling);
  }
  return result;
}

}  // namespace hypoloop
