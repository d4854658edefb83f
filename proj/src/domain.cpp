#include "hypoloop/domain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "hypoloop/errors.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

std::string_view to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::seed: return "seed";
    case GenerationMode::exploit: return "exploit";
    case GenerationMode::explore: return "explore";
  }
  return "?";
}

GenerationMode generation_mode_from_string(std::string_view s) {
  if (s == "seed") return GenerationMode::seed;
  if (s == "exploit") return GenerationMode::exploit;
  if (s == "explore") return GenerationMode::explore;
  throw ValidationError("unknown generation mode '" + std::string(s) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_iters: return "max_iters";
    case StopReason::all_significant: return "all_significant";
    case StopReason::patience_exhausted: return "patience_exhausted";
    case StopReason::aborted: return "aborted";
  }
  return "?";
}

StopReason stop_reason_from_string(std::string_view s) {
  if (s == "max_iters") return StopReason::max_iters;
  if (s == "all_significant") return StopReason::all_significant;
  if (s == "patience_exhausted") return StopReason::patience_exhausted;
  if (s == "aborted") return StopReason::aborted;
  throw ValidationError("unknown stop reason '" + std::string(s) + "'");
}

namespace {

bool is_trailing_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0 && c != ')' && c != ']' && c != '"' &&
         c != '\'';
}

}  // namespace

std::string normalize_question(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  while (!out.empty() && (is_trailing_punct(out.back()) || out.back() == ' ')) out.pop_back();
  if (out.empty()) throw ValidationError("question is empty after normalization");
  return out;
}

std::string Hypothesis::id_for(std::string_view question) {
  return sha256_hex(normalize_question(question)).substr(0, 16);
}

Hypothesis Hypothesis::make(std::string_view question, std::vector<std::string> options,
                            GenerationMode origin, int created_iter) {
  Hypothesis h;
  h.question_ = trim(question);
  h.canonical_ = normalize_question(question);
  h.id_ = sha256_hex(h.canonical_).substr(0, 16);
  if (options.size() < 2) {
    throw ValidationError("hypothesis '" + h.question_ + "' needs at least two options");
  }
  std::set<std::string> seen;
  for (auto& o : options) {
    o = trim(o);
    if (o.empty()) throw ValidationError("hypothesis '" + h.question_ + "' has an empty option");
    if (!seen.insert(o).second) {
      throw ValidationError("hypothesis '" + h.question_ + "' repeats option '" + o + "'");
    }
  }
  if (created_iter < 0) throw ValidationError("created_iter must be >= 0");
  h.options_ = std::move(options);
  h.origin_ = origin;
  h.created_iter_ = created_iter;
  return h;
}

HypothesisSet::HypothesisSet(int iter, std::vector<Hypothesis> members)
    : iter_(iter), members_(std::move(members)) {
  if (iter < 0) throw ValidationError("set iteration must be >= 0");
  std::set<std::string> ids;
  for (const auto& h : members_) {
    if (!ids.insert(h.id()).second) {
      throw ValidationError("duplicate hypothesis in set: '" + h.question() + "'");
    }
  }
}

std::vector<std::string> HypothesisSet::ids() const {
  std::vector<std::string> out;
  out.reserve(members_.size());
  for (const auto& h : members_) out.push_back(h.id());
  return out;
}

bool HypothesisSet::contains_question(std::string_view question) const {
  const std::string id = Hypothesis::id_for(question);
  return index_of(id).has_value();
}

std::optional<std::size_t> HypothesisSet::index_of(std::string_view id) const {
  for (std::size_t j = 0; j < members_.size(); ++j) {
    if (members_[j].id() == id) return j;
  }
  return std::nullopt;
}

std::string HypothesisSet::hash() const {
  std::string buf;
  for (const auto& h : members_) {
    buf += h.question();
    buf += '\x1f';
    for (const auto& o : h.options()) {
      buf += o;
      buf += '\x1e';
    }
    buf += '\x1d';
  }
  return sha256_hex(buf);
}

EmbeddingMatrix::EmbeddingMatrix(std::string set_id, std::size_t rows, std::size_t cols)
    : set_id_(std::move(set_id)),
      rows_(rows),
      cols_(cols),
      values_(rows * cols, 0),
      missing_(rows * cols, 1) {}

void EmbeddingMatrix::set(std::size_t i, std::size_t j, int value) {
  if (value < 0) throw DomainError("embedding values are non-negative option indices");
  values_[i * cols_ + j] = value;
  missing_[i * cols_ + j] = 0;
}

void EmbeddingMatrix::set_missing(std::size_t i, std::size_t j) {
  values_[i * cols_ + j] = 0;
  missing_[i * cols_ + j] = 1;
}

std::size_t EmbeddingMatrix::missing_count() const {
  return static_cast<std::size_t>(std::count(missing_.begin(), missing_.end(), 1));
}

double EmbeddingMatrix::missing_fraction() const {
  if (missing_.empty()) return 0.0;
  return static_cast<double>(missing_count()) / static_cast<double>(missing_.size());
}

void EmbeddingMatrix::validate(const HypothesisSet& set) const {
  if (set.k() != cols_) throw DomainError("embedding width does not match hypothesis set");
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      if (is_missing(i, j)) continue;
      const int v = at(i, j);
      if (v < 0 || static_cast<std::size_t>(v) >= set[j].options().size()) {
        throw DomainError("embedding value out of option range at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
      }
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select_rows(const std::vector<std::size_t>& rows) const {
  EmbeddingMatrix out(set_id_, rows.size(), cols_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t src = rows[r];
    for (std::size_t j = 0; j < cols_; ++j) {
      out.values_[r * cols_ + j] = values_[src * cols_ + j];
      out.missing_[r * cols_ + j] = missing_[src * cols_ + j];
    }
  }
  return out;
}

std::string EmbeddingMatrix::row_string(std::size_t i) const {
  std::string out;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (j) out.push_back(',');
    if (is_missing(i, j)) {
      out.push_back('?');
    } else {
      out += std::to_string(at(i, j));
    }
  }
  return out;
}

void EmbeddingMatrix::set_row_from_string(std::size_t i, std::string_view row) {
  std::size_t j = 0;
  std::size_t pos = 0;
  while (pos <= row.size()) {
    const std::size_t comma = std::min(row.find(',', pos), row.size());
    const std::string cell = trim(row.substr(pos, comma - pos));
    if (j >= cols_) throw ParseError("embedding row has too many entries");
    if (cell == "?") {
      set_missing(i, j);
    } else {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || v < 0) {
        throw ParseError("bad embedding cell '" + cell + "'");
      }
      set(i, j, v);
    }
    ++j;
    pos = comma + 1;
  }
  if (j != cols_) throw ParseError("embedding row has too few entries");
}

double Metrics::require_r2() const {
  if (!r2) throw InferenceError("R^2 is undefined for a constant outcome");
  return *r2;
}

std::vector<double> AssessmentResult::hypothesis_p_values() const {
  return {p_values.begin(), p_values.begin() + static_cast<std::ptrdiff_t>(hypothesis_count)};
}

const IterationRecord* RunState::incumbent() const {
  for (const auto& it : iterations) {
    if (it.t == incumbent_iter && it.accepted) return &it;
  }
  return nullptr;
}

}  // namespace hypoloop
