#include "hypoloop/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "hypoloop/errors.hpp"
#include "hypoloop/rng.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

double compute_crash_rate(double no_crash, double aadt, double length_km) {
  if (!std::isfinite(no_crash) || !std::isfinite(aadt) || !std::isfinite(length_km)) {
    throw DomainError("crash-rate inputs must be finite");
  }
  if (aadt <= 0.0) throw DomainError("aadt must be positive");
  if (length_km <= 0.0) throw DomainError("segment length must be positive");
  if (no_crash < 0.0) throw DomainError("crash count must be non-negative");
  return no_crash / (aadt * length_km * 365.0 / 1'000'000.0);
}

SplitCounts split_counts_for(std::size_t n, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 ||
      std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be non-negative and sum to 1");
  }
  const auto round_count = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5));
  };
  SplitCounts c;
  c.train = std::min(round_count(r.train), n);
  c.val = std::min(round_count(r.val), n - c.train);
  c.test = n - c.train - c.val;
  return c;
}

std::vector<std::size_t> DatasetSnapshot::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<double> DatasetSnapshot::outcome() const {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.crash_rate);
  return y;
}

DatasetSnapshot DatasetSnapshot::subset(std::initializer_list<Split> splits) const {
  DatasetSnapshot out;
  out.manifest_hash = manifest_hash;
  out.base_dir = base_dir;
  for (const auto& r : records) {
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) continue;
    out.records.push_back(r);
    switch (r.split) {
      case Split::train: ++out.split_counts.train; break;
      case Split::val: ++out.split_counts.val; break;
      case Split::test: ++out.split_counts.test; break;
    }
  }
  return out;
}

DatasetSummary DatasetSnapshot::summary() const {
  DatasetSummary s;
  s.manifest_hash = manifest_hash;
  for (const auto& r : records) {
    s.segment_ids.push_back(r.segment_id);
    s.outcome.push_back(r.crash_rate);
    s.splits.push_back(r.split);
  }
  return s;
}

void assign_splits(std::vector<SegmentRecord>& records, const SplitRatios& ratios,
                   std::uint64_t seed) {
  const SplitCounts counts = split_counts_for(records.size(), ratios);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed ^ rng_tag::kSplit);
  fisher_yates(std::span<std::size_t>(order), rng);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    Split s = Split::test;
    if (pos < counts.train) {
      s = Split::train;
    } else if (pos < counts.train + counts.val) {
      s = Split::val;
    }
    records[order[pos]].split = s;
  }
}

namespace {

// Minimal RFC 4180 line splitter: double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw std::invalid_argument(cell);
  }
  return v;
}

std::string join_rows(const std::vector<std::size_t>& rows) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < rows.size(); ++i) ss << (i ? ", " : "") << rows[i];
  return ss.str();
}

}  // namespace

DatasetSnapshot parse_manifest(std::string_view text, const IngestConfig& config,
                               std::string manifest_hash) {
  std::vector<std::string> lines;
  {
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      std::string line(text.substr(pos, nl - pos));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      pos = nl + 1;
    }
  }
  // Strip a UTF-8 BOM.
  if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
  if (lines.empty() || trim(lines[0]).empty()) throw IngestError("manifest has no header row");

  const auto header = split_csv_line(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!col.emplace(header[c], c).second) {
      throw IngestError("manifest header repeats column '" + header[c] + "'");
    }
  }
  const auto has = [&](const char* name) { return col.count(name) != 0; };
  std::vector<std::string> missing;
  for (const char* required : {"segment_id", "image_ref"}) {
    if (!has(required)) missing.emplace_back(required);
  }
  const bool has_rate = has("crash_rate");
  const bool has_triple = has("no_crash") && has("aadt") && has("length_km");
  if (!has_rate && !has_triple) missing.emplace_back("crash_rate or no_crash/aadt/length_km");
  if (!missing.empty()) {
    std::string msg = "manifest is missing required columns:";
    for (const auto& m : missing) msg += " " + m;
    throw IngestError(msg);
  }
  static const std::vector<std::string> kKnown = {"segment_id", "image_ref", "crash_rate",
                                                  "no_crash",   "aadt",      "length_km"};
  std::vector<std::pair<std::string, std::size_t>> extra_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(kKnown.begin(), kKnown.end(), header[c]) == kKnown.end()) {
      extra_cols.emplace_back(header[c], c);
    }
  }

  DatasetSnapshot snap;
  snap.manifest_hash = manifest_hash.empty() ? sha256_hex(text) : std::move(manifest_hash);
  std::vector<std::size_t> bad_rows;
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> first_row_of;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const std::size_t row = li;  // 1-based data row number
    const auto cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) {
      bad_rows.push_back(row);
      problems.push_back("row " + std::to_string(row) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(cells.size()));
      continue;
    }
    SegmentRecord rec;
    rec.segment_id = cells[col["segment_id"]];
    rec.image_ref = cells[col["image_ref"]];
    if (rec.segment_id.empty() || rec.image_ref.empty()) {
      bad_rows.push_back(row);
      problems.push_back("row " + std::to_string(row) + ": empty segment_id or image_ref");
      continue;
    }
    if (auto [it, inserted] = first_row_of.emplace(rec.segment_id, row); !inserted) {
      bad_rows.push_back(it->second);
      bad_rows.push_back(row);
      problems.push_back("rows " + std::to_string(it->second) + " and " + std::to_string(row) +
                         ": duplicate segment_id '" + rec.segment_id + "'");
      continue;
    }
    try {
      std::optional<double> rate;
      if (has_rate) rate = parse_number(cells[col["crash_rate"]]);
      if (has_triple) {
        const auto nc = parse_number(cells[col["no_crash"]]);
        const auto aadt = parse_number(cells[col["aadt"]]);
        const auto len = parse_number(cells[col["length_km"]]);
        if (nc && aadt && len) rec.inputs = CrashInputs{*nc, *aadt, *len};
      }
      if (rate) {
        if (*rate < 0) throw DomainError("negative crash_rate");
        rec.crash_rate = *rate;
        if (rec.inputs) {
          const double derived =
              compute_crash_rate(rec.inputs->no_crash, rec.inputs->aadt, rec.inputs->length_km);
          const double scale = std::max({std::abs(derived), std::abs(*rate), 1e-300});
          if (std::abs(derived - *rate) / scale > 1e-9) {
            throw DomainError("crash_rate disagrees with no_crash/aadt/length_km");
          }
        }
      } else if (rec.inputs) {
        rec.crash_rate =
            compute_crash_rate(rec.inputs->no_crash, rec.inputs->aadt, rec.inputs->length_km);
      } else {
        throw DomainError("no crash_rate and incomplete no_crash/aadt/length_km");
      }
      for (const auto& [name, c] : extra_cols) {
        if (auto v = parse_number(cells[c])) rec.extra_covariates.emplace(name, *v);
      }
    } catch (const std::invalid_argument& e) {
      bad_rows.push_back(row);
      problems.push_back("row " + std::to_string(row) + ": unparsable number '" + e.what() + "'");
      continue;
    } catch (const DomainError& e) {
      bad_rows.push_back(row);
      problems.push_back("row " + std::to_string(row) + ": " + e.what());
      continue;
    }
    snap.records.push_back(std::move(rec));
  }

  if (!bad_rows.empty()) {
    std::sort(bad_rows.begin(), bad_rows.end());
    bad_rows.erase(std::unique(bad_rows.begin(), bad_rows.end()), bad_rows.end());
    std::string msg = "manifest rejected (rows " + join_rows(bad_rows) + ")";
    for (const auto& p : problems) msg += "\n  " + p;
    throw IngestError(msg, bad_rows);
  }
  if (snap.records.empty()) throw IngestError("manifest has no data rows");

  assign_splits(snap.records, config.ratios, config.seed);
  snap.split_counts = split_counts_for(snap.records.size(), config.ratios);
  return snap;
}

DatasetSnapshot load_manifest(const std::filesystem::path& path, const IngestConfig& config) {
  if (!std::filesystem::exists(path)) throw IngestError("manifest not found: " + path.string());
  const std::string text = read_file(path);
  auto snap = parse_manifest(text, config, sha256_hex(text));
  snap.base_dir = path.parent_path();
  return snap;
}

std::vector<Fold> kfold_splits(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DomainError("k-fold needs at least 2 folds");
  if (folds > n) {
    throw DomainError("cannot split " + std::to_string(n) + " rows into " +
                      std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(seed ^ rng_tag::kKFold);
  fisher_yates(std::span<std::size_t>(order), rng);

  std::vector<Fold> out(folds);
  std::vector<std::size_t> fold_of(n);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[order[pos++]] = f;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < folds; ++f) {
      (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
    }
  }
  return out;
}

}  // namespace hypoloop
