#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hypoloop/domain.hpp"

namespace hypoloop {

// Crashes per million vehicle-kilometres:
//   no_crash / (aadt * length_km * 365 / 1e6)
double compute_crash_rate(double no_crash, double aadt, double length_km);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

// Record counts for n rows: train and val are round-half-up of n * ratio,
// test takes the remainder.
SplitCounts split_counts_for(std::size_t n, const SplitRatios& ratios);

struct DatasetSnapshot {
  std::vector<SegmentRecord> records;
  SplitCounts split_counts;
  std::string manifest_hash;
  std::filesystem::path base_dir;  // image_ref paths resolve against this

  std::size_t size() const { return records.size(); }
  std::vector<std::size_t> indices_of(Split split) const;
  std::vector<double> outcome() const;

  // Records in the given splits, original order preserved.
  DatasetSnapshot subset(std::initializer_list<Split> splits) const;

  DatasetSummary summary() const;
};

// Shuffles row indices with SplitMix64(seed ^ rng_tag::kSplit) + Fisher-Yates
// and labels the first counts.train as train, the next counts.val as val, the
// rest as test. Records keep their manifest order.
void assign_splits(std::vector<SegmentRecord>& records, const SplitRatios& ratios,
                   std::uint64_t seed);

struct IngestConfig {
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

// Comma-separated manifest with a header row. Required: segment_id, image_ref,
// and either crash_rate or all of no_crash/aadt/length_km. Every other column
// must be numeric and becomes an extra covariate.
DatasetSnapshot load_manifest(const std::filesystem::path& path, const IngestConfig& config);
DatasetSnapshot parse_manifest(std::string_view text, const IngestConfig& config,
                               std::string manifest_hash = {});

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Shuffled partition into `folds` test sets; the first n % folds folds get one
// extra row. Index sets are returned sorted.
std::vector<Fold> kfold_splits(std::size_t n, std::size_t folds, std::uint64_t seed);

inline std::vector<Fold> kfold_splits(const DatasetSnapshot& snapshot, std::size_t folds,
                                      std::uint64_t seed) {
  return kfold_splits(snapshot.size(), folds, seed);
}

}  // namespace hypoloop
