#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypoloop/clients.hpp"
#include "hypoloop/ingest.hpp"
#include "hypoloop/loop.hpp"

namespace hypoloop {

struct DatasetSection {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> synthetic_spec;
  std::optional<SplitRatios> ratios;
  std::optional<std::uint64_t> seed;
};

struct LlmSection {
  bool mock = false;
  double exploit_bias = 0.5;
  EndpointConfig endpoint;
};

struct MllmSection {
  bool mock = false;
  std::optional<double> flip_prob;  // mock only; defaults to the world's value
  double fail_fraction = 0.0;       // mock only
  EndpointConfig endpoint;
  EmbedOptions embed;
  std::filesystem::path cache_dir;
};

struct OutputSection {
  std::filesystem::path run_dir;
  std::vector<std::string> formats = {"csv", "json"};
};

struct RunConfig {
  std::filesystem::path source;  // config file it came from
  DatasetSection dataset;
  LoopConfig loop;
  LlmSection llm;
  MllmSection mllm;
  OutputSection output;
  nlohmann::json document;  // as parsed, after command-line overrides
  std::string hash;         // sha256 of `document`
};

// Parses and validates a configuration document. Relative paths resolve
// against `base_dir`. Every problem found is reported at once in a
// ConfigError, one "section.field: message" line each.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

// Reads a hypotheses file: a JSON array (or {"hypotheses": [...]}) whose items
// are question strings or {"question", "options"} objects.
HypothesisSet load_hypotheses_file(const std::filesystem::path& path);

// 0 ok, 2 configuration, 3 endpoint, 4 data, 1 anything else.
int exit_code_for(const std::exception& e);

// Entry point for the command-line tool: verbs run, report, embed,
// validate-config.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hypoloop
