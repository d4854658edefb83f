#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>

#include <json.hpp>

#include "hypoloop/domain.hpp"

namespace hypoloop {

inline constexpr std::string_view kStateSchema = "hypoloop.state/1";

nlohmann::json hypothesis_to_json(const Hypothesis& h);
Hypothesis hypothesis_from_json(const nlohmann::json& j);

nlohmann::json state_to_json(const RunState& state);
RunState state_from_json(const nlohmann::json& j);

// Full document: {"schema_version", "sha256", "state"}; the digest covers the
// serialized state so hand edits are detected.
std::string serialize_state(const RunState& state);
RunState deserialize_state(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const RunState& state);
RunState load_checkpoint(const std::filesystem::path& path);

// Line-delimited JSON event stream. Each line gets a sequence number; no wall
// clock, so replays produce identical logs.
class EventLog {
 public:
  explicit EventLog(const std::filesystem::path& path);

  void write(const nlohmann::json& event);
  std::uint64_t count() const;

 private:
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::uint64_t seq_ = 0;
};

}  // namespace hypoloop
