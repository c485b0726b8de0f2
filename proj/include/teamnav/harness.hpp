#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "teamnav/oracle.hpp"
#include "teamnav/protocol.hpp"
#include "teamnav/rooms.hpp"
#include "teamnav/world.hpp"

namespace teamnav::harness {

// Crash schedule entries; kCrashLeader crashes whoever currently leads.
inline constexpr int kCrashLeader = -1;

struct CrashPlan {
  std::map<int, long> at_tick;  // agent id (or kCrashLeader) -> crash tick
};

// Parses "agent:tick,agent:tick" crash specs from the CLI.
CrashPlan parse_crash_spec(const std::string& spec);

struct RunConfig {
  std::string scenario_path;
  int team_size = -1;  // -1 = all scenario agents
  std::string oracle_impl = "rule";
  std::string describer_impl = "rule";
  int net_latency = 1;
  CrashPlan crashes;
  std::optional<uint64_t> seed;  // overrides the scenario seed
  std::string out_dir;           // empty = keep everything in memory
  std::string data_dir = "data";
  oracle::RemoteOracleConfig remote_oracle;
  rooms::RemoteConfig remote_describer;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

struct TargetOutcome {
  std::string cls;
  std::string result;  // success | timeout
  long tick = -1;
  int agent = -1;
};

struct EpisodeReport {
  std::string scenario_path;
  uint64_t seed = 0;
  std::vector<TargetOutcome> per_target;
  long total_ticks = 0;
  long max_steps = 0;
  std::map<int, long> path_cells;  // forward moves per agent
  std::map<std::string, long> message_counts;
  long messages_total = 0;
  int leadership_handoffs = 0;
  int oracle_degradations = 0;
  long trigger_events = 0;
  long broadcast_baseline = 0;  // what an all-to-all scheme would have sent
  long failed_declares = 0;
  std::vector<std::string> invariant_violations;
  bool all_found = false;
  bool lineage_contacted = false;
  long recoveries = 0;
  double wall_clock_ms = 0.0;  // excluded from digests and traces

  nlohmann::json to_json(bool include_wall_clock = true) const;
};

// Runs the full lockstep episode (sense -> integrate -> segment -> trigger ->
// protocol -> plan -> act) and optionally writes report, message log and
// replay trace into config.out_dir.
EpisodeReport run_episode(const RunConfig& config);

// In-memory variant for tests: returns the report plus trace text.
struct EpisodeArtifacts {
  EpisodeReport report;
  std::string trace_text;
  std::string message_log_text;
};
EpisodeArtifacts run_episode_artifacts(const RunConfig& config);

// Verifies a trace's checksum chain, reconstructs the timeline, re-runs the
// protocol invariant suite over the recorded events and compares against the
// live verdicts. Returns 0 on success.
int replay(const std::string& trace_path, std::ostream& out);
int replay_text(const std::string& trace_text, std::ostream& out);

// World-invariant diagnostics for a scenario file; empty means clean.
std::vector<std::string> validate_scenario(const std::string& path);

}  // namespace teamnav::harness
