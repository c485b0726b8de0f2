#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "teamnav/grid.hpp"

namespace teamnav::world {

enum class GroundCell : uint8_t { Free, Wall };

struct RoomGT {
  int id = 0;
  std::set<Cell> mask;
};

struct ObjectInstance {
  std::string cls;
  Cell cell;
  int room_id = -1;
};

struct AgentPose {
  Cell cell;
  int heading = 0;  // [0, 12)
  bool alive = true;
};

struct TargetSet {
  std::vector<std::string> classes;  // g_1..g_m, order as declared
  std::set<std::string> remaining;
};

struct VisibleCell {
  Cell cell;
  GroundCell occupancy;
};

struct VisibleObject {
  std::string cls;
  Cell cell;
};

struct Observation {
  int agent_id = -1;
  std::vector<VisibleCell> visible_cells;    // sorted raster order
  std::vector<VisibleObject> visible_objects;  // sorted by (cell, class)
  AgentPose pose;
  long tick = 0;
};

enum class SubtaskResult { Success, Failure };

struct SubtaskOutcome {
  int agent_id = -1;
  std::string declared_class;
  SubtaskResult result = SubtaskResult::Failure;
  long tick = 0;
};

enum class ActionKind : uint8_t { Forward, TurnLeft, TurnRight, Declare, NoOp };

struct Action {
  ActionKind kind = ActionKind::NoOp;
  std::string declare_class;  // Declare only
};

enum class EventKind : uint8_t {
  Bump,             // forward blocked by wall, bound or non-axis heading
  DeclareSuccess,
  DeclareFailure,
  DeclareRejected,  // declare during cooldown
  ActionRejected,   // action for dead or unknown agent
  EpisodeDone,
};

struct Event {
  long tick = 0;
  int agent_id = -1;
  EventKind kind = EventKind::Bump;
  std::string detail;
};

struct SensorConfig {
  int range = 5;          // Chebyshev radius, cells
  double fov_deg = 360.0;  // full panorama by default
};

struct World {
  Grid2D<GroundCell> grid;
  double resolution_m = 0.25;
  std::vector<RoomGT> rooms;
  std::vector<ObjectInstance> objects;
  std::vector<AgentPose> agents;
  TargetSet targets;
  uint64_t rng_seed = 0;
  long max_steps = 0;
  SensorConfig sensor;

  long tick = 0;
  bool episode_done = false;
  std::vector<long> declare_cooldown_until;  // per agent, next tick a declare is allowed

  bool is_free(const Cell& c) const {
    return grid.in_bounds(c) && grid.at(c) == GroundCell::Free;
  }
  int free_cell_count() const;
  int room_of(const Cell& c) const;  // -1 if no room contains c
};

// How many ticks an agent must wait between declare attempts.
inline constexpr long kDeclareCooldownTicks = 10;
// Success needs the agent within the 4-neighborhood of an instance (or on it).
inline constexpr int kSuccessRadius = 1;

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses and validates a scenario document (JSON text, schema in docs/formats.md).
World load_scenario(const std::string& scenario_text);
World load_scenario_file(const std::string& path);

// Line-of-sight between cell centers on the ground-truth grid. Walls block;
// rays through a lattice corner slip between diagonal wall pairs.
bool line_of_sight(const Grid2D<GroundCell>& grid, const Cell& from, const Cell& to);

// All cells within sensor range and FOV of the agent's heading, unoccluded.
Observation sense(const World& w, int agent_id);
// Same sensor evaluated at an arbitrary pose; used for panorama frames and surveys.
Observation sense_from(const World& w, int agent_id, const AgentPose& pose, double fov_deg);

struct StepResult {
  std::vector<Event> events;
  std::vector<SubtaskOutcome> outcomes;
};

// Applies one lockstep tick: all actions for tick t, ascending agent id.
StepResult step(World& w, const std::map<int, Action>& actions);

// World-invariant diagnostics (empty = clean); used by validate-scenario.
std::vector<std::string> validate_world(const World& w);

}  // namespace teamnav::world
