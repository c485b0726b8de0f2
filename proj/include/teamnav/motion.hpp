#pragma once

#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "teamnav/mapping.hpp"
#include "teamnav/rooms.hpp"
#include "teamnav/topology.hpp"
#include "teamnav/world.hpp"

namespace teamnav::motion {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

// Travel-time field from a set of goal cells, unit speed over known-free
// space, first-order upwind eikonal solve (Fast Marching).
struct DistanceField {
  Grid2D<double> values;
  std::set<Cell> goal_cells;

  double at(const Cell& c) const { return values.at(c); }
  bool reachable(const Cell& c) const { return values.in_bounds(c) && values.at(c) < kUnreachable; }
};

DistanceField fmm(const mapping::SemanticMap& map, const std::set<Cell>& goal_cells);

// Minimal-cost waypoint sequence; ties resolved toward the lexicographically
// smallest id sequence. Throws if src and dst are disconnected.
std::vector<int> dijkstra(const topology::TopoGraph& graph, int src, int dst);

// Waypoint inside the room mask with the least travel time from `pose`.
int select_entry_waypoint(const topology::TopoGraph& graph, const std::set<Cell>& room_mask,
                          const Cell& pose, const mapping::SemanticMap& map);

// Greedy descent on the field: step toward the smallest 4-neighbor value
// (N,E,S,W tie order). Emits the single turn that shortens the rotation when
// the heading is off-axis; exact 180 degree ties turn left.
world::Action next_action(const world::AgentPose& pose, const DistanceField& field);

// Room-to-room plan: entry waypoint, Dijkstra chain of mid-term goals, and a
// travel-time field toward the current mid-term goal.
struct PlanState {
  std::set<Cell> target_room;
  int entry_waypoint = -1;
  std::vector<int> topo_path;
  size_t path_index = 0;
  DistanceField field;

  int mid_term_goal() const { return topo_path.empty() ? -1 : topo_path[path_index]; }
  bool finished(const Cell& pose) const;
};

PlanState plan_to_room(const topology::TopoGraph& graph, const mapping::SemanticMap& map,
                       const std::set<Cell>& room_mask, const Cell& pose);

// Advances the plan when the mid-term waypoint is reached; returns the next
// discrete action, or nullopt when the plan is exhausted.
std::optional<world::Action> advance_plan(PlanState& plan, const topology::TopoGraph& graph,
                                          const mapping::SemanticMap& map,
                                          const world::AgentPose& pose);

// Twelve-frame rotation at a waypoint: one frame per heading per tick.
class PanoramaSession {
 public:
  explicit PanoramaSession(Cell waypoint) : waypoint_(waypoint) {}

  bool done() const { return frames_.size() >= (size_t)kHeadingCount; }
  const std::vector<rooms::FrameRecord>& frames() const { return frames_; }
  Cell waypoint() const { return waypoint_; }

  // Records a frame at the agent's current heading and returns the turn that
  // advances the rotation. Call once per tick until done().
  world::Action tick(const world::World& w, int agent_id, double frame_fov_deg);

 private:
  Cell waypoint_;
  std::vector<rooms::FrameRecord> frames_;
};

inline constexpr long kPanoramaCooldownTicks = 25;

}  // namespace teamnav::motion
