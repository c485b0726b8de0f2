#include "teamnav/motion.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace teamnav::motion {

using mapping::MapCell;
using mapping::SemanticMap;
using topology::TopoGraph;

DistanceField fmm(const SemanticMap& map, const std::set<Cell>& goal_cells) {
  if (goal_cells.empty()) throw std::invalid_argument("fmm: empty goal set");
  for (const auto& g : goal_cells)
    if (!map.known_free(g))
      throw std::invalid_argument("fmm: goal cell " + to_string(g) + " is not known free");

  DistanceField field;
  field.values = Grid2D<double>(map.width(), map.height(), kUnreachable);
  field.goal_cells = goal_cells;

  struct Entry {
    double t;
    Cell c;
    bool operator>(const Entry& o) const {
      if (t != o.t) return t > o.t;
      return o.c < c;  // deterministic pop order on ties
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> narrow;
  Grid2D<uint8_t> frozen(map.width(), map.height(), 0);

  for (const auto& g : goal_cells) {
    field.values.at(g) = 0.0;
    narrow.push({0.0, g});
  }

  auto solve = [&](const Cell& c) {
    auto axis_min = [&](Cell a, Cell b) {
      double m = kUnreachable;
      if (field.values.in_bounds(a) && frozen.at(a)) m = std::min(m, field.values.at(a));
      if (field.values.in_bounds(b) && frozen.at(b)) m = std::min(m, field.values.at(b));
      return m;
    };
    double a = axis_min({c.x - 1, c.y}, {c.x + 1, c.y});
    double b = axis_min({c.x, c.y - 1}, {c.x, c.y + 1});
    if (a > b) std::swap(a, b);
    if (b == kUnreachable || b - a >= 1.0) return a + 1.0;
    // Two-sided quadratic upwind update, unit speed.
    return 0.5 * (a + b + std::sqrt(2.0 - (a - b) * (a - b)));
  };

  while (!narrow.empty()) {
    Entry e = narrow.top();
    narrow.pop();
    if (frozen.at(e.c) || e.t > field.values.at(e.c)) continue;  // stale entry
    frozen.at(e.c) = 1;
    for (const auto& d : nesw()) {
      Cell n{e.c.x + d.x, e.c.y + d.y};
      if (!field.values.in_bounds(n) || frozen.at(n)) continue;
      if (map.at(n) != MapCell::Free) continue;
      double t = solve(n);
      if (t < field.values.at(n)) {
        field.values.at(n) = t;
        narrow.push({t, n});
      }
    }
  }
  return field;
}

std::vector<int> dijkstra(const TopoGraph& graph, int src, int dst) {
  const int n = (int)graph.waypoints.size();
  if (src < 0 || src >= n || dst < 0 || dst >= n)
    throw std::out_of_range("dijkstra: waypoint id out of range");
  if (src == dst) return {src};

  const long inf = std::numeric_limits<long>::max();
  std::vector<long> dist(n, inf);
  dist[dst] = 0;  // distances toward dst; the graph is undirected
  using QE = std::pair<long, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
  pq.push({0, dst});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : graph.adjacency[u])
      if (d + w < dist[v]) {
        dist[v] = d + w;
        pq.push({dist[v], v});
      }
  }
  if (dist[src] == inf) throw std::runtime_error("no topo path");

  // Walk the shortest-path DAG from src, always taking the smallest usable
  // neighbor id: yields the lexicographically smallest optimal sequence.
  std::vector<int> path{src};
  int cur = src;
  while (cur != dst) {
    int next = -1;
    for (const auto& [v, w] : graph.adjacency[cur]) {
      if (dist[v] + w == dist[cur] && (next == -1 || v < next)) next = v;
    }
    if (next == -1) throw std::logic_error("dijkstra: broken shortest-path walk");
    path.push_back(next);
    cur = next;
  }
  return path;
}

int select_entry_waypoint(const TopoGraph& graph, const std::set<Cell>& room_mask,
                          const Cell& pose, const SemanticMap& map) {
  std::vector<int> in_room;
  for (const auto& w : graph.waypoints)
    if (room_mask.count(w.cell)) in_room.push_back(w.id);
  if (in_room.empty()) throw std::runtime_error("no waypoint in room");

  DistanceField field = fmm(map, {pose});
  int best = -1;
  double best_t = kUnreachable;
  for (int id : in_room) {
    double t = field.at(graph.waypoints[id].cell);
    if (t < best_t) {
      best_t = t;
      best = id;
    }
  }
  if (best == -1) throw std::runtime_error("no topo path");
  return best;
}

world::Action next_action(const world::AgentPose& pose, const DistanceField& field) {
  double here = field.at(pose.cell);
  if (here >= kUnreachable) throw std::runtime_error("trapped: pose not reachable in field");
  if (here == 0.0) return {world::ActionKind::NoOp, ""};

  int best_heading = -1;
  double best = kUnreachable;
  static const int axis_headings[4] = {3, 0, 9, 6};  // N, E, S, W
  for (int k = 0; k < 4; ++k) {
    Cell d = heading_axis_dir(axis_headings[k]);
    Cell n{pose.cell.x + d.x, pose.cell.y + d.y};
    if (!field.values.in_bounds(n)) continue;
    double v = field.at(n);
    if (v < best) {
      best = v;
      best_heading = axis_headings[k];
    }
  }
  if (best_heading == -1 || best >= kUnreachable)
    throw std::runtime_error("trapped: all neighbors unreachable");

  if (pose.heading == best_heading) return {world::ActionKind::Forward, ""};
  int diff = heading_wrap(best_heading - pose.heading);
  return diff <= 6 ? world::Action{world::ActionKind::TurnLeft, ""}
                   : world::Action{world::ActionKind::TurnRight, ""};
}

bool PlanState::finished(const Cell& pose) const {
  if (target_room.count(pose)) return true;
  return !topo_path.empty() && path_index + 1 >= topo_path.size() &&
         field.goal_cells.count(pose) > 0;
}

PlanState plan_to_room(const TopoGraph& graph, const SemanticMap& map,
                       const std::set<Cell>& room_mask, const Cell& pose) {
  PlanState plan;
  plan.target_room = room_mask;
  plan.entry_waypoint = select_entry_waypoint(graph, room_mask, pose, map);

  // Nearest waypoint to the agent starts the topological path.
  DistanceField from_pose = fmm(map, {pose});
  int start = -1;
  double best = kUnreachable;
  for (const auto& w : graph.waypoints) {
    double t = from_pose.at(w.cell);
    if (t < best) {
      best = t;
      start = w.id;
    }
  }
  if (start == -1) throw std::runtime_error("no reachable waypoint from pose");

  plan.topo_path = dijkstra(graph, start, plan.entry_waypoint);
  plan.path_index = 0;
  plan.field = fmm(map, {graph.waypoints[plan.topo_path[0]].cell});
  return plan;
}

std::optional<world::Action> advance_plan(PlanState& plan, const TopoGraph& graph,
                                          const SemanticMap& map, const world::AgentPose& pose) {
  if (plan.topo_path.empty()) return std::nullopt;
  while (pose.cell == graph.waypoints[plan.topo_path[plan.path_index]].cell) {
    if (plan.path_index + 1 >= plan.topo_path.size()) return std::nullopt;  // entry reached
    ++plan.path_index;
    plan.field = fmm(map, {graph.waypoints[plan.topo_path[plan.path_index]].cell});
  }
  return next_action(pose, plan.field);
}

world::Action PanoramaSession::tick(const world::World& w, int agent_id, double frame_fov_deg) {
  if (done()) throw std::logic_error("panorama already complete");
  const auto& pose = w.agents.at(agent_id);
  world::Observation obs = world::sense_from(w, agent_id, pose, frame_fov_deg);
  rooms::FrameRecord frame;
  frame.agent_id = agent_id;
  frame.waypoint_cell = waypoint_;
  frame.heading = pose.heading;
  frame.visible_cells = std::move(obs.visible_cells);
  frame.visible_objects = std::move(obs.visible_objects);
  frame.tick = w.tick;
  frames_.push_back(std::move(frame));
  return {world::ActionKind::TurnLeft, ""};
}

}  // namespace teamnav::motion
