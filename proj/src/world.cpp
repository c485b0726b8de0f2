#include "teamnav/world.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace teamnav::world {

using nlohmann::json;

int World::free_cell_count() const {
  int n = 0;
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x)
      if (grid.at(x, y) == GroundCell::Free) ++n;
  return n;
}

int World::room_of(const Cell& c) const {
  for (const auto& r : rooms)
    if (r.mask.count(c)) return r.id;
  return -1;
}

bool line_of_sight(const Grid2D<GroundCell>& grid, const Cell& from, const Cell& to) {
  if (from == to) return true;
  const double inf = std::numeric_limits<double>::infinity();
  const int dx = to.x - from.x;
  const int dy = to.y - from.y;
  const int step_x = (dx > 0) - (dx < 0);
  const int step_y = (dy > 0) - (dy < 0);
  // Parametric traversal between cell centers; t in [0,1].
  double t_max_x = step_x ? 0.5 / std::abs(dx) : inf;
  double t_max_y = step_y ? 0.5 / std::abs(dy) : inf;
  const double t_delta_x = step_x ? 1.0 / std::abs(dx) : inf;
  const double t_delta_y = step_y ? 1.0 / std::abs(dy) : inf;
  int cx = from.x;
  int cy = from.y;
  const double eps = 1e-9;
  while (cx != to.x || cy != to.y) {
    if (std::abs(t_max_x - t_max_y) < eps) {
      // Exact corner crossing: step diagonally, the two cells sharing only
      // that corner are not entered and cannot occlude.
      cx += step_x;
      cy += step_y;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    } else if (t_max_x < t_max_y) {
      cx += step_x;
      t_max_x += t_delta_x;
    } else {
      cy += step_y;
      t_max_y += t_delta_y;
    }
    if (cx == to.x && cy == to.y) break;
    if (grid.at(Cell{cx, cy}) == GroundCell::Wall) return false;
  }
  return true;
}

Observation sense_from(const World& w, int agent_id, const AgentPose& pose, double fov_deg) {
  Observation obs;
  obs.agent_id = agent_id;
  obs.pose = pose;
  obs.tick = w.tick;
  const int r = w.sensor.range;
  const bool full = fov_deg >= 360.0;
  const double heading_rad = heading_angle_rad(pose.heading);
  const double half_fov = fov_deg * M_PI / 360.0;
  std::set<Cell> visible;
  for (int y = pose.cell.y - r; y <= pose.cell.y + r; ++y) {
    for (int x = pose.cell.x - r; x <= pose.cell.x + r; ++x) {
      Cell c{x, y};
      if (!w.grid.in_bounds(c)) continue;
      if (!full && c != pose.cell) {
        // Grid y grows downward, heading angles assume y up.
        double ang = std::atan2(-(double)(c.y - pose.cell.y), (double)(c.x - pose.cell.x));
        if (angle_diff(ang, heading_rad) > half_fov + 1e-9) continue;
      }
      if (!line_of_sight(w.grid, pose.cell, c)) continue;
      obs.visible_cells.push_back({c, w.grid.at(c)});
      visible.insert(c);
    }
  }
  for (const auto& o : w.objects)
    if (visible.count(o.cell)) obs.visible_objects.push_back({o.cls, o.cell});
  std::sort(obs.visible_objects.begin(), obs.visible_objects.end(),
            [](const VisibleObject& a, const VisibleObject& b) {
              return a.cell != b.cell ? a.cell < b.cell : a.cls < b.cls;
            });
  return obs;
}

Observation sense(const World& w, int agent_id) {
  if (agent_id < 0 || agent_id >= (int)w.agents.size())
    throw std::out_of_range("unknown agent " + std::to_string(agent_id));
  const AgentPose& pose = w.agents[agent_id];
  if (!pose.alive) throw std::runtime_error("agent crashed");
  return sense_from(w, agent_id, pose, w.sensor.fov_deg);
}

StepResult step(World& w, const std::map<int, Action>& actions) {
  if (w.episode_done) throw std::logic_error("episode already done");
  StepResult res;
  const long t = w.tick;
  for (const auto& [id, action] : actions) {
    if (id < 0 || id >= (int)w.agents.size()) {
      res.events.push_back({t, id, EventKind::ActionRejected, "unknown agent"});
      continue;
    }
    AgentPose& pose = w.agents[id];
    if (!pose.alive) {
      res.events.push_back({t, id, EventKind::ActionRejected, "agent crashed"});
      continue;
    }
    switch (action.kind) {
      case ActionKind::Forward: {
        if (!heading_is_axis(pose.heading)) {
          res.events.push_back({t, id, EventKind::Bump, "non-axis heading"});
          break;
        }
        Cell d = heading_axis_dir(pose.heading);
        Cell target{pose.cell.x + d.x, pose.cell.y + d.y};
        if (w.is_free(target)) {
          pose.cell = target;
        } else {
          res.events.push_back({t, id, EventKind::Bump, "blocked at " + to_string(target)});
        }
        break;
      }
      case ActionKind::TurnLeft:
        pose.heading = heading_wrap(pose.heading + 1);
        break;
      case ActionKind::TurnRight:
        pose.heading = heading_wrap(pose.heading - 1);
        break;
      case ActionKind::Declare: {
        if (t < w.declare_cooldown_until[id]) {
          res.events.push_back({t, id, EventKind::DeclareRejected, "declare cooldown"});
          break;
        }
        w.declare_cooldown_until[id] = t + kDeclareCooldownTicks;
        bool near_instance = false;
        for (const auto& o : w.objects)
          if (o.cls == action.declare_class && manhattan(o.cell, pose.cell) <= kSuccessRadius) {
            near_instance = true;
            break;
          }
        SubtaskOutcome out{id, action.declare_class, SubtaskResult::Failure, t};
        if (near_instance && w.targets.remaining.count(action.declare_class)) {
          out.result = SubtaskResult::Success;
          w.targets.remaining.erase(action.declare_class);
          res.events.push_back({t, id, EventKind::DeclareSuccess, action.declare_class});
        } else {
          res.events.push_back({t, id, EventKind::DeclareFailure, action.declare_class});
        }
        res.outcomes.push_back(out);
        break;
      }
      case ActionKind::NoOp:
        break;
    }
  }
  w.tick = t + 1;
  if (w.targets.remaining.empty() || w.tick >= w.max_steps) {
    w.episode_done = true;
    res.events.push_back({w.tick, -1, EventKind::EpisodeDone,
                          w.targets.remaining.empty() ? "all targets found" : "step limit"});
  }
  return res;
}

namespace {

std::set<Cell> parse_room_mask(const json& spec, const Grid2D<GroundCell>& grid, int room_id) {
  std::set<Cell> mask;
  auto add = [&](Cell c) {
    if (!grid.in_bounds(c))
      throw ScenarioError("room " + std::to_string(room_id) + " cell " + to_string(c) +
                          " out of bounds");
    mask.insert(c);
  };
  if (spec.contains("rects"))
    for (const auto& r : spec.at("rects")) {
      int x = r.at(0), y = r.at(1), wd = r.at(2), ht = r.at(3);
      for (int yy = y; yy < y + ht; ++yy)
        for (int xx = x; xx < x + wd; ++xx) add({xx, yy});
    }
  if (spec.contains("cells"))
    for (const auto& c : spec.at("cells")) add({c.at(0), c.at(1)});
  if (mask.empty())
    throw ScenarioError("room " + std::to_string(room_id) + " has an empty mask");
  return mask;
}

}  // namespace

World load_scenario(const std::string& scenario_text) {
  json doc;
  try {
    doc = json::parse(scenario_text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  try {
    World w;
    const auto& rows = doc.at("grid");
    if (rows.empty()) throw ScenarioError("grid has no rows");
    const int height = (int)rows.size();
    const int width = (int)rows.at(0).get<std::string>().size();
    w.grid = Grid2D<GroundCell>(width, height, GroundCell::Wall);
    for (int y = 0; y < height; ++y) {
      std::string row = rows.at(y).get<std::string>();
      if ((int)row.size() != width)
        throw ScenarioError("grid row " + std::to_string(y) + " has length " +
                            std::to_string(row.size()) + ", expected " + std::to_string(width));
      for (int x = 0; x < width; ++x) {
        if (row[x] == '.')
          w.grid.at(x, y) = GroundCell::Free;
        else if (row[x] != '#')
          throw ScenarioError("grid cell " + to_string({x, y}) + " has invalid char '" +
                              std::string(1, row[x]) + "'");
      }
    }
    w.resolution_m = doc.value("resolution_m", 0.25);
    for (const auto& [key, spec] : doc.at("rooms").items()) {
      RoomGT room;
      room.id = std::stoi(key);
      room.mask = parse_room_mask(spec, w.grid, room.id);
      w.rooms.push_back(room);
    }
    std::sort(w.rooms.begin(), w.rooms.end(),
              [](const RoomGT& a, const RoomGT& b) { return a.id < b.id; });
    for (const auto& o : doc.at("objects")) {
      ObjectInstance obj;
      obj.cls = o.at("class").get<std::string>();
      obj.cell = {o.at("x").get<int>(), o.at("y").get<int>()};
      w.objects.push_back(obj);
    }
    for (const auto& a : doc.at("agents")) {
      AgentPose pose;
      pose.cell = {a.at("x").get<int>(), a.at("y").get<int>()};
      pose.heading = a.value("heading", 0);
      w.agents.push_back(pose);
    }
    for (const auto& t : doc.at("targets")) {
      std::string cls = t.get<std::string>();
      w.targets.classes.push_back(cls);
      w.targets.remaining.insert(cls);
    }
    w.rng_seed = doc.value("seed", 0);
    w.max_steps = doc.value("max_steps", (long)std::lround(10.0 * std::sqrt(w.free_cell_count())));
    w.sensor.range = doc.value("sensor_range", 5);
    w.sensor.fov_deg = doc.value("sensor_fov_deg", 360.0);
    w.declare_cooldown_until.assign(w.agents.size(), 0);

    // Resolve object room ids now that the partition is known.
    for (auto& obj : w.objects) obj.room_id = w.room_of(obj.cell);

    auto problems = validate_world(w);
    if (!problems.empty()) {
      std::ostringstream msg;
      for (size_t i = 0; i < problems.size(); ++i) msg << (i ? "; " : "") << problems[i];
      throw ScenarioError(msg.str());
    }
    return w;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario schema violation: ") + e.what());
  }
}

World load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

std::vector<std::string> validate_world(const World& w) {
  std::vector<std::string> problems;
  Grid2D<int> owner(w.grid.width(), w.grid.height(), -1);
  for (const auto& room : w.rooms) {
    for (const auto& c : room.mask) {
      if (w.grid.at(c) == GroundCell::Wall)
        problems.push_back("room " + std::to_string(room.id) + " mask cell on wall at " +
                           to_string(c));
      else if (owner.at(c) != -1)
        problems.push_back("rooms " + std::to_string(owner.at(c)) + " and " +
                           std::to_string(room.id) + " overlap at " + to_string(c));
      else
        owner.at(c) = room.id;
    }
  }
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x)
      if (w.grid.at(x, y) == GroundCell::Free && owner.at(x, y) == -1)
        problems.push_back("free cell " + to_string({x, y}) + " not covered by any room");
  for (size_t i = 0; i < w.objects.size(); ++i) {
    const auto& o = w.objects[i];
    if (!w.is_free(o.cell))
      problems.push_back("object '" + o.cls + "' on non-free cell " + to_string(o.cell));
  }
  for (size_t i = 0; i < w.agents.size(); ++i) {
    const auto& a = w.agents[i];
    if (!w.is_free(a.cell))
      problems.push_back("agent " + std::to_string(i) + " on non-free cell " + to_string(a.cell));
    if (a.heading < 0 || a.heading >= kHeadingCount)
      problems.push_back("agent " + std::to_string(i) + " heading " + std::to_string(a.heading) +
                         " out of range");
  }
  if (w.targets.classes.empty()) problems.push_back("target set is empty");
  for (const auto& cls : w.targets.classes) {
    bool found = false;
    for (const auto& o : w.objects)
      if (o.cls == cls) found = true;
    if (!found) problems.push_back("target class '" + cls + "' has no instance");
  }
  return problems;
}

}  // namespace teamnav::world
