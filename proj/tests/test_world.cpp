#include <doctest.h>

#include <random>

#include "teamnav/serial.hpp"
#include "teamnav/world.hpp"

using namespace teamnav;
using namespace teamnav::world;

namespace {

std::string minimal_scenario(const std::string& agents = R"([{"x":2,"y":2,"heading":0}])") {
  return R"({
    "grid": [".....", ".....", ".....", ".....", "....."],
    "rooms": {"0": {"rects": [[0,0,5,5]]}},
    "objects": [{"class": "cup", "x": 0, "y": 0}],
    "agents": )" +
         agents + R"(,
    "targets": ["cup"],
    "seed": 1
  })";
}

// Independent line-of-sight oracle: sample the segment between cell centers
// finely; a sample strictly inside a wall cell blocks. Samples that land on a
// cell boundary are skipped, matching the corner-slip rule.
bool raycast_oracle(const Grid2D<GroundCell>& grid, Cell from, Cell to) {
  if (from == to) return true;
  double x0 = from.x + 0.5, y0 = from.y + 0.5;
  double x1 = to.x + 0.5, y1 = to.y + 0.5;
  const int steps = 4096;
  for (int i = 1; i < steps; ++i) {
    double t = (double)i / steps;
    double x = x0 + t * (x1 - x0);
    double y = y0 + t * (y1 - y0);
    double fx = x - std::floor(x);
    double fy = y - std::floor(y);
    const double eps = 1e-7;
    if (fx < eps || fx > 1 - eps || fy < eps || fy > 1 - eps) continue;  // on a boundary
    Cell c{(int)std::floor(x), (int)std::floor(y)};
    if (c == from || c == to) continue;
    if (grid.at(c) == GroundCell::Wall) return false;
  }
  return true;
}

World grid_world(const std::vector<std::string>& rows) {
  World w;
  w.grid = Grid2D<GroundCell>((int)rows[0].size(), (int)rows.size(), GroundCell::Wall);
  for (int y = 0; y < (int)rows.size(); ++y)
    for (int x = 0; x < (int)rows[y].size(); ++x)
      if (rows[y][x] == '.') w.grid.at(x, y) = GroundCell::Free;
  w.agents.push_back({{1, 1}, 0, true});
  w.declare_cooldown_until.assign(1, 0);
  w.max_steps = 1000;
  return w;
}

}  // namespace

TEST_CASE("load_scenario accepts a minimal world") {
  World w = load_scenario(minimal_scenario());
  CHECK(w.grid.width() == 5);
  CHECK(w.targets.classes.size() == 1);
  CHECK(w.targets.remaining.count("cup") == 1);
  CHECK(w.rooms.size() == 1);
  CHECK(w.agents.size() == 1);
}

TEST_CASE("load_scenario rejects an agent on a wall") {
  std::string text = R"({
    "grid": ["###", "#.#", "###"],
    "rooms": {"0": {"cells": [[1,1]]}},
    "objects": [{"class": "cup", "x": 1, "y": 1}],
    "agents": [{"x": 0, "y": 0}],
    "targets": ["cup"]
  })";
  CHECK_THROWS_WITH_AS(load_scenario(text), doctest::Contains("agent 0 on non-free cell"),
                       ScenarioError);
}

TEST_CASE("load_scenario rejects overlapping room masks") {
  std::string text = R"({
    "grid": ["...."],
    "rooms": {"0": {"rects": [[0,0,3,1]]}, "1": {"rects": [[2,0,2,1]]}},
    "objects": [{"class": "cup", "x": 0, "y": 0}],
    "agents": [{"x": 1, "y": 0}],
    "targets": ["cup"]
  })";
  CHECK_THROWS_WITH_AS(load_scenario(text), doctest::Contains("overlap at (2,0)"), ScenarioError);
}

TEST_CASE("house3 fixture has disjoint room masks covering all free cells") {
  World w = load_scenario_file(std::string(TEAMNAV_SOURCE_DIR) + "/data/house3.scn");
  REQUIRE(w.rooms.size() == 3);
  Grid2D<int> owner(w.grid.width(), w.grid.height(), -1);
  for (const auto& room : w.rooms)
    for (const auto& c : room.mask) {
      CHECK(owner.at(c) == -1);
      owner.at(c) = room.id;
    }
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x) {
      if (w.grid.at(x, y) == GroundCell::Free)
        CHECK(owner.at(x, y) != -1);
      else
        CHECK(owner.at(x, y) == -1);
    }
}

TEST_CASE("sense in an open grid covers the Chebyshev ball") {
  World w = grid_world({".........", ".........", ".........", ".........", ".........",
                        ".........", ".........", ".........", "........."});
  w.agents[0].cell = {4, 4};
  w.sensor.range = 3;
  w.sensor.fov_deg = 360.0;
  Observation obs = sense(w, 0);
  std::set<Cell> seen;
  for (const auto& vc : obs.visible_cells) seen.insert(vc.cell);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      bool expect = chebyshev({x, y}, {4, 4}) <= 3;
      CHECK(seen.count({x, y}) == (expect ? 1 : 0));
    }
}

TEST_CASE("walls occlude the cells behind them") {
  World w = grid_world({".....", ".....", "..#..", ".....", "....."});
  w.agents[0].cell = {2, 0};
  w.sensor.range = 4;
  Observation obs = sense(w, 0);
  std::set<Cell> seen;
  for (const auto& vc : obs.visible_cells) seen.insert(vc.cell);
  CHECK(seen.count({2, 2}) == 1);  // the wall face itself is visible
  CHECK(seen.count({2, 3}) == 0);
  CHECK(seen.count({2, 4}) == 0);
}

TEST_CASE("objects outside sensor range are not reported") {
  World w = load_scenario(minimal_scenario());
  w.sensor.range = 1;
  Observation obs = sense(w, 0);  // agent (2,2), cup (0,0) at chebyshev 2
  CHECK(obs.visible_objects.empty());
  w.sensor.range = 2;
  obs = sense(w, 0);
  REQUIRE(obs.visible_objects.size() == 1);
  CHECK(obs.visible_objects[0].cls == "cup");
}

TEST_CASE("line_of_sight agrees with a brute-force sampled oracle") {
  std::mt19937_64 rng(20240811);
  for (int trial = 0; trial < 30; ++trial) {
    World w = grid_world({"..........", "..........", "..........", "..........", "..........",
                          "..........", "..........", "..........", "..........", ".........."});
    for (int k = 0; k < 18; ++k)
      w.grid.at((int)(rng() % 10), (int)(rng() % 10)) = GroundCell::Wall;
    for (int k = 0; k < 60; ++k) {
      Cell a{(int)(rng() % 10), (int)(rng() % 10)};
      Cell b{(int)(rng() % 10), (int)(rng() % 10)};
      if (w.grid.at(a) == GroundCell::Wall) continue;
      CAPTURE(a.x);
      CAPTURE(a.y);
      CAPTURE(b.x);
      CAPTURE(b.y);
      CHECK(line_of_sight(w.grid, a, b) == raycast_oracle(w.grid, a, b));
    }
  }
}

TEST_CASE("forward into a wall bumps without moving") {
  World w = grid_world({"###", "#.#", "###"});
  w.agents[0].cell = {1, 1};
  w.agents[0].heading = 0;
  auto res = step(w, {{0, {ActionKind::Forward, ""}}});
  REQUIRE(res.events.size() == 1);
  CHECK(res.events[0].kind == EventKind::Bump);
  CHECK(w.agents[0].cell == Cell{1, 1});
}

TEST_CASE("declare adjacent to a remaining target succeeds exactly once") {
  World w = load_scenario(minimal_scenario(R"([{"x":0,"y":1,"heading":0}])"));
  auto res = step(w, {{0, {ActionKind::Declare, "cup"}}});
  REQUIRE(res.outcomes.size() == 1);
  CHECK(res.outcomes[0].result == SubtaskResult::Success);
  CHECK(w.targets.remaining.empty());
  CHECK(w.episode_done);
}

TEST_CASE("declare far from any instance fails and keeps the target") {
  World w = load_scenario(minimal_scenario(R"([{"x":4,"y":4,"heading":0}])"));
  auto res = step(w, {{0, {ActionKind::Declare, "cup"}}});
  REQUIRE(res.outcomes.size() == 1);
  CHECK(res.outcomes[0].result == SubtaskResult::Failure);
  CHECK(w.targets.remaining.count("cup") == 1);
  CHECK_FALSE(w.episode_done);
}

TEST_CASE("declares are rate limited by the cooldown") {
  World w = load_scenario(minimal_scenario(R"([{"x":4,"y":4,"heading":0}])"));
  step(w, {{0, {ActionKind::Declare, "cup"}}});
  auto res = step(w, {{0, {ActionKind::Declare, "cup"}}});
  REQUIRE(res.events.size() == 1);
  CHECK(res.events[0].kind == EventKind::DeclareRejected);
  CHECK(res.outcomes.empty());
}

TEST_CASE("actions for dead or unknown agents are rejected") {
  World w = load_scenario(minimal_scenario());
  w.agents[0].alive = false;
  auto res = step(w, {{0, {ActionKind::Forward, ""}}, {7, {ActionKind::Forward, ""}}});
  REQUIRE(res.events.size() == 2);
  CHECK(res.events[0].kind == EventKind::ActionRejected);
  CHECK(res.events[1].kind == EventKind::ActionRejected);
}

TEST_CASE("turns rotate one heading index and forward needs an axis heading") {
  World w = grid_world({"...", "...", "..."});
  w.agents[0].cell = {1, 1};
  w.agents[0].heading = 0;
  step(w, {{0, {ActionKind::TurnLeft, ""}}});
  CHECK(w.agents[0].heading == 1);
  auto res = step(w, {{0, {ActionKind::Forward, ""}}});
  CHECK(res.events.size() == 1);  // diagonal heading cannot advance
  CHECK(w.agents[0].cell == Cell{1, 1});
  step(w, {{0, {ActionKind::TurnRight, ""}}});
  step(w, {{0, {ActionKind::Forward, ""}}});
  CHECK(w.agents[0].cell == Cell{2, 1});
}

TEST_CASE("episodes are deterministic, monotone and terminate") {
  auto run = [](uint64_t seed) {
    World w = load_scenario_file(std::string(TEAMNAV_SOURCE_DIR) + "/data/house3.scn");
    std::mt19937_64 rng(seed);
    nlohmann::json log = nlohmann::json::array();
    size_t remaining_before = w.targets.remaining.size();
    auto objects_before = w.objects;
    while (!w.episode_done) {
      std::map<int, Action> actions;
      for (int i = 0; i < (int)w.agents.size(); ++i) {
        int pick = (int)(rng() % 5);
        Action a;
        a.kind = static_cast<ActionKind>(pick);
        if (a.kind == ActionKind::Declare) a.declare_class = "cup";
        actions[i] = a;
      }
      auto res = step(w, actions);
      for (const auto& e : res.events) log.push_back(e);
      CHECK(w.targets.remaining.size() <= remaining_before);  // monotone
      remaining_before = w.targets.remaining.size();
    }
    CHECK(w.tick <= w.max_steps);  // termination
    for (size_t i = 0; i < objects_before.size(); ++i)  // conservation
      CHECK(objects_before[i].cell == w.objects[i].cell);
    return fnv1a(log.dump());
  };
  CHECK(run(42) == run(42));
}
