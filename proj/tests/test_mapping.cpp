#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "teamnav/mapping.hpp"
#include "teamnav/world.hpp"

using namespace teamnav;
using namespace teamnav::mapping;

namespace {

world::Observation obs_of(std::initializer_list<world::VisibleCell> cells, long tick = 0) {
  world::Observation o;
  o.visible_cells = cells;
  o.tick = tick;
  return o;
}

}  // namespace

TEST_CASE("first integration marks exactly the observed cells") {
  SemanticMap m(8, 8);
  m.integrate(obs_of({{{0, 0}, world::GroundCell::Free},
                      {{1, 0}, world::GroundCell::Free},
                      {{2, 0}, world::GroundCell::Free},
                      {{3, 0}, world::GroundCell::Free},
                      {{4, 0}, world::GroundCell::Wall}}));
  CHECK(m.known_cell_count() == 5);
  CHECK(m.at({0, 0}) == MapCell::Free);
  CHECK(m.at({4, 0}) == MapCell::Obstacle);
  CHECK(m.at({5, 0}) == MapCell::Unknown);
}

TEST_CASE("integrate is idempotent") {
  SemanticMap a(6, 6), b(6, 6);
  auto o = obs_of({{{2, 2}, world::GroundCell::Free}, {{3, 2}, world::GroundCell::Wall}});
  a.integrate(o);
  b.integrate(o);
  b.integrate(o);
  CHECK(a == b);
}

TEST_CASE("out-of-bounds observations are rejected with coordinates") {
  SemanticMap m(4, 4);
  CHECK_THROWS_WITH(m.integrate(obs_of({{{9, 1}, world::GroundCell::Free}})),
                    doctest::Contains("(9,1)"));
}

TEST_CASE("coverage_fraction counts known cells in the mask") {
  SemanticMap m(10, 1);
  std::set<Cell> mask;
  for (int x = 0; x < 10; ++x) mask.insert({x, 0});
  CHECK_THROWS(m.coverage_fraction({}));
  CHECK(m.coverage_fraction(mask) == doctest::Approx(0.0));
  world::Observation o;
  for (int x = 0; x < 7; ++x) o.visible_cells.push_back({{x, 0}, world::GroundCell::Free});
  m.integrate(o);
  CHECK(m.coverage_fraction(mask) == doctest::Approx(0.7));
  for (int x = 7; x < 10; ++x) o.visible_cells.push_back({{x, 0}, world::GroundCell::Free});
  m.integrate(o);
  CHECK(m.coverage_fraction(mask) == doctest::Approx(1.0));
}

TEST_CASE("a full-coverage tour reproduces the ground-truth grid exactly") {
  world::World w = world::load_scenario_file(std::string(TEAMNAV_SOURCE_DIR) + "/data/house3.scn");
  SemanticMap m(w.grid.width(), w.grid.height());
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x) {
      if (w.grid.at(x, y) != world::GroundCell::Free) continue;
      world::AgentPose pose{{x, y}, 0, true};
      m.integrate(world::sense_from(w, 0, pose, 360.0));
    }
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x) {
      MapCell expect = w.grid.at(x, y) == world::GroundCell::Free ? MapCell::Free
                                                                  : MapCell::Obstacle;
      CAPTURE(x);
      CAPTURE(y);
      CHECK(m.at({x, y}) == expect);
    }
  // Objects end up in the semantic layer on their true cells.
  for (const auto& obj : w.objects) CHECK(m.semantics().at(obj.cls).count(obj.cell) == 1);
}

TEST_CASE("integration order does not change the final occupancy") {
  world::World w = world::load_scenario_file(std::string(TEAMNAV_SOURCE_DIR) + "/data/house3.scn");
  std::vector<world::Observation> observations;
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x)
      if (w.grid.at(x, y) == world::GroundCell::Free)
        observations.push_back(world::sense_from(w, 0, {{x, y}, 0, true}, 360.0));

  SemanticMap forward(w.grid.width(), w.grid.height());
  for (const auto& o : observations) forward.integrate(o);

  std::mt19937_64 rng(99);
  std::shuffle(observations.begin(), observations.end(), rng);
  SemanticMap shuffled(w.grid.width(), w.grid.height());
  for (const auto& o : observations) shuffled.integrate(o);
  CHECK(forward.occupancy() == shuffled.occupancy());
}

TEST_CASE("knowledge grows monotonically and stays sound") {
  world::World w = world::load_scenario_file(std::string(TEAMNAV_SOURCE_DIR) + "/data/house3.scn");
  SemanticMap m(w.grid.width(), w.grid.height());
  std::mt19937_64 rng(7);
  int last_known = 0;
  for (int i = 0; i < 40; ++i) {
    Cell c{(int)(rng() % w.grid.width()), (int)(rng() % w.grid.height())};
    if (w.grid.at(c) != world::GroundCell::Free) continue;
    m.integrate(world::sense_from(w, 0, {c, 0, true}, 360.0));
    CHECK(m.known_cell_count() >= last_known);
    last_known = m.known_cell_count();
  }
  for (int y = 0; y < w.grid.height(); ++y)
    for (int x = 0; x < w.grid.width(); ++x) {
      if (m.at({x, y}) == MapCell::Unknown) continue;
      MapCell expect = w.grid.at(x, y) == world::GroundCell::Free ? MapCell::Free
                                                                  : MapCell::Obstacle;
      CHECK(m.at({x, y}) == expect);
    }
}

TEST_CASE("map dumps produce a PGM per channel plus an index") {
  SemanticMap m(4, 3);
  world::Observation o;
  o.visible_cells.push_back({{1, 1}, world::GroundCell::Free});
  o.visible_objects.push_back({"cup", {1, 1}});
  m.integrate(o);
  std::string dir = (std::filesystem::temp_directory_path() / "teamnav_dump_test").string();
  dump_map(m, dir, "agent0");
  std::ifstream occ(dir + "/agent0_occupancy.pgm", std::ios::binary);
  REQUIRE(occ.good());
  std::string magic;
  occ >> magic;
  CHECK(magic == "P5");
  int wdt, hgt, maxv;
  occ >> wdt >> hgt >> maxv;
  CHECK(wdt == 4);
  CHECK(hgt == 3);
  CHECK(std::ifstream(dir + "/agent0_class_cup.pgm").good());
  CHECK(std::ifstream(dir + "/agent0_index.json").good());
}
