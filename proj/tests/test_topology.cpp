#include <doctest.h>

#include <queue>
#include <random>

#include "teamnav/topology.hpp"
#include "teamnav/world.hpp"

using namespace teamnav;
using namespace teamnav::topology;
using mapping::MapCell;
using mapping::SemanticMap;

namespace {

// Builds a fully-observed map from rows of '#' (wall) / '.' (free) / ' ' (unknown).
SemanticMap map_of(const std::vector<std::string>& rows) {
  SemanticMap m((int)rows[0].size(), (int)rows.size());
  world::Observation o;
  for (int y = 0; y < (int)rows.size(); ++y)
    for (int x = 0; x < (int)rows[y].size(); ++x) {
      if (rows[y][x] == ' ') continue;
      o.visible_cells.push_back(
          {{x, y}, rows[y][x] == '.' ? world::GroundCell::Free : world::GroundCell::Wall});
    }
  m.integrate(o);
  return m;
}

// Brute-force distance transform: min Manhattan distance to any non-free cell
// or map edge.
int clearance_oracle(const SemanticMap& m, Cell c) {
  int best = std::min({c.x + 1, c.y + 1, m.width() - c.x, m.height() - c.y});
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at({x, y}) != MapCell::Free) best = std::min(best, manhattan(c, {x, y}));
  return best;
}

std::vector<int> free_component_labels(const SemanticMap& m, std::map<Cell, int>& label_of) {
  int next = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      Cell start{x, y};
      if (!m.known_free(start) || label_of.count(start)) continue;
      std::queue<Cell> q;
      q.push(start);
      label_of[start] = next;
      while (!q.empty()) {
        Cell c = q.front();
        q.pop();
        for (const auto& d : nesw()) {
          Cell n{c.x + d.x, c.y + d.y};
          if (m.known_free(n) && !label_of.count(n)) {
            label_of[n] = next;
            q.push(n);
          }
        }
      }
      ++next;
    }
  std::vector<int> sizes(next, 0);
  for (const auto& [c, l] : label_of) ++sizes[l];
  return sizes;
}

int graph_component_of(const TopoGraph& g, int start, std::vector<int>& comp) {
  comp.assign(g.waypoints.size(), -1);
  int next = 0;
  for (size_t s = 0; s < g.waypoints.size(); ++s) {
    if (comp[s] != -1) continue;
    std::queue<int> q;
    q.push((int)s);
    comp[s] = next;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (const auto& [v, w] : g.adjacency[u])
        if (comp[v] == -1) {
          comp[v] = next;
          q.push(v);
        }
    }
    ++next;
  }
  return comp.empty() ? 0 : comp[start];
}

SemanticMap random_map(std::mt19937_64& rng, int w, int h, double wall_p) {
  std::vector<std::string> rows(h, std::string(w, '.'));
  std::uniform_real_distribution<double> u(0, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (u(rng) < wall_p) rows[y][x] = '#';
  return map_of(rows);
}

}  // namespace

TEST_CASE("a one-cell corridor is its own skeleton") {
  SemanticMap m = map_of({"##############",
                          "#............#",
                          "##############"});
  auto skel = skeletonize(m);
  REQUIRE(skel.size() == 12);
  for (int x = 1; x <= 12; ++x) CHECK(skel.count({x, 1}) == 1);
}

TEST_CASE("an empty walled room keeps its maximal-clearance center") {
  SemanticMap m = map_of({"#########", "#.......#", "#.......#", "#.......#", "#.......#",
                          "#.......#", "#.......#", "#.......#", "#########"});
  // Independent check that (4,4) is the clearance argmax.
  Grid2D<int> field = clearance_field(m);
  Cell best{1, 1};
  for (int y = 1; y <= 7; ++y)
    for (int x = 1; x <= 7; ++x) {
      CHECK(field.at(x, y) == clearance_oracle(m, {x, y}));
      if (field.at(x, y) > field.at(best)) best = {x, y};
    }
  CHECK(best == Cell{4, 4});
  auto skel = skeletonize(m);
  CHECK(skel.count({4, 4}) == 1);
}

TEST_CASE("the skeleton crosses the door between two rooms") {
  SemanticMap m = map_of({"###########",
                          "#....#....#",
                          "#....#....#",
                          "#.........#",
                          "#....#....#",
                          "#....#....#",
                          "###########"});
  auto skel = skeletonize(m);
  CHECK(skel.count({5, 3}) == 1);  // the only passage
  TopoGraph g = build_graph(skel, m);
  std::vector<int> comp;
  graph_component_of(g, 0, comp);
  for (int c : comp) CHECK(c == comp[0]);  // one room system, one graph component
}

TEST_CASE("skeletonize requires known free space") {
  SemanticMap empty(5, 5);
  CHECK_THROWS(skeletonize(empty));
}

TEST_CASE("a 12-cell corridor with K=5 yields endpoint and interior waypoints") {
  SemanticMap m = map_of({"##############",
                          "#............#",
                          "##############"});
  auto skel = skeletonize(m);
  TopoGraph g = build_graph(skel, m, 5);
  REQUIRE(g.waypoints.size() >= 3);  // two endpoints + at least one sample
  CHECK(g.waypoint_at.count({1, 1}) == 1);
  CHECK(g.waypoint_at.count({12, 1}) == 1);
  long total = 0;
  for (const auto& e : g.edges) total += e.length;
  CHECK(total == 11);
}

TEST_CASE("a single free cell becomes one waypoint and no edges") {
  SemanticMap m = map_of({"###", "#.#", "###"});
  auto skel = skeletonize(m);
  REQUIRE(skel.size() == 1);
  TopoGraph g = build_graph(skel, m);
  CHECK(g.waypoints.size() == 1);
  CHECK(g.edges.empty());
}

TEST_CASE("a T junction produces exactly one degree-3 waypoint") {
  SemanticMap m = map_of({"#########",
                          "#.......#",
                          "####.####",
                          "####.####",
                          "####.####",
                          "#########"});
  auto skel = skeletonize(m);
  TopoGraph g = build_graph(skel, m, 50);  // no interior samples
  int degree3 = 0;
  for (size_t i = 0; i < g.adjacency.size(); ++i)
    if (g.adjacency[i].size() == 3) ++degree3;
  CHECK(degree3 == 1);
}

TEST_CASE("clearance values match the brute-force transform on random maps") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 10; ++trial) {
    SemanticMap m = random_map(rng, 14, 10, 0.2);
    Grid2D<int> field = clearance_field(m);
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x)
        if (m.known_free({x, y})) CHECK(field.at(x, y) == clearance_oracle(m, {x, y}));
  }
}

TEST_CASE("graph connectivity equals known-free connectivity on random maps") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 12; ++trial) {
    SemanticMap m = random_map(rng, 16, 12, 0.25);
    std::map<Cell, int> label_of;
    auto sizes = free_component_labels(m, label_of);
    if (label_of.empty()) continue;
    auto skel = skeletonize(m);
    TopoGraph g = build_graph(skel, m);

    // Skeleton stays inside known free space.
    for (const auto& c : skel) CHECK(m.known_free(c));

    // Every free component owns at least one waypoint.
    std::map<int, int> wp_per_comp;
    for (const auto& w : g.waypoints) ++wp_per_comp[label_of.at(w.cell)];
    for (size_t l = 0; l < sizes.size(); ++l) {
      CAPTURE(trial);
      CHECK(wp_per_comp[(int)l] >= 1);
    }

    // Waypoints in the same free component are connected in the graph, and
    // never connected across different components.
    std::vector<int> comp;
    graph_component_of(g, 0, comp);
    for (size_t i = 0; i < g.waypoints.size(); ++i)
      for (size_t j = i + 1; j < g.waypoints.size(); ++j) {
        bool same_free =
            label_of.at(g.waypoints[i].cell) == label_of.at(g.waypoints[j].cell);
        bool same_graph = comp[i] == comp[j];
        CHECK(same_free == same_graph);
      }
  }
}

TEST_CASE("growing the map never disconnects previously connected waypoints") {
  // First only the left room is observed, then the whole map.
  std::vector<std::string> partial = {"###########",
                                      "#....#     ",
                                      "#....#     ",
                                      "#....##### ",
                                      "########   "};
  std::vector<std::string> full = {"###########",
                                   "#....#....#",
                                   "#....#....#",
                                   "#..........",
                                   "###########"};
  SemanticMap m1 = map_of(partial);
  TopoGraph g1 = build_graph(skeletonize(m1), m1);
  SemanticMap m2 = map_of(full);
  TopoGraph g2 = build_graph(skeletonize(m2), m2);
  // All g1 waypoints live in one component of g2 as well.
  std::vector<int> comp;
  graph_component_of(g2, 0, comp);
  std::set<int> comps_of_old;
  for (const auto& w1 : g1.waypoints) {
    // nearest g2 waypoint by manhattan
    int best = 0;
    for (const auto& w2 : g2.waypoints)
      if (manhattan(w2.cell, w1.cell) < manhattan(g2.waypoints[best].cell, w1.cell)) best = w2.id;
    comps_of_old.insert(comp[best]);
  }
  CHECK(comps_of_old.size() == 1);
}

TEST_CASE("adjacency export lists waypoints and edges") {
  SemanticMap m = map_of({"#######", "#.....#", "#######"});
  TopoGraph g = build_graph(skeletonize(m), m, 2);
  std::string text = export_adjacency(g);
  CHECK(text.find("waypoint 0 1 1") != std::string::npos);
  CHECK(text.find("edge") != std::string::npos);
}
