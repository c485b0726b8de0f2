#include "teamnav/topology.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>

namespace teamnav::topology {

using mapping::MapCell;
using mapping::SemanticMap;

Grid2D<int> clearance_field(const SemanticMap& map) {
  const int w = map.width();
  const int h = map.height();
  Grid2D<int> dist(w, h, std::numeric_limits<int>::max());
  std::deque<Cell> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Cell c{x, y};
      bool boundary = map.at(c) != MapCell::Free;
      if (!boundary) {
        // Map edges count as obstacle boundary.
        if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
          dist.at(c) = 1;
          queue.push_back(c);
          continue;
        }
      } else {
        dist.at(c) = 0;
        queue.push_back(c);
      }
    }
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    for (const auto& d : nesw()) {
      Cell n{c.x + d.x, c.y + d.y};
      if (!dist.in_bounds(n)) continue;
      if (dist.at(n) > dist.at(c) + 1) {
        dist.at(n) = dist.at(c) + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

namespace {

// Local topology check: removing `p` must neither split free space (under
// 4-connectivity) nor merge background regions (under 8-connectivity).
bool is_simple(const Grid2D<uint8_t>& fg, const Cell& p) {
  // Collect the 3x3 neighborhood, excluding p itself.
  bool f[3][3] = {};
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      Cell n{p.x + dx, p.y + dy};
      f[dy + 1][dx + 1] = fg.in_bounds(n) && fg.at(n);
    }

  auto flood_count = [&](bool target, bool four_conn, bool adjacency_to_p_four) {
    bool seen[3][3] = {};
    int components = 0;
    for (int sy = 0; sy < 3; ++sy)
      for (int sx = 0; sx < 3; ++sx) {
        if (sx == 1 && sy == 1) continue;
        if (f[sy][sx] != target || seen[sy][sx]) continue;
        // Flood this component, remember whether it touches p appropriately.
        bool touches = false;
        std::vector<std::pair<int, int>> stack{{sx, sy}};
        seen[sy][sx] = true;
        while (!stack.empty()) {
          auto [cx, cy] = stack.back();
          stack.pop_back();
          bool diag = (cx != 1) && (cy != 1);
          if (adjacency_to_p_four ? !diag : true) touches = true;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0) continue;
              if (four_conn && dx != 0 && dy != 0) continue;
              int nx = cx + dx, ny = cy + dy;
              if (nx < 0 || ny < 0 || nx > 2 || ny > 2) continue;
              if (nx == 1 && ny == 1) continue;
              if (f[ny][nx] != target || seen[ny][nx]) continue;
              seen[ny][nx] = true;
              stack.push_back({nx, ny});
            }
        }
        if (touches) ++components;
      }
    return components;
  };

  int fg_components = flood_count(true, /*four_conn=*/true, /*adjacency_to_p_four=*/true);
  int bg_components = flood_count(false, /*four_conn=*/false, /*adjacency_to_p_four=*/false);
  return fg_components == 1 && bg_components == 1;
}

int degree8(const Grid2D<uint8_t>& fg, const Cell& p) {
  int n = 0;
  for (const auto& d : neighbors8()) {
    Cell q{p.x + d.x, p.y + d.y};
    if (fg.in_bounds(q) && fg.at(q)) ++n;
  }
  return n;
}

}  // namespace

std::set<Cell> skeletonize(const SemanticMap& map) {
  const int w = map.width();
  const int h = map.height();
  Grid2D<uint8_t> fg(w, h, 0);
  std::vector<Cell> free_cells;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (map.at({x, y}) == MapCell::Free) {
        fg.at(x, y) = 1;
        free_cells.push_back({x, y});
      }
  if (free_cells.empty()) throw std::runtime_error("skeletonize: map has no known free space");

  Grid2D<int> clearance = clearance_field(map);

  // Anchor one maximal-clearance cell per 4-connected free component so every
  // open area keeps its center.
  std::set<Cell> anchors;
  {
    Grid2D<uint8_t> seen(w, h, 0);
    for (const auto& start : free_cells) {
      if (seen.at(start)) continue;
      Cell best = start;
      std::vector<Cell> stack{start};
      seen.at(start) = 1;
      while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        if (clearance.at(c) > clearance.at(best) ||
            (clearance.at(c) == clearance.at(best) && c < best))
          best = c;
        for (const auto& d : nesw()) {
          Cell n{c.x + d.x, c.y + d.y};
          if (fg.in_bounds(n) && fg.at(n) && !seen.at(n)) {
            seen.at(n) = 1;
            stack.push_back(n);
          }
        }
      }
      anchors.insert(best);
    }
  }

  std::vector<Cell> order = free_cells;
  std::sort(order.begin(), order.end(), [&](const Cell& a, const Cell& b) {
    return clearance.at(a) != clearance.at(b) ? clearance.at(a) < clearance.at(b) : a < b;
  });

  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& p : order) {
      if (!fg.at(p) || anchors.count(p)) continue;
      if (degree8(fg, p) <= 1) continue;  // endpoint anchor
      if (is_simple(fg, p)) {
        fg.at(p) = 0;
        changed = true;
      }
    }
  }

  std::set<Cell> skeleton;
  for (const auto& c : free_cells)
    if (fg.at(c)) skeleton.insert(c);
  return skeleton;
}

namespace {

std::vector<Cell> skeleton_neighbors(const std::set<Cell>& skel, const Cell& c) {
  std::vector<Cell> out;
  for (const auto& d : nesw()) {
    Cell n{c.x + d.x, c.y + d.y};
    if (skel.count(n)) out.push_back(n);
  }
  return out;
}

}  // namespace

TopoGraph build_graph(const std::set<Cell>& skeleton, const SemanticMap& map,
                      int sample_interval) {
  TopoGraph g;
  if (skeleton.empty()) return g;
  if (sample_interval < 1) throw std::invalid_argument("sample_interval must be >= 1");
  Grid2D<int> clearance = clearance_field(map);

  auto add_waypoint = [&](const Cell& c) {
    auto it = g.waypoint_at.find(c);
    if (it != g.waypoint_at.end()) return it->second;
    int id = (int)g.waypoints.size();
    g.waypoints.push_back({id, c, clearance.at(c)});
    g.waypoint_at[c] = id;
    return id;
  };

  // Junctions, endpoints and isolated cells become primary waypoints.
  std::vector<Cell> nodes;
  for (const auto& c : skeleton)
    if (skeleton_neighbors(skeleton, c).size() != 2) nodes.push_back(c);

  // Components that are pure cycles have no such node; seed with their
  // smallest cell.
  {
    std::set<Cell> reached;
    auto mark_component = [&](const Cell& start) {
      std::vector<Cell> stack{start};
      reached.insert(start);
      while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        for (const auto& n : skeleton_neighbors(skeleton, c))
          if (!reached.count(n)) {
            reached.insert(n);
            stack.push_back(n);
          }
      }
    };
    for (const auto& c : nodes) mark_component(c);
    for (const auto& c : skeleton)
      if (!reached.count(c)) {
        nodes.push_back(c);
        mark_component(c);
      }
  }
  std::sort(nodes.begin(), nodes.end());
  for (const auto& c : nodes) add_waypoint(c);
  std::set<Cell> node_set(nodes.begin(), nodes.end());

  // Walk chains from each node; a chain ends at the next node. Directed
  // steps are marked so each chain is traversed once.
  std::set<std::pair<Cell, Cell>> walked;
  auto add_edge = [&](int a, int b, int length) { g.edges.push_back({a, b, length}); };

  for (const auto& start : nodes) {
    for (const auto& first : skeleton_neighbors(skeleton, start)) {
      if (walked.count({start, first})) continue;
      // Trace the chain.
      std::vector<Cell> chain{start, first};
      walked.insert({start, first});
      Cell prev = start;
      Cell cur = first;
      while (!node_set.count(cur)) {
        auto nbrs = skeleton_neighbors(skeleton, cur);
        Cell next = prev;
        for (const auto& n : nbrs)
          if (n != prev) next = n;
        if (next == prev) break;  // dead end that is somehow not a node
        walked.insert({cur, next});
        chain.push_back(next);
        prev = cur;
        cur = next;
      }
      walked.insert({cur, prev});  // block the reverse walk

      // Cycles with no interior node close back on start; give them a
      // halfway waypoint so the loop becomes two proper edges.
      const bool closed = chain.front() == chain.back();
      int last_wp = g.waypoint_at.at(chain.front());
      int steps_since = 0;
      bool chain_has_mid = false;
      for (size_t k = 1; k < chain.size(); ++k) {
        ++steps_since;
        bool is_end = k + 1 == chain.size();
        bool sample = !is_end && steps_since == sample_interval;
        bool halfway = closed && !is_end && !chain_has_mid && k >= chain.size() / 2;
        if (is_end || sample || halfway) {
          int wp = add_waypoint(chain[k]);
          add_edge(last_wp, wp, steps_since);
          last_wp = wp;
          steps_since = 0;
          if (!is_end) chain_has_mid = true;
        }
      }
    }
  }

  // Drop degenerate self-loops of length 0 and build adjacency.
  std::vector<TopoEdge> kept;
  for (const auto& e : g.edges)
    if (!(e.a == e.b && e.length == 0)) kept.push_back(e);
  g.edges = kept;
  g.adjacency.assign(g.waypoints.size(), {});
  for (const auto& e : g.edges) {
    g.adjacency[e.a].push_back({e.b, e.length});
    if (e.a != e.b) g.adjacency[e.b].push_back({e.a, e.length});
  }
  for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
  return g;
}

std::string export_adjacency(const TopoGraph& graph) {
  std::ostringstream out;
  for (const auto& w : graph.waypoints)
    out << "waypoint " << w.id << " " << w.cell.x << " " << w.cell.y << " " << w.clearance << "\n";
  for (const auto& e : graph.edges) out << "edge " << e.a << " " << e.b << " " << e.length << "\n";
  return out.str();
}

}  // namespace teamnav::topology
