#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "teamnav/mapping.hpp"

namespace teamnav::topology {

struct Waypoint {
  int id = -1;
  Cell cell;
  int clearance = 0;  // 4-connected cells to the nearest obstacle/unknown
};

struct TopoEdge {
  int a = -1;
  int b = -1;
  int length = 0;  // steps along the skeleton chain between the endpoints
};

struct TopoGraph {
  std::vector<Waypoint> waypoints;  // index == id
  std::vector<TopoEdge> edges;
  std::map<Cell, int> waypoint_at;

  // adjacency: waypoint id -> sorted (neighbor id, edge length)
  std::vector<std::vector<std::pair<int, int>>> adjacency;

  bool empty() const { return waypoints.empty(); }
};

// 4-connected distance to the nearest wall, unknown cell, or map edge.
// Unknown space counts as obstacle: agents never plan through unseen cells.
Grid2D<int> clearance_field(const mapping::SemanticMap& map);

// Medial-axis skeleton of known free space: distance-ordered homotopic
// thinning. Cells are peeled in increasing clearance order when their removal
// preserves local 4-connectivity of free space; chain endpoints and one
// maximal-clearance cell per component are anchored. The result keeps exactly
// the connectivity of known free space and follows corridor centerlines.
std::set<Cell> skeletonize(const mapping::SemanticMap& map);

// Waypoints are skeleton junctions (4-degree != 2) plus samples every
// `sample_interval` steps along degree-2 chains; edges follow the chains.
TopoGraph build_graph(const std::set<Cell>& skeleton, const mapping::SemanticMap& map,
                      int sample_interval = 5);

// Adjacency-list text export for the replay tool (docs/formats.md).
std::string export_adjacency(const TopoGraph& graph);

}  // namespace teamnav::topology
