#pragma once

#include <map>
#include <set>
#include <string>

#include "teamnav/grid.hpp"
#include "teamnav/world.hpp"

namespace teamnav::mapping {

enum class MapCell : uint8_t { Unknown, Free, Obstacle };

// Per-agent semantic map: occupancy, per-class object cells, last-seen ticks.
// Sensing is noise-free, so an observed cell never changes occupancy later.
class SemanticMap {
 public:
  SemanticMap() = default;
  SemanticMap(int width, int height)
      : occupancy_(width, height, MapCell::Unknown), observed_ticks_(width, height, -1) {}

  int width() const { return occupancy_.width(); }
  int height() const { return occupancy_.height(); }
  MapCell at(const Cell& c) const { return occupancy_.at(c); }
  bool in_bounds(const Cell& c) const { return occupancy_.in_bounds(c); }
  long observed_tick(const Cell& c) const { return observed_ticks_.at(c); }
  bool known_free(const Cell& c) const {
    return occupancy_.in_bounds(c) && occupancy_.at(c) == MapCell::Free;
  }
  int known_cell_count() const { return known_cells_; }
  const std::map<std::string, std::set<Cell>>& semantics() const { return semantics_; }
  const Grid2D<MapCell>& occupancy() const { return occupancy_; }

  void integrate(const world::Observation& obs);
  double coverage_fraction(const std::set<Cell>& mask) const;

  // Known-free cell with at least one unknown 4-neighbor.
  bool is_frontier(const Cell& c) const;
  std::set<Cell> frontier_cells() const;

  friend bool operator==(const SemanticMap& a, const SemanticMap& b) {
    return a.occupancy_ == b.occupancy_ && a.semantics_ == b.semantics_;
  }

 private:
  Grid2D<MapCell> occupancy_;
  Grid2D<long> observed_ticks_;
  std::map<std::string, std::set<Cell>> semantics_;
  int known_cells_ = 0;
};

// Writes one PGM image per channel plus a JSON sidecar index.
// Byte layout documented in docs/formats.md.
void dump_map(const SemanticMap& map, const std::string& dir, const std::string& stem);

}  // namespace teamnav::mapping
