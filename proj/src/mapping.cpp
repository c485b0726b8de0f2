#include "teamnav/mapping.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace teamnav::mapping {

void SemanticMap::integrate(const world::Observation& obs) {
  for (const auto& vc : obs.visible_cells)
    if (!occupancy_.in_bounds(vc.cell))
      throw std::out_of_range("observation cell " + to_string(vc.cell) + " outside map bounds");
  for (const auto& vc : obs.visible_cells) {
    MapCell label =
        vc.occupancy == world::GroundCell::Free ? MapCell::Free : MapCell::Obstacle;
    MapCell& cur = occupancy_.at(vc.cell);
    if (cur == MapCell::Unknown) ++known_cells_;
    cur = label;
    observed_ticks_.at(vc.cell) = std::max(observed_ticks_.at(vc.cell), obs.tick);
  }
  for (const auto& vo : obs.visible_objects) semantics_[vo.cls].insert(vo.cell);
}

double SemanticMap::coverage_fraction(const std::set<Cell>& mask) const {
  if (mask.empty()) throw std::invalid_argument("coverage_fraction: empty mask");
  int seen = 0;
  for (const auto& c : mask)
    if (occupancy_.in_bounds(c) && occupancy_.at(c) != MapCell::Unknown) ++seen;
  return (double)seen / (double)mask.size();
}

bool SemanticMap::is_frontier(const Cell& c) const {
  if (!known_free(c)) return false;
  for (const auto& d : nesw()) {
    Cell n{c.x + d.x, c.y + d.y};
    if (occupancy_.in_bounds(n) && occupancy_.at(n) == MapCell::Unknown) return true;
  }
  return false;
}

std::set<Cell> SemanticMap::frontier_cells() const {
  std::set<Cell> out;
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x)
      if (is_frontier({x, y})) out.insert({x, y});
  return out;
}

namespace {

void write_pgm(const std::string& path, const Grid2D<uint8_t>& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()), (std::streamsize)img.data().size());
}

}  // namespace

void dump_map(const SemanticMap& map, const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["width"] = map.width();
  index["height"] = map.height();
  index["format"] = "pgm/P5";

  Grid2D<uint8_t> occ(map.width(), map.height(), 0);
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) {
      switch (map.at({x, y})) {
        case MapCell::Unknown: occ.at(x, y) = 128; break;
        case MapCell::Free: occ.at(x, y) = 255; break;
        case MapCell::Obstacle: occ.at(x, y) = 0; break;
      }
    }
  std::string occ_file = stem + "_occupancy.pgm";
  write_pgm(dir + "/" + occ_file, occ);
  index["channels"]["occupancy"] = {{"file", occ_file},
                                    {"values", {{"unknown", 128}, {"free", 255}, {"obstacle", 0}}}};

  for (const auto& [cls, cells] : map.semantics()) {
    Grid2D<uint8_t> layer(map.width(), map.height(), 0);
    for (const auto& c : cells) layer.at(c) = 255;
    std::string file = stem + "_class_" + cls + ".pgm";
    write_pgm(dir + "/" + file, layer);
    index["channels"]["class:" + cls] = {{"file", file}, {"values", {{"present", 255}, {"absent", 0}}}};
  }

  std::ofstream idx(dir + "/" + stem + "_index.json");
  idx << index.dump(2) << "\n";
}

}  // namespace teamnav::mapping
