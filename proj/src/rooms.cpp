#include "teamnav/rooms.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace teamnav::rooms {

using mapping::MapCell;
using mapping::SemanticMap;
using nlohmann::json;

Cell RoomSegment::centroid() const {
  double mx = 0, my = 0;
  for (const auto& c : mask) {
    mx += c.x;
    my += c.y;
  }
  mx /= (double)mask.size();
  my /= (double)mask.size();
  Cell best = *mask.begin();
  double best_d = 1e18;
  for (const auto& c : mask) {
    double d = (c.x - mx) * (c.x - mx) + (c.y - my) * (c.y - my);
    if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && c < best)) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::set<Cell> detect_door_cells(const SemanticMap& map, int door_width) {
  std::set<Cell> doors;
  auto run_length = [&](Cell c, Cell dir) {
    int len = 1;
    for (Cell p{c.x + dir.x, c.y + dir.y}; map.known_free(p); p = {p.x + dir.x, p.y + dir.y}) ++len;
    for (Cell p{c.x - dir.x, c.y - dir.y}; map.known_free(p); p = {p.x - dir.x, p.y - dir.y}) ++len;
    return len;
  };
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      Cell c{x, y};
      if (!map.known_free(c)) continue;
      int wx = run_length(c, {1, 0});
      int wy = run_length(c, {0, 1});
      if (std::min(wx, wy) > door_width) continue;

      // Local cut test: without c, do its free 4-neighbors fall apart into
      // two or more 4-connected pieces within the 3x3 window?
      bool free3[3][3] = {};
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          free3[dy + 1][dx + 1] = map.known_free({x + dx, y + dy});
        }
      bool seen[3][3] = {};
      int components = 0;
      for (int sy = 0; sy < 3 && components < 2; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
          if (!free3[sy][sx] || seen[sy][sx]) continue;
          bool touches = false;
          std::vector<std::pair<int, int>> stack{{sx, sy}};
          seen[sy][sx] = true;
          while (!stack.empty()) {
            auto [cx, cy] = stack.back();
            stack.pop_back();
            if (cx == 1 || cy == 1) touches = true;  // 4-adjacent to center
            static const int d4[4][2] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
            for (const auto& d : d4) {
              int nx = cx + d[0], ny = cy + d[1];
              if (nx < 0 || ny < 0 || nx > 2 || ny > 2 || (nx == 1 && ny == 1)) continue;
              if (!free3[ny][nx] || seen[ny][nx]) continue;
              seen[ny][nx] = true;
              stack.push_back({nx, ny});
            }
          }
          if (touches) ++components;
        }
      if (components >= 2) doors.insert(c);
    }
  }
  return doors;
}

std::vector<RoomSegment> RoomSegmenter::segment(const SemanticMap& map) {
  std::set<Cell> doors = detect_door_cells(map, cfg_.door_width);

  // Connected components of known free space minus doors.
  std::vector<std::set<Cell>> comps;
  Grid2D<int> comp_of(map.width(), map.height(), -1);
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) {
      Cell start{x, y};
      if (!map.known_free(start) || doors.count(start) || comp_of.at(start) != -1) continue;
      int idx = (int)comps.size();
      comps.emplace_back();
      std::vector<Cell> stack{start};
      comp_of.at(start) = idx;
      while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        comps[idx].insert(c);
        for (const auto& d : nesw()) {
          Cell n{c.x + d.x, c.y + d.y};
          if (map.known_free(n) && !doors.count(n) && comp_of.at(n) == -1) {
            comp_of.at(n) = idx;
            stack.push_back(n);
          }
        }
      }
    }

  // Merge fragments below min_room_cells into their largest neighbor:
  // components touching diagonally or through one shared door cell.
  auto neighbors_of = [&](int idx) {
    std::set<int> out;
    for (const auto& c : comps[idx]) {
      for (const auto& d : neighbors8()) {
        Cell n{c.x + d.x, c.y + d.y};
        if (!map.in_bounds(n)) continue;
        int o = comp_of.at(n);
        if (o >= 0 && o != idx) out.insert(o);
        if (doors.count(n))
          for (const auto& dd : nesw()) {
            Cell m{n.x + dd.x, n.y + dd.y};
            if (map.in_bounds(m) && comp_of.at(m) >= 0 && comp_of.at(m) != idx)
              out.insert(comp_of.at(m));
          }
      }
    }
    return out;
  };
  bool merged = true;
  while (merged) {
    merged = false;
    for (int i = 0; i < (int)comps.size(); ++i) {
      if (comps[i].empty() || (int)comps[i].size() >= cfg_.min_room_cells) continue;
      int best = -1;
      for (int o : neighbors_of(i))
        if (!comps[o].empty() &&
            (best == -1 || comps[o].size() > comps[best].size() ||
             (comps[o].size() == comps[best].size() && *comps[o].begin() < *comps[best].begin())))
          best = o;
      if (best == -1) continue;
      for (const auto& c : comps[i]) comp_of.at(c) = best;
      comps[best].insert(comps[i].begin(), comps[i].end());
      comps[i].clear();
      merged = true;
    }
  }
  comps.erase(std::remove_if(comps.begin(), comps.end(),
                             [](const std::set<Cell>& s) { return s.empty(); }),
              comps.end());
  std::sort(comps.begin(), comps.end(), [](const std::set<Cell>& a, const std::set<Cell>& b) {
    return *a.begin() < *b.begin();
  });

  // Stable ids: best-overlap match against the previous segmentation.
  std::vector<int> assigned(comps.size(), -1);
  struct Cand {
    size_t overlap;
    int prev_id;
    size_t comp;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < comps.size(); ++i)
    for (const auto& [pid, pmask] : previous_) {
      size_t ov = 0;
      for (const auto& c : pmask)
        if (comps[i].count(c)) ++ov;
      if (ov > 0) cands.push_back({ov, pid, i});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    if (a.prev_id != b.prev_id) return a.prev_id < b.prev_id;
    return a.comp < b.comp;
  });
  std::set<int> used;
  for (const auto& cand : cands) {
    if (assigned[cand.comp] != -1 || used.count(cand.prev_id)) continue;
    assigned[cand.comp] = cand.prev_id;
    used.insert(cand.prev_id);
  }
  for (size_t i = 0; i < comps.size(); ++i)
    if (assigned[i] == -1) assigned[i] = next_id_++;
  next_id_ = std::max(next_id_, *std::max_element(assigned.begin(), assigned.end()) + 1);

  std::vector<RoomSegment> segments;
  previous_.clear();
  for (size_t i = 0; i < comps.size(); ++i) {
    RoomSegment seg;
    seg.room_id = assigned[i];
    seg.mask = std::move(comps[i]);
    int interior = 0;
    for (const auto& c : seg.mask) {
      bool at_frontier = false;
      for (const auto& d : nesw()) {
        Cell n{c.x + d.x, c.y + d.y};
        if (!map.in_bounds(n) || map.at(n) == MapCell::Unknown) at_frontier = true;
      }
      if (!at_frontier) ++interior;
      for (const auto& d : nesw()) {
        Cell n{c.x + d.x, c.y + d.y};
        if (doors.count(n)) seg.door_cells.insert(n);
      }
    }
    seg.explored = (double)interior / (double)seg.mask.size();
    previous_[seg.room_id] = seg.mask;
    segments.push_back(std::move(seg));
  }
  std::sort(segments.begin(), segments.end(),
            [](const RoomSegment& a, const RoomSegment& b) { return a.room_id < b.room_id; });
  return segments;
}

const FrameRecord& best_frame(const RoomSegment& room, const std::vector<FrameRecord>& frames) {
  const FrameRecord* best = nullptr;
  size_t best_count = 0;
  for (const auto& f : frames) {
    size_t count = 0;
    for (const auto& vc : f.visible_cells)
      if (room.mask.count(vc.cell)) ++count;
    if (count == 0) continue;
    if (!best || count > best_count ||
        (count == best_count &&
         (f.tick < best->tick || (f.tick == best->tick && f.heading < best->heading)))) {
      best = &f;
      best_count = count;
    }
  }
  if (!best) throw std::runtime_error("room unseen");
  return *best;
}

CoOccurrenceTable CoOccurrenceTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read co-occurrence table: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

CoOccurrenceTable CoOccurrenceTable::from_json_text(const std::string& text) {
  CoOccurrenceTable t;
  json doc = json::parse(text);
  t.version_ = doc.value("version", 0);
  for (const auto& [room, row] : doc.at("weights").items())
    for (const auto& [obj, w] : row.items()) t.weights_[room][obj] = w.get<double>();
  return t;
}

double CoOccurrenceTable::weight(const std::string& room_kind,
                                 const std::string& object_class) const {
  auto it = weights_.find(room_kind);
  if (it == weights_.end()) return 0.0;
  auto jt = it->second.find(object_class);
  return jt == it->second.end() ? 0.0 : jt->second;
}

std::string CoOccurrenceTable::best_label(const std::vector<std::string>& object_classes) const {
  std::set<std::string> unique(object_classes.begin(), object_classes.end());
  std::string best;
  double best_score = 0.0;
  for (const auto& [room, row] : weights_) {
    double score = 0.0;
    for (const auto& obj : unique) score += weight(room, obj);
    if (score > best_score) {
      best_score = score;
      best = room;
    }
  }
  return best;
}

std::vector<std::string> CoOccurrenceTable::room_kinds() const {
  std::vector<std::string> out;
  for (const auto& [room, _] : weights_) out.push_back(room);
  return out;
}

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

}  // namespace

RoomDescription RuleDescriber::describe(const RoomStats& stats,
                                        const std::vector<std::string>& objects,
                                        const std::vector<std::string>& targets) {
  RoomDescription d;
  d.room_id = stats.room_id;
  std::set<std::string> unique(objects.begin(), objects.end());
  d.object_list.assign(unique.begin(), unique.end());
  std::string label = table_.best_label(d.object_list);
  if (label.empty()) {
    d.label = "unknown room";
    d.likely_targets = targets;  // no evidence, anything might be here
    d.text = "an unidentified room of " + std::to_string(stats.area) + " cells with " +
             (d.object_list.empty() ? "nothing notable observed" : join(d.object_list, ", "));
  } else {
    d.label = label;
    for (const auto& t : targets)
      if (table_.weight(label, t) > 0.0) d.likely_targets.push_back(t);
    d.text = "a " + label + " of " + std::to_string(stats.area) + " cells containing " +
             join(d.object_list, ", ");
  }
  return d;
}

RoomDescription RemoteDescriber::describe(const RoomStats& stats,
                                          const std::vector<std::string>& objects,
                                          const std::vector<std::string>& targets) {
  try {
    httplib::Client client(cfg_.host, cfg_.port);
    client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
    client.set_read_timeout(0, cfg_.timeout_ms * 1000);
    json req;
    req["room_id"] = stats.room_id;
    req["area"] = stats.area;
    req["anchor"] = {stats.anchor.x, stats.anchor.y};
    req["centroid"] = {stats.centroid.x, stats.centroid.y};
    req["explored_pct"] = stats.explored_pct;
    req["objects"] = objects;
    req["targets"] = targets;
    auto res = client.Post(cfg_.path, req.dump(), "application/json");
    if (!res || res->status != 200) throw std::runtime_error("describer endpoint unavailable");
    json body = json::parse(res->body);
    RoomDescription d;
    d.room_id = stats.room_id;
    d.label = body.at("label").get<std::string>();
    d.text = body.at("text").get<std::string>();
    d.likely_targets = body.at("likely_targets").get<std::vector<std::string>>();
    std::set<std::string> unique(objects.begin(), objects.end());
    d.object_list.assign(unique.begin(), unique.end());
    return d;
  } catch (const std::exception&) {
    RoomDescription d = fallback_.describe(stats, objects, targets);
    d.degraded = true;
    return d;
  }
}

RoomDescription describe(const RoomSegment& room, const FrameRecord& frame,
                         const std::vector<std::string>& targets, RoomDescriber& describer) {
  RoomStats stats;
  stats.room_id = room.room_id;
  stats.area = (int)room.mask.size();
  stats.anchor = room.anchor();
  stats.centroid = room.centroid();
  stats.explored_pct = (int)std::lround(room.explored * 100.0);

  std::set<std::string> evidence;
  for (const auto& vo : frame.visible_objects)
    if (room.mask.count(vo.cell)) evidence.insert(vo.cls);
  std::vector<std::string> objects(evidence.begin(), evidence.end());

  RoomDescription d = describer.describe(stats, objects, targets);
  d.room_id = room.room_id;
  // Clip to the actual evidence: a describer may not invent objects or targets.
  std::vector<std::string> clipped;
  for (const auto& o : d.object_list)
    if (evidence.count(o)) clipped.push_back(o);
  d.object_list = clipped;
  std::vector<std::string> lt;
  for (const auto& t : d.likely_targets)
    if (std::find(targets.begin(), targets.end(), t) != targets.end()) lt.push_back(t);
  d.likely_targets = lt;
  return d;
}

}  // namespace teamnav::rooms
