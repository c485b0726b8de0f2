#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "teamnav/mapping.hpp"
#include "teamnav/world.hpp"

namespace teamnav::rooms {

struct RoomDescription {
  int room_id = -1;
  std::string label;  // inferred room kind, "unknown room" without evidence
  std::vector<std::string> object_list;  // sorted unique classes seen here
  std::string text;
  std::vector<std::string> likely_targets;
  bool degraded = false;  // true when a remote describer failed and we fell back
};

struct RoomSegment {
  int room_id = -1;
  std::set<Cell> mask;        // known-free cells; door cells excluded
  std::set<Cell> door_cells;  // doors adjacent to the mask
  double explored = 0.0;      // fraction of mask cells with no unknown 4-neighbor
  std::optional<RoomDescription> description;

  Cell anchor() const { return *mask.begin(); }
  Cell centroid() const;
};

// One of twelve heading-indexed observations captured at a waypoint visit.
struct FrameRecord {
  int agent_id = -1;
  Cell waypoint_cell;
  int heading = 0;  // [0,12)
  std::vector<world::VisibleCell> visible_cells;
  std::vector<world::VisibleObject> visible_objects;
  long tick = 0;
};

struct SegmenterConfig {
  int door_width = 2;      // free-space width (cells) at or below which a cut cell is a door
  int min_room_cells = 8;  // smaller components merge into the largest neighbor
};

// Free cells that are both narrow (run length <= door_width in one axis) and
// local cut points of known free space.
std::set<Cell> detect_door_cells(const mapping::SemanticMap& map, int door_width);

// Segments known free space into rooms with ids stable across map growth
// (max-overlap matching against the previous segmentation).
class RoomSegmenter {
 public:
  explicit RoomSegmenter(SegmenterConfig cfg = {}) : cfg_(cfg) {}

  std::vector<RoomSegment> segment(const mapping::SemanticMap& map);

 private:
  SegmenterConfig cfg_;
  std::map<int, std::set<Cell>> previous_;
  int next_id_ = 0;
};

// Frame with the most visible cells inside the room mask; ties go to the
// earlier tick, then the lower heading index. Throws "room unseen" when no
// frame intersects the mask.
const FrameRecord& best_frame(const RoomSegment& room, const std::vector<FrameRecord>& frames);

// Room-kind x object-class co-occurrence weights. Ships as a data fixture
// (data/room_object_cooccurrence.json).
class CoOccurrenceTable {
 public:
  static CoOccurrenceTable load_file(const std::string& path);
  static CoOccurrenceTable from_json_text(const std::string& text);

  double weight(const std::string& room_kind, const std::string& object_class) const;
  // Room kind maximizing summed weights; empty string when nothing scores.
  std::string best_label(const std::vector<std::string>& object_classes) const;
  std::vector<std::string> room_kinds() const;
  int version() const { return version_; }

 private:
  std::map<std::string, std::map<std::string, double>> weights_;
  int version_ = 0;
};

struct RoomStats {
  int room_id = -1;
  int area = 0;
  Cell anchor;
  Cell centroid;
  int explored_pct = 0;
};

class RoomDescriber {
 public:
  virtual ~RoomDescriber() = default;
  virtual RoomDescription describe(const RoomStats& stats,
                                   const std::vector<std::string>& objects,
                                   const std::vector<std::string>& targets) = 0;
  virtual std::string name() const = 0;
};

class RuleDescriber : public RoomDescriber {
 public:
  explicit RuleDescriber(CoOccurrenceTable table) : table_(std::move(table)) {}
  RoomDescription describe(const RoomStats& stats, const std::vector<std::string>& objects,
                           const std::vector<std::string>& targets) override;
  std::string name() const override { return "rule"; }
  const CoOccurrenceTable& table() const { return table_; }

 private:
  CoOccurrenceTable table_;
};

struct RemoteConfig {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string path = "/describe";
  int timeout_ms = 2000;
};

// POSTs room stats and evidence to an HTTP endpoint (request/response JSON
// documented in docs/formats.md). Any failure falls back to the rule-based
// describer with degraded=true.
class RemoteDescriber : public RoomDescriber {
 public:
  RemoteDescriber(RemoteConfig cfg, CoOccurrenceTable fallback_table)
      : cfg_(std::move(cfg)), fallback_(std::move(fallback_table)) {}
  RoomDescription describe(const RoomStats& stats, const std::vector<std::string>& objects,
                           const std::vector<std::string>& targets) override;
  std::string name() const override { return "remote"; }

 private:
  RemoteConfig cfg_;
  RuleDescriber fallback_;
};

// Describes a room from its best frame's evidence. The describer output is
// clipped so object_list and likely_targets never exceed the given evidence.
RoomDescription describe(const RoomSegment& room, const FrameRecord& frame,
                         const std::vector<std::string>& targets, RoomDescriber& describer);

}  // namespace teamnav::rooms
