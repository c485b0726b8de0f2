#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "teamnav/rooms.hpp"
#include "teamnav/world.hpp"

using namespace teamnav;
using namespace teamnav::rooms;
using mapping::SemanticMap;

namespace {

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

CoOccurrenceTable fixture_table() {
  return CoOccurrenceTable::load_file(std::string(TEAMNAV_SOURCE_DIR) +
                                      "/data/room_object_cooccurrence.json");
}

FrameRecord frame_seeing(std::initializer_list<Cell> cells, long tick, int heading,
                         int agent = 0) {
  FrameRecord f;
  f.agent_id = agent;
  f.tick = tick;
  f.heading = heading;
  for (const auto& c : cells) f.visible_cells.push_back({c, world::GroundCell::Free});
  return f;
}

}  // namespace

TEST_CASE("two rooms joined by a one-cell door segment apart") {
  SemanticMap m = map_of({"###########",
                          "#....#....#",
                          "#....#....#",
                          "#.........#",
                          "#....#....#",
                          "#....#....#",
                          "###########"});
  RoomSegmenter seg;
  auto segments = seg.segment(m);
  REQUIRE(segments.size() == 2);
  CHECK(segments[0].mask.count({5, 3}) == 0);
  CHECK(segments[1].mask.count({5, 3}) == 0);
  CHECK(segments[0].door_cells.count({5, 3}) == 1);
  CHECK(segments[1].door_cells.count({5, 3}) == 1);
  // Partition: no cell in two masks.
  for (const auto& c : segments[0].mask) CHECK(segments[1].mask.count(c) == 0);
}

TEST_CASE("a single open room is one segment covering all known free cells") {
  SemanticMap m = map_of({"########", "#......#", "#......#", "#......#", "########"});
  RoomSegmenter seg;
  auto segments = seg.segment(m);
  REQUIRE(segments.size() == 1);
  CHECK(segments[0].mask.size() == 18);
  CHECK(segments[0].explored == doctest::Approx(1.0));
}

TEST_CASE("partially observed rooms keep their id as observation grows") {
  RoomSegmenter seg;
  SemanticMap m(11, 7);
  world::Observation first;
  for (int y = 1; y <= 5; ++y)
    for (int x = 1; x <= 3; ++x) first.visible_cells.push_back({{x, y}, world::GroundCell::Free});
  m.integrate(first);
  auto before = seg.segment(m);
  REQUIRE(before.size() == 1);
  int original_id = before[0].room_id;
  CHECK(before[0].explored < 1.0);  // frontier cells remain

  world::Observation more;
  for (int y = 1; y <= 5; ++y)
    for (int x = 4; x <= 4; ++x) more.visible_cells.push_back({{x, y}, world::GroundCell::Free});
  for (int y = 0; y <= 6; ++y) {
    more.visible_cells.push_back({{0, y}, world::GroundCell::Wall});
    more.visible_cells.push_back({{5, y}, world::GroundCell::Wall});
  }
  for (int x = 0; x <= 5; ++x) {
    more.visible_cells.push_back({{x, 0}, world::GroundCell::Wall});
    more.visible_cells.push_back({{x, 6}, world::GroundCell::Wall});
  }
  m.integrate(more);
  auto after = seg.segment(m);
  REQUIRE(after.size() == 1);
  CHECK(after[0].room_id == original_id);
  CHECK(after[0].mask.size() == 20);
  CHECK(after[0].explored == doctest::Approx(1.0));
}

TEST_CASE("best_frame maximizes room coverage with tick then heading tie-breaks") {
  RoomSegment room;
  for (int x = 0; x < 30; ++x) room.mask.insert({x, 0});
  std::vector<FrameRecord> frames;
  frames.push_back(frame_seeing({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}}, 9, 2));
  {
    FrameRecord big;
    big.tick = 12;
    big.heading = 5;
    for (int x = 0; x < 20; ++x) big.visible_cells.push_back({{x, 0}, world::GroundCell::Free});
    frames.push_back(big);
  }
  CHECK(best_frame(room, frames).tick == 12);

  std::vector<FrameRecord> tie{frame_seeing({{0, 0}, {1, 0}}, 7, 1),
                               frame_seeing({{2, 0}, {3, 0}}, 3, 4)};
  CHECK(best_frame(room, tie).tick == 3);

  std::vector<FrameRecord> heading_tie{frame_seeing({{0, 0}}, 3, 6, /*agent=*/1),
                                       frame_seeing({{1, 0}}, 3, 2, /*agent=*/0)};
  CHECK(best_frame(room, heading_tie).heading == 2);  // agent id plays no role

  RoomSegment unseen;
  unseen.mask.insert({5, 5});
  CHECK_THROWS_WITH(best_frame(unseen, frames), doctest::Contains("room unseen"));
}

TEST_CASE("the rule describer reads the co-occurrence fixture") {
  RuleDescriber d(fixture_table());
  RoomStats stats{0, 25, {1, 1}, {3, 3}, 100};

  auto bedroom = d.describe(stats, {"bed", "pillow"}, {"toilet", "tv"});
  CHECK(bedroom.label == "bedroom");
  CHECK(bedroom.likely_targets == std::vector<std::string>{"tv"});
  CHECK_FALSE(bedroom.degraded);

  auto unknown = d.describe(stats, {}, {"toilet", "tv"});
  CHECK(unknown.label == "unknown room");
  CHECK(unknown.likely_targets == std::vector<std::string>{"toilet", "tv"});

  auto bathroom = d.describe(stats, {"toilet"}, {"toilet", "tv"});
  CHECK(bathroom.label == "bathroom");
  CHECK(bathroom.likely_targets == std::vector<std::string>{"toilet"});
}

TEST_CASE("describe clips objects and targets to the frame evidence") {
  RoomSegment room;
  room.room_id = 3;
  for (int x = 0; x < 5; ++x) room.mask.insert({x, 0});
  FrameRecord f = frame_seeing({{0, 0}, {1, 0}}, 1, 0);
  f.visible_objects.push_back({"bed", {1, 0}});
  f.visible_objects.push_back({"sofa", {9, 9}});  // outside the room mask
  RuleDescriber d(fixture_table());
  auto desc = describe(room, f, {"tv"}, d);
  CHECK(desc.room_id == 3);
  CHECK(desc.object_list == std::vector<std::string>{"bed"});
  CHECK(desc.label == "bedroom");
}

TEST_CASE("a remote describer answers and falls back when unreachable") {
  httplib::Server server;
  server.Post("/describe", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"label", "studio"},
                            {"text", "a studio"},
                            {"likely_targets", nlohmann::json::array({"tv"})}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteConfig cfg;
  cfg.port = port;
  RemoteDescriber remote(cfg, fixture_table());
  RoomStats stats{1, 10, {0, 0}, {1, 1}, 50};
  auto live = remote.describe(stats, {"bed"}, {"tv", "toilet"});
  CHECK(live.label == "studio");
  CHECK_FALSE(live.degraded);

  server.stop();
  server_thread.join();

  RemoteConfig dead = cfg;
  dead.port = 1;  // nothing listens there
  dead.timeout_ms = 100;
  RemoteDescriber offline(dead, fixture_table());
  auto fallback = offline.describe(stats, {"bed"}, {"tv", "toilet"});
  CHECK(fallback.degraded);
  CHECK(fallback.label == "bedroom");  // rule result
}

TEST_CASE("rule describer is deterministic") {
  RuleDescriber d(fixture_table());
  RoomStats stats{0, 9, {0, 0}, {1, 1}, 100};
  auto a = d.describe(stats, {"cup", "plate"}, {"cup"});
  auto b = d.describe(stats, {"cup", "plate"}, {"cup"});
  CHECK(a.label == b.label);
  CHECK(a.text == b.text);
  CHECK(a.likely_targets == b.likely_targets);
}
