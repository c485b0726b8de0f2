#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ctx_gen.hpp"
#include "teamnav/oracle.hpp"

using namespace teamnav;
using namespace teamnav::oracle;

namespace {

rooms::CoOccurrenceTable fixture_table() {
  return rooms::CoOccurrenceTable::load_file(std::string(TEAMNAV_SOURCE_DIR) +
                                             "/data/room_object_cooccurrence.json");
}

PromptContext member_ctx() {
  PromptContext ctx;
  ctx.agent_id = 2;
  ctx.goals = {"tv", "toilet"};
  ctx.progress.set("tv", TargetStatus::Unclaimed);
  ctx.progress.set("toilet", TargetStatus::Unclaimed);
  ctx.state.version = 5;
  AgentSummary self;
  self.id = 2;
  self.pose = {3, 3};
  ctx.state.agents.push_back(self);

  RoomInfo bedroom;
  bedroom.room = {{10, 1}, false};
  bedroom.label = "bedroom";
  bedroom.objects = {"bed", "pillow"};
  bedroom.likely_targets = {"tv"};
  bedroom.explored_pct = 40;
  bedroom.centroid = {12, 3};
  bedroom.distance = 10;
  ctx.state.upsert_room(bedroom);

  RoomInfo blank;
  blank.room = {{1, 1}, false};
  blank.label = "unknown room";
  blank.explored_pct = 20;
  blank.centroid = {2, 2};
  blank.distance = 2;
  ctx.state.upsert_room(blank);

  ctx.options = {bedroom.room, blank.room};
  ctx.global_progress = ctx.progress;
  ctx.global_state = ctx.state;
  ctx.proposal.agent_id = 2;
  ctx.proposal.action = bedroom.room;
  ctx.proposal.locks = {"tv"};
  ctx.proposal.thoughts = "bedrooms often hold televisions";
  return ctx;
}

}  // namespace

TEST_CASE("a single candidate room is proposed regardless of score") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  ctx.options = {RoomRef{{1, 1}, false}};
  Proposal p = oracle.propose(ctx);
  CHECK(p.action == RoomRef{{1, 1}, false});
}

TEST_CASE("proposal scoring weighs co-occurrence against distance per the fixture") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  // Recomputed by hand from the fixture: bedroom scores weight(bedroom,tv)=3
  // over distance 10 -> 3/11; the unlabeled room scores 0. Bedroom wins even
  // though it is five times farther.
  auto table = fixture_table();
  double bedroom_score = table.weight("bedroom", "tv") / (1.0 + 10.0);
  double blank_score = table.weight("unknown room", "tv") / (1.0 + 2.0);
  REQUIRE(bedroom_score > blank_score);
  Proposal p = oracle.propose(ctx);
  CHECK(p.action == RoomRef{{10, 1}, false});
  CHECK(p.locks == std::vector<std::string>{"tv"});
}

TEST_CASE("rule proposals are pure") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  CHECK(oracle.propose(ctx) == oracle.propose(ctx));
}

TEST_CASE("propose without candidates is an error") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  ctx.options.clear();
  CHECK_THROWS_WITH(oracle.propose(ctx), doctest::Contains("no candidate rooms"));
}

TEST_CASE("conflict-free proposals are supported without interrupts") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  CoordinationResult res = oracle.coordinate(ctx);
  REQUIRE(res.directives.size() == 1);
  CHECK(res.directives[0].support);
  CHECK(res.directives[0].action == ctx.proposal.action);
  CHECK(check_coordination(res, ctx).empty());
}

TEST_CASE("a proposal aimed at an occupied room is opposed with an alternative") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  AgentSummary other;
  other.id = 0;
  other.pose = {8, 2};
  other.has_assignment = true;
  other.assigned = ctx.proposal.action;  // the bedroom is already claimed
  ctx.global_state.agents.push_back(other);
  std::sort(ctx.global_state.agents.begin(), ctx.global_state.agents.end(),
            [](const AgentSummary& a, const AgentSummary& b) { return a.id < b.id; });
  CoordinationResult res = oracle.coordinate(ctx);
  REQUIRE(!res.directives.empty());
  CHECK_FALSE(res.directives[0].support);
  CHECK(res.directives[0].action != ctx.proposal.action);
  CHECK(check_coordination(res, ctx).empty());
}

TEST_CASE("locking a teammate's only likely target interrupts it with a new room") {
  RuleOracle oracle(fixture_table());
  PromptContext ctx = member_ctx();
  // Agent 1 sits in a room whose single likely target is tv; the requester's
  // approved lock on tv makes that room redundant.
  RoomInfo tv_room;
  tv_room.room = {{16, 8}, false};
  tv_room.label = "living_room";
  tv_room.likely_targets = {"tv"};
  tv_room.explored_pct = 10;
  tv_room.centroid = {18, 9};
  ctx.global_state.upsert_room(tv_room);
  RoomInfo spare;
  spare.room = {{3, 9}, false};
  spare.label = "bathroom";
  spare.likely_targets = {"toilet"};
  spare.explored_pct = 0;
  spare.centroid = {4, 10};
  ctx.global_state.upsert_room(spare);
  AgentSummary j;
  j.id = 1;
  j.pose = {17, 9};
  j.has_assignment = true;
  j.assigned = tv_room.room;
  ctx.global_state.agents.push_back(j);
  std::sort(ctx.global_state.agents.begin(), ctx.global_state.agents.end(),
            [](const AgentSummary& a, const AgentSummary& b) { return a.id < b.id; });

  CoordinationResult res = oracle.coordinate(ctx);
  REQUIRE(res.directives.size() == 2);
  CHECK(res.directives[0].support);
  CHECK(res.directives[1].agent == 1);
  CHECK(res.directives[1].is_interrupt);
  CHECK(res.directives[1].action != tv_room.room);
  CHECK(check_coordination(res, ctx).empty());

  // Exhaustive pairwise conflict-freedom over the post state.
  std::set<std::string> rooms_taken;
  for (const auto& d : res.directives)
    if (!d.action.frontier) CHECK(rooms_taken.insert(to_string(d.action)).second);
}

TEST_CASE("prompts render fixed sections with placeholder markers") {
  PromptContext ctx = member_ctx();
  ctx.history.clear();
  Prompts p = render_prompts(ctx);
  CHECK(p.member.find("## ID\nagent: 2") != std::string::npos);
  CHECK(p.member.find("## HISTORY\n(none)") != std::string::npos);
  size_t options_pos = p.member.find("## OPTIONS");
  REQUIRE(options_pos != std::string::npos);
  int option_lines = 0;
  for (size_t i = options_pos; i < p.member.size(); ++i)
    if (p.member[i] == '\n' && i + 1 < p.member.size() && p.member[i + 1] == '-') ++option_lines;
  CHECK(option_lines == 2);  // exactly the two candidate rooms
  CHECK(p.leader.find("## PROPOSAL") != std::string::npos);
  CHECK(p.leader.find("## GLOBAL STATE") != std::string::npos);
}

TEST_CASE("rendered prompts match the frozen golden file") {
  PromptContext ctx = member_ctx();
  ctx.history = {"[t4] asked for coordination toward room (10,1)"};
  Prompts p = render_prompts(ctx);
  std::string golden_path = std::string(TEAMNAV_SOURCE_DIR) + "/tests/golden_prompts.txt";
  std::ifstream in(golden_path);
  REQUIRE_MESSAGE(in.good(), "golden file missing: " + golden_path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(p.member + "=====\n" + p.leader == ss.str());
}

TEST_CASE("render rejects field values that would break the grammar") {
  PromptContext ctx = member_ctx();
  ctx.goals.push_back("two words");
  CHECK_THROWS_AS((void)render_prompts(ctx), PromptError);
  ctx = member_ctx();
  ctx.proposal.thoughts = "line\nbreak";
  CHECK_THROWS_AS((void)render_prompts(ctx), PromptError);
}

TEST_CASE("parse recovers every field of randomized contexts") {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 100; ++i) {
    PromptContext ctx = testgen::random_context(rng);
    Prompts p = render_prompts(ctx);
    PromptContext back = parse_prompts(p.member, p.leader);
    CAPTURE(i);
    CHECK(back == ctx);
  }
}

TEST_CASE("well-formed replies parse into proposals and coordination results") {
  PromptContext ctx = member_ctx();
  std::string reply = "Considering the layout.\n```\ntype: proposal\naction: room (10,1)\n"
                      "locks: [tv]\nthoughts: bedroom first\n```\n";
  auto parsed = parse_llm_reply(reply, ctx);
  auto* p = std::get_if<Proposal>(&parsed);
  REQUIRE(p);
  CHECK(p->action == RoomRef{{10, 1}, false});
  CHECK(p->locks == std::vector<std::string>{"tv"});

  std::string coord = "```\ntype: coordination\ndecision: support\naction: room (10,1)\n"
                      "locks: [tv]\nthoughts: fine\n```";
  auto parsed2 = parse_llm_reply(coord, ctx);
  CHECK(std::get_if<CoordinationResult>(&parsed2));
}

TEST_CASE("replies naming unknown rooms fail validation") {
  PromptContext ctx = member_ctx();
  std::string reply = "```\ntype: proposal\naction: room (99,99)\nlocks: []\nthoughts: x\n```";
  CHECK_THROWS_AS(parse_llm_reply(reply, ctx), PromptError);
  CHECK_THROWS_AS(parse_llm_reply("no fence at all", ctx), PromptError);
}

TEST_CASE("the remote oracle falls back to rule decisions after two bad replies") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    nlohmann::json reply = {
        {"choices", {{{"message", {{"content", "I cannot answer in the requested format."}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteOracleConfig cfg;
  cfg.port = port;
  RemoteOracle remote(cfg, fixture_table());
  RuleOracle rule(fixture_table());
  PromptContext ctx = member_ctx();
  Proposal fallback = remote.propose(ctx);
  CHECK(calls == 2);  // one attempt plus one reprompt
  CHECK(remote.degraded_count() == 1);
  CHECK(fallback == rule.propose(ctx));

  server.stop();
  server_thread.join();
}

TEST_CASE("the remote oracle consumes a well-formed fenced reply") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    CHECK(body.at("temperature").get<double>() == 0.0);
    nlohmann::json reply = {
        {"choices",
         {{{"message",
            {{"content",
              "```\ntype: proposal\naction: room (1,1)\nlocks: []\nthoughts: closest\n```"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteOracleConfig cfg;
  cfg.port = port;
  RemoteOracle remote(cfg, fixture_table());
  PromptContext ctx = member_ctx();
  Proposal p = remote.propose(ctx);
  CHECK(p.action == RoomRef{{1, 1}, false});
  CHECK(remote.degraded_count() == 0);
  server.stop();
  server_thread.join();
}

TEST_CASE("the validating wrapper rejects malformed coordination from a fake impl") {
  struct BrokenOracle : DecisionOracle {
    Proposal propose(const PromptContext& ctx) override {
      Proposal p;
      p.agent_id = ctx.agent_id;
      p.action = {{99, 99}, false};  // not a known room
      return p;
    }
    CoordinationResult coordinate(const PromptContext& ctx) override {
      CoordinationResult r;
      AgentDirective d;
      d.agent = ctx.proposal.agent_id;
      d.support = false;
      d.action = ctx.proposal.action;  // oppose must change the action
      r.directives.push_back(d);
      return r;
    }
    std::string name() const override { return "broken"; }
  };
  ValidatingOracle vo(std::make_unique<BrokenOracle>(), fixture_table());
  RuleOracle rule(fixture_table());
  PromptContext ctx = member_ctx();
  CHECK(vo.propose(ctx) == rule.propose(ctx));
  CHECK(vo.coordinate(ctx) == rule.coordinate(ctx));
  CHECK(vo.degraded_count() == 2);
}
