#include "teamnav/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "teamnav/mapping.hpp"
#include "teamnav/motion.hpp"
#include "teamnav/serial.hpp"
#include "teamnav/topology.hpp"

namespace teamnav::harness {

using nlohmann::json;

namespace {

constexpr double kFrameFovDeg = 60.0;
constexpr long kTriggerCooldown = 20;
constexpr double kGraphRebuildGrowth = 1.10;  // +10% known cells

// Per-agent embodied controller: perception, exploration, panorama capture,
// target chasing and navigation toward directives. Protocol state lives in
// the engine; this layer only consumes directives and tokens.
class Brain {
 public:
  Brain(int id, const world::World& w, rooms::CoOccurrenceTable table,
        oracle::DecisionOracle& member_oracle, rooms::RoomDescriber& describer)
      : id_(id),
        map_(w.grid.width(), w.grid.height()),
        table_(std::move(table)),
        member_oracle_(member_oracle),
        describer_(describer) {}

  void perceive(const world::World& w) {
    world::Observation obs = world::sense(w, id_);
    map_.integrate(obs);
    segments_ = segmenter_.segment(map_);
    refresh_descriptions();
    bool rebuild = graph_cells_ < 0 || segments_.size() != graph_segments_ ||
                   map_.known_cell_count() >= (int)(graph_cells_ * kGraphRebuildGrowth);
    if (rebuild) {
      graph_ = topology::build_graph(topology::skeletonize(map_), map_);
      graph_cells_ = map_.known_cell_count();
      graph_segments_ = segments_.size();
      plan_.reset();
    }
  }

  oracle::AgentSummary summary(const world::World& w) const {
    oracle::AgentSummary s;
    s.id = id_;
    s.pose = w.agents[id_].cell;
    s.heading = w.agents[id_].heading;
    s.alive = w.agents[id_].alive;
    s.has_assignment = assignment_.has_value();
    if (assignment_) s.assigned = *assignment_;
    return s;
  }

  std::vector<oracle::RoomInfo> contributed_rooms() const {
    std::vector<oracle::RoomInfo> out;
    for (const auto& seg : segments_) out.push_back(room_info(seg, std::nullopt));
    return out;
  }

  const std::set<std::string>& found() const { return found_; }
  const mapping::SemanticMap& map() const { return map_; }
  const std::vector<rooms::RoomSegment>& segments() const { return segments_; }

  void on_directive(const oracle::AgentDirective& d) {
    assignment_ = d.action;
    awaiting_ = false;
    for (const auto& l : d.locks) progress_.set(l, oracle::TargetStatus::Locked, id_);
  }

  void on_token(const protocol::Token& tok) {
    last_version_ = tok.version();
    for (const auto& t : tok.progress.targets) {
      const oracle::TargetState* mine = progress_.find(t.cls);
      if (mine && mine->status == oracle::TargetStatus::Found) continue;
      progress_.set(t.cls, t.status, t.locked_by);
    }
    for (const auto& r : tok.state.rooms) {
      auto it = global_rooms_.find(r.room);
      if (it == global_rooms_.end() || it->second.explored_pct <= r.explored_pct)
        global_rooms_[r.room] = r;
    }
  }

  void on_outcome(const world::SubtaskOutcome& o) {
    if (o.result == world::SubtaskResult::Success) {
      progress_.set(o.declared_class, oracle::TargetStatus::Found);
      found_.insert(o.declared_class);
    }
  }

  void init_progress(const std::vector<std::string>& goals) {
    for (const auto& g : goals) progress_.set(g, oracle::TargetStatus::Unclaimed);
  }

  // Fires a help request when the current room is exhausted and no known
  // target is worth chasing. Runs before the protocol phase of the tick.
  void maybe_trigger(const world::World& w, protocol::Engine& engine, long t) {
    if (awaiting_ || panorama_.has_value()) return;
    if (t - last_trigger_ < kTriggerCooldown) return;
    if (chase_candidate(w).has_value()) return;

    const rooms::RoomSegment* cur = segment_at(w.agents[id_].cell);
    bool exhausted = false;
    if (assignment_ && !assignment_->frontier) {
      const rooms::RoomSegment* target = segment_by_anchor(assignment_->anchor);
      exhausted = target && target->mask.count(w.agents[id_].cell) && target->explored >= 1.0;
    } else if (assignment_ && assignment_->frontier) {
      exhausted = map_.frontier_cells().empty();
    } else {
      exhausted = cur && cur->explored >= 1.0;
    }
    if (!exhausted) return;

    oracle::PromptContext ctx = member_context(w, cur);
    if (ctx.options.empty()) return;  // no candidate rooms; fallback exploration continues
    oracle::Proposal proposal;
    try {
      proposal = member_oracle_.propose(ctx);
    } catch (const std::exception&) {
      return;
    }
    last_trigger_ = t;
    awaiting_ = true;
    history_.push_back("[t" + std::to_string(t) + "] proposed " +
                       oracle::to_string(proposal.action));
    engine.request_help(id_, proposal, t);
  }

  world::Action decide(const world::World& w, long t) {
    const world::AgentPose& pose = w.agents[id_];

    // 1. An in-progress panorama owns the tick.
    if (panorama_) {
      world::Action a = panorama_->tick(w, id_, kFrameFovDeg);
      if (panorama_->done()) {
        for (const auto& f : panorama_->frames()) frames_.push_back(f);
        pano_done_[panorama_->waypoint()] = {t, map_.known_cell_count()};
        panorama_.reset();
      }
      return a;
    }

    // 2. Chase the nearest known remaining target instance.
    if (auto cand = chase_candidate(w)) {
      auto [cls, cell, goals] = *cand;
      if (manhattan(pose.cell, cell) <= world::kSuccessRadius) {
        if (w.tick >= w.declare_cooldown_until[id_]) {
          attempted_.insert({cls, cell});
          return {world::ActionKind::Declare, cls};
        }
        return {world::ActionKind::NoOp, ""};
      }
      if (auto a = navigate_to(goals, pose)) return *a;
    }

    // 3. Passing a fresh waypoint: rotate for the twelve-frame panorama.
    if (graph_.waypoint_at.count(pose.cell) && panorama_allowed(pose.cell, t)) {
      panorama_.emplace(pose.cell);
      world::Action a = panorama_->tick(w, id_, kFrameFovDeg);
      if (panorama_->done()) panorama_.reset();  // kHeadingCount == 1 cannot happen
      return a;
    }

    if (awaiting_) return {world::ActionKind::NoOp, ""};

    // 4. Move toward the assigned room or frontier region.
    if (assignment_) {
      if (assignment_->frontier) {
        auto frontiers = map_.frontier_cells();
        if (frontiers.empty()) {
          assignment_.reset();
        } else if (auto a = navigate_to(frontiers, pose)) {
          return *a;
        }
      } else if (const rooms::RoomSegment* seg = segment_by_anchor(assignment_->anchor)) {
        if (!seg->mask.count(pose.cell)) {
          if (auto a = navigate_into_room(*seg, pose)) return *a;
        }
        // inside: exploration below takes over
      } else {
        // Room known only through the token: head for the frontier nearest
        // its centroid.
        auto it = global_rooms_.find(*assignment_);
        auto frontiers = map_.frontier_cells();
        if (it != global_rooms_.end() && !frontiers.empty()) {
          Cell target = it->second.centroid;
          Cell best = *frontiers.begin();
          for (const auto& f : frontiers)
            if (manhattan(f, target) < manhattan(best, target)) best = f;
          if (auto a = navigate_to({best}, pose)) return *a;
        } else {
          assignment_.reset();
        }
      }
    }

    // 5. Explore the current room's frontier.
    if (const rooms::RoomSegment* cur = segment_at(pose.cell)) {
      std::set<Cell> in_room;
      for (const auto& c : cur->mask)
        if (map_.is_frontier(c)) in_room.insert(c);
      if (auto a = navigate_to(in_room, pose)) return *a;
    }

    // 6. Anywhere else unknown space remains.
    if (auto a = navigate_to(map_.frontier_cells(), pose)) return *a;
    return {world::ActionKind::NoOp, ""};
  }

  std::vector<std::string> history() const { return history_; }

 private:
  struct ChaseTarget {
    std::string cls;
    Cell cell;
    std::set<Cell> goals;
  };

  bool lockable(const std::string& cls) const {
    const oracle::TargetState* t = progress_.find(cls);
    if (!t) return false;
    return t->status == oracle::TargetStatus::Unclaimed ||
           (t->status == oracle::TargetStatus::Locked && t->locked_by == id_);
  }

  std::optional<ChaseTarget> chase_candidate(const world::World& w) {
    std::vector<ChaseTarget> cands;
    for (const auto& [cls, cells] : map_.semantics()) {
      if (!lockable(cls)) continue;
      for (const auto& cell : cells) {
        if (attempted_.count({cls, cell})) continue;
        ChaseTarget ct{cls, cell, {}};
        if (map_.known_free(cell)) ct.goals.insert(cell);
        for (const auto& d : nesw()) {
          Cell n{cell.x + d.x, cell.y + d.y};
          if (map_.known_free(n)) ct.goals.insert(n);
        }
        if (!ct.goals.empty()) cands.push_back(std::move(ct));
      }
    }
    if (cands.empty()) return std::nullopt;
    motion::DistanceField from_pose = motion::fmm(map_, {w.agents[id_].cell});
    const ChaseTarget* best = nullptr;
    double best_d = motion::kUnreachable;
    for (const auto& ct : cands) {
      double d = motion::kUnreachable;
      for (const auto& g : ct.goals) d = std::min(d, from_pose.at(g));
      if (d >= motion::kUnreachable) continue;
      if (!best || d < best_d ||
          (d == best_d && (ct.cls < best->cls || (ct.cls == best->cls && ct.cell < best->cell)))) {
        best = &ct;
        best_d = d;
      }
    }
    if (!best) return std::nullopt;
    return *best;
  }

  bool panorama_allowed(const Cell& cell, long t) const {
    auto it = pano_done_.find(cell);
    if (it == pano_done_.end()) return true;
    return t - it->second.first >= motion::kPanoramaCooldownTicks &&
           map_.known_cell_count() >= (int)(it->second.second * kGraphRebuildGrowth);
  }

  const rooms::RoomSegment* segment_at(const Cell& c) const {
    for (const auto& s : segments_)
      if (s.mask.count(c)) return &s;
    return nullptr;
  }

  const rooms::RoomSegment* segment_by_anchor(const Cell& anchor) const {
    for (const auto& s : segments_)
      if (s.anchor() == anchor) return &s;
    return nullptr;
  }

  std::optional<world::Action> navigate_to(const std::set<Cell>& goals,
                                           const world::AgentPose& pose) {
    if (goals.empty()) return std::nullopt;
    motion::DistanceField field = motion::fmm(map_, goals);
    if (!field.reachable(pose.cell) || field.at(pose.cell) == 0.0) return std::nullopt;
    try {
      return motion::next_action(pose, field);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  std::optional<world::Action> navigate_into_room(const rooms::RoomSegment& seg,
                                                  const world::AgentPose& pose) {
    bool has_waypoint = false;
    for (const auto& wpt : graph_.waypoints)
      if (seg.mask.count(wpt.cell)) has_waypoint = true;
    if (has_waypoint) {
      try {
        bool replan = !plan_ || plan_anchor_ != seg.anchor() || plan_graph_cells_ != graph_cells_;
        if (replan) {
          plan_ = motion::plan_to_room(graph_, map_, seg.mask, pose.cell);
          plan_anchor_ = seg.anchor();
          plan_graph_cells_ = graph_cells_;
        }
        if (auto a = motion::advance_plan(*plan_, graph_, map_, pose)) return a;
        plan_.reset();  // entry waypoint reached; walk the rest directly
      } catch (const std::exception&) {
        plan_.reset();
      }
    }
    return navigate_to(seg.mask, pose);
  }

  oracle::RoomInfo room_info(const rooms::RoomSegment& seg, std::optional<int> distance) const {
    oracle::RoomInfo info;
    info.room = {seg.anchor(), false};
    info.explored_pct = (int)std::lround(seg.explored * 100.0);
    info.centroid = seg.centroid();
    info.distance = distance.value_or(-1);
    if (seg.description) {
      info.label = seg.description->label;
      info.objects = seg.description->object_list;
      info.likely_targets = seg.description->likely_targets;
    }
    return info;
  }

  oracle::PromptContext member_context(const world::World& w, const rooms::RoomSegment* cur) {
    oracle::PromptContext ctx;
    ctx.agent_id = id_;
    ctx.progress = progress_;
    ctx.goals = goals_for_prompt();
    ctx.history = history_;
    ctx.state.version = last_version_;
    ctx.state.agents.push_back(summary(w));

    motion::DistanceField from_pose = motion::fmm(map_, {w.agents[id_].cell});
    std::set<oracle::RoomRef> own;
    for (const auto& seg : segments_) {
      double d = from_pose.at(seg.centroid());
      std::optional<int> dist;
      if (d < motion::kUnreachable) dist = (int)std::lround(d);
      oracle::RoomInfo info = room_info(seg, dist);
      ctx.state.upsert_room(info);
      own.insert(info.room);
    }
    for (const auto& [ref, info] : global_rooms_)
      if (!own.count(ref)) ctx.state.upsert_room(info);

    std::optional<oracle::RoomRef> exclude;
    if (cur) exclude = oracle::RoomRef{cur->anchor(), false};
    ctx.options = oracle::compute_options(ctx.progress, ctx.state,
                                          !map_.frontier_cells().empty(), exclude);
    return ctx;
  }

  std::vector<std::string> goals_for_prompt() const {
    std::vector<std::string> goals;
    for (const auto& t : progress_.targets) goals.push_back(t.cls);
    return goals;
  }

  void refresh_descriptions() {
    for (auto& seg : segments_) {
      std::set<std::string> evidence;
      for (const auto& [cls, cells] : map_.semantics())
        for (const auto& c : cells)
          if (seg.mask.count(c)) evidence.insert(cls);
      std::string sig_text = std::to_string(seg.mask.size()) + "/" +
                             std::to_string((int)std::lround(seg.explored * 100));
      for (const auto& e : evidence) sig_text += "," + e;
      uint64_t sig = fnv1a(sig_text);
      auto it = desc_cache_.find(seg.room_id);
      if (it != desc_cache_.end() && it->second.first == sig) {
        seg.description = it->second.second;
        continue;
      }
      std::vector<std::string> remaining = progress_.remaining();
      rooms::RoomDescription desc;
      bool have_frame = false;
      for (const auto& f : frames_) {
        for (const auto& vc : f.visible_cells)
          if (seg.mask.count(vc.cell)) {
            have_frame = true;
            break;
          }
        if (have_frame) break;
      }
      if (have_frame) {
        desc = rooms::describe(seg, rooms::best_frame(seg, frames_), remaining, describer_);
      } else {
        rooms::RoomStats stats{seg.room_id, (int)seg.mask.size(), seg.anchor(), seg.centroid(),
                               (int)std::lround(seg.explored * 100)};
        std::vector<std::string> objects(evidence.begin(), evidence.end());
        desc = describer_.describe(stats, objects, remaining);
      }
      seg.description = desc;
      desc_cache_[seg.room_id] = {sig, desc};
    }
  }

  int id_;
  mapping::SemanticMap map_;
  rooms::CoOccurrenceTable table_;
  oracle::DecisionOracle& member_oracle_;
  rooms::RoomDescriber& describer_;
  rooms::RoomSegmenter segmenter_;
  std::vector<rooms::RoomSegment> segments_;
  topology::TopoGraph graph_;
  int graph_cells_ = -1;
  size_t graph_segments_ = 0;
  std::vector<rooms::FrameRecord> frames_;
  std::optional<motion::PanoramaSession> panorama_;
  std::map<Cell, std::pair<long, int>> pano_done_;
  std::optional<motion::PlanState> plan_;
  Cell plan_anchor_{-1, -1};
  int plan_graph_cells_ = -1;
  oracle::ProgressView progress_;
  std::map<oracle::RoomRef, oracle::RoomInfo> global_rooms_;
  std::optional<oracle::RoomRef> assignment_;
  std::set<std::pair<std::string, Cell>> attempted_;
  std::set<std::string> found_;
  std::vector<std::string> history_;
  std::map<int, std::pair<uint64_t, rooms::RoomDescription>> desc_cache_;
  bool awaiting_ = false;
  long last_trigger_ = -kTriggerCooldown;
  long last_version_ = 0;
};

std::string chain_record(json record, uint64_t& chain) {
  std::string body = record.dump();
  chain = fnv1a(body, chain);
  record["c"] = hex64(chain);
  return record.dump();
}

}  // namespace

CrashPlan parse_crash_spec(const std::string& spec) {
  CrashPlan plan;
  if (spec.empty()) return plan;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    size_t colon = part.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("bad crash spec '" + part + "', expected agent:tick");
    std::string who = part.substr(0, colon);
    int agent = who == "leader" ? kCrashLeader : std::stoi(who);
    plan.at_tick[agent] = std::stol(part.substr(colon + 1));
  }
  return plan;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json doc = json::parse(text);
  RunConfig cfg;
  cfg.scenario_path = doc.at("scenario").get<std::string>();
  cfg.team_size = doc.value("team_size", -1);
  cfg.oracle_impl = doc.value("oracle", "rule");
  cfg.describer_impl = doc.value("describer", "rule");
  cfg.net_latency = doc.value("net_latency", 1);
  if (doc.contains("crash")) cfg.crashes = parse_crash_spec(doc.at("crash").get<std::string>());
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<uint64_t>();
  cfg.out_dir = doc.value("out_dir", "");
  cfg.data_dir = doc.value("data_dir", "data");
  if (doc.contains("remote_oracle")) {
    const auto& r = doc.at("remote_oracle");
    cfg.remote_oracle.host = r.value("host", cfg.remote_oracle.host);
    cfg.remote_oracle.port = r.value("port", cfg.remote_oracle.port);
    cfg.remote_oracle.path = r.value("path", cfg.remote_oracle.path);
    cfg.remote_oracle.model = r.value("model", cfg.remote_oracle.model);
    cfg.remote_oracle.timeout_ms = r.value("timeout_ms", cfg.remote_oracle.timeout_ms);
  }
  if (doc.contains("remote_describer")) {
    const auto& r = doc.at("remote_describer");
    cfg.remote_describer.host = r.value("host", cfg.remote_describer.host);
    cfg.remote_describer.port = r.value("port", cfg.remote_describer.port);
    cfg.remote_describer.path = r.value("path", cfg.remote_describer.path);
    cfg.remote_describer.timeout_ms = r.value("timeout_ms", cfg.remote_describer.timeout_ms);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

json RunConfig::to_json() const {
  json j;
  j["scenario"] = scenario_path;
  j["team_size"] = team_size;
  j["oracle"] = oracle_impl;
  j["describer"] = describer_impl;
  j["net_latency"] = net_latency;
  std::string crash;
  for (const auto& [agent, tick] : crashes.at_tick)
    crash += (crash.empty() ? "" : ",") + std::to_string(agent) + ":" + std::to_string(tick);
  j["crash"] = crash;
  if (seed) j["seed"] = *seed;
  j["data_dir"] = data_dir;
  return j;
}

json EpisodeReport::to_json(bool include_wall_clock) const {
  json j;
  j["scenario"] = scenario_path;
  j["seed"] = seed;
  j["per_target"] = json::array();
  for (const auto& t : per_target)
    j["per_target"].push_back(
        {{"class", t.cls}, {"result", t.result}, {"tick", t.tick}, {"agent", t.agent}});
  j["total_ticks"] = total_ticks;
  j["max_steps"] = max_steps;
  j["path_cells"] = json::object();
  for (const auto& [id, n] : path_cells) j["path_cells"][std::to_string(id)] = n;
  j["message_counts"] = message_counts;
  j["messages_total"] = messages_total;
  j["leadership_handoffs"] = leadership_handoffs;
  j["oracle_degradations"] = oracle_degradations;
  j["trigger_events"] = trigger_events;
  j["broadcast_baseline"] = broadcast_baseline;
  j["failed_declares"] = failed_declares;
  j["invariant_violations"] = invariant_violations;
  j["all_found"] = all_found;
  j["lineage_contacted"] = lineage_contacted;
  j["recoveries"] = recoveries;
  if (include_wall_clock) j["wall_clock_ms"] = wall_clock_ms;
  return j;
}

EpisodeArtifacts run_episode_artifacts(const RunConfig& config) {
  auto t0 = std::chrono::steady_clock::now();
  world::World w = world::load_scenario_file(config.scenario_path);
  if (config.seed) w.rng_seed = *config.seed;
  if (config.team_size >= 0) {
    if (config.team_size > (int)w.agents.size())
      throw std::invalid_argument("team_size exceeds scenario agent slots");
    w.agents.resize(config.team_size);
    w.declare_cooldown_until.resize(config.team_size);
  }
  const int n = (int)w.agents.size();

  rooms::CoOccurrenceTable table =
      rooms::CoOccurrenceTable::load_file(config.data_dir + "/room_object_cooccurrence.json");

  std::unique_ptr<oracle::DecisionOracle> inner;
  if (config.oracle_impl == "remote")
    inner = std::make_unique<oracle::RemoteOracle>(config.remote_oracle, table);
  else if (config.oracle_impl == "rule")
    inner = std::make_unique<oracle::RuleOracle>(table);
  else
    throw std::invalid_argument("unknown oracle impl '" + config.oracle_impl + "'");
  oracle::ValidatingOracle decision(std::move(inner), table);

  std::unique_ptr<rooms::RoomDescriber> describer;
  if (config.describer_impl == "remote")
    describer = std::make_unique<rooms::RemoteDescriber>(config.remote_describer, table);
  else
    describer = std::make_unique<rooms::RuleDescriber>(table);

  std::vector<std::string> goals = w.targets.classes;

  // Event plumbing: live invariant checking, trace accumulation, counters.
  protocol::InvariantChecker checker;
  std::vector<protocol::ProtoEvent> tick_events;
  long trigger_events = 0;
  auto sink = [&](const protocol::ProtoEvent& e) {
    checker.on_event(e);
    tick_events.push_back(e);
    if (e.type == "trigger") ++trigger_events;
  };

  std::ostringstream message_log;
  protocol::SimNet net(config.net_latency);
  net.on_send = [&](const protocol::Message& m, long now) {
    message_log << protocol::message_log_line(m, now) << "\n";
  };

  protocol::ProtocolConfig pcfg;
  pcfg.response_timeout = std::max<long>(16, 6L * config.net_latency + 10);
  pcfg.probe_timeout = pcfg.response_timeout;

  std::vector<int> ids;
  for (int i = 0; i < n; ++i) ids.push_back(i);
  protocol::Engine engine(pcfg, ids, goals, decision, std::move(net), sink);

  std::vector<Brain> brains;
  brains.reserve(n);
  for (int i = 0; i < n; ++i) brains.emplace_back(i, w, table, decision, *describer);
  for (auto& b : brains) b.init_progress(goals);

  engine.on_directive = [&](int agent, const oracle::AgentDirective& d) {
    brains[agent].on_directive(d);
  };
  engine.on_token = [&](int agent, const protocol::Token& tok) { brains[agent].on_token(tok); };

  EpisodeReport report;
  report.scenario_path = config.scenario_path;
  report.seed = w.rng_seed;
  report.max_steps = w.max_steps;
  for (int i = 0; i < n; ++i) report.path_cells[i] = 0;
  std::map<std::string, TargetOutcome> outcomes;

  uint64_t chain = 1469598103934665603ull;
  std::ostringstream trace;
  {
    json header;
    header["type"] = "header";
    header["format"] = 1;
    header["config"] = config.to_json();
    header["goals"] = goals;
    header["n_agents"] = n;
    header["max_steps"] = w.max_steps;
    trace << chain_record(header, chain) << "\n";
  }

  std::map<int, long> crash_plan = config.crashes.at_tick;
  bool bootstrapped = false;
  while (!w.episode_done) {
    long t = w.tick;
    tick_events.clear();

    for (const auto& [who, when] : crash_plan)
      if (when == t) {
        int agent = who == kCrashLeader ? engine.current_leader_id() : who;
        if (agent >= 0 && agent < n && w.agents[agent].alive) {
          w.agents[agent].alive = false;
          engine.crash(agent, t);
        }
      }

    for (int i = 0; i < n; ++i)
      if (w.agents[i].alive) brains[i].perceive(w);
    for (int i = 0; i < n; ++i)
      if (w.agents[i].alive)
        engine.update_self(i, brains[i].summary(w), brains[i].contributed_rooms(),
                           brains[i].found());
    if (!bootstrapped) {
      std::map<int, std::vector<oracle::RoomInfo>> initial;
      for (int i = 0; i < n; ++i)
        if (w.agents[i].alive) initial[i] = brains[i].contributed_rooms();
      engine.bootstrap(initial, t);
      bootstrapped = true;
    }
    for (int i = 0; i < n; ++i)
      if (w.agents[i].alive) brains[i].maybe_trigger(w, engine, t);
    engine.tick(t);

    std::map<int, world::Action> actions;
    for (int i = 0; i < n; ++i)
      if (w.agents[i].alive) actions[i] = brains[i].decide(w, t);

    std::vector<Cell> before;
    for (const auto& a : w.agents) before.push_back(a.cell);
    world::StepResult res = world::step(w, actions);
    for (int i = 0; i < n; ++i)
      if (w.agents[i].cell != before[i]) ++report.path_cells[i];

    for (const auto& o : res.outcomes) {
      brains[o.agent_id].on_outcome(o);
      if (o.result == world::SubtaskResult::Success && !outcomes.count(o.declared_class))
        outcomes[o.declared_class] = {o.declared_class, "success", o.tick, o.agent_id};
      if (o.result == world::SubtaskResult::Failure) ++report.failed_declares;
    }

    json rec;
    rec["type"] = "tick";
    rec["t"] = t;
    rec["agents"] = json::array();
    for (int i = 0; i < n; ++i)
      rec["agents"].push_back({{"id", i},
                               {"cell", w.agents[i].cell},
                               {"heading", w.agents[i].heading},
                               {"alive", w.agents[i].alive}});
    rec["actions"] = json::array();
    for (const auto& [id, a] : actions) {
      json ja = {{"agent", id}, {"kind", (int)a.kind}};
      if (a.kind == world::ActionKind::Declare) ja["class"] = a.declare_class;
      rec["actions"].push_back(ja);
    }
    rec["events"] = res.events;
    rec["outcomes"] = res.outcomes;
    rec["proto"] = tick_events;
    trace << chain_record(rec, chain) << "\n";
  }

  for (const auto& cls : w.targets.classes) {
    auto it = outcomes.find(cls);
    if (it != outcomes.end())
      report.per_target.push_back(it->second);
    else
      report.per_target.push_back({cls, "timeout", -1, -1});
  }
  report.total_ticks = w.tick;
  report.all_found = w.targets.remaining.empty();
  report.message_counts = engine.message_counts();
  report.messages_total = engine.messages_sent();
  report.leadership_handoffs = checker.handoffs();
  report.oracle_degradations = decision.degraded_count();
  report.trigger_events = trigger_events;
  report.broadcast_baseline = (long)n * (n - 1) + trigger_events * 2L * (n - 1);
  report.invariant_violations = checker.violations();
  report.lineage_contacted = checker.lineage_contacted();
  report.recoveries = checker.recoveries();
  report.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  {
    json end;
    end["type"] = "end";
    end["report"] = report.to_json(/*include_wall_clock=*/false);
    trace << chain_record(end, chain) << "\n";
  }

  EpisodeArtifacts artifacts;
  artifacts.report = report;
  artifacts.trace_text = trace.str();
  artifacts.message_log_text = message_log.str();

  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    std::ofstream(config.out_dir + "/trace.jsonl") << artifacts.trace_text;
    std::ofstream(config.out_dir + "/message_log.jsonl") << artifacts.message_log_text;
    std::ofstream(config.out_dir + "/report.json") << report.to_json(true).dump(2) << "\n";
  }
  return artifacts;
}

EpisodeReport run_episode(const RunConfig& config) {
  return run_episode_artifacts(config).report;
}

int replay_text(const std::string& trace_text, std::ostream& out) {
  std::vector<std::string> lines;
  {
    std::stringstream ss(trace_text);
    std::string line;
    while (std::getline(ss, line))
      if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) {
    out << "replay error: empty trace\n";
    return 2;
  }
  uint64_t chain = 1469598103934665603ull;
  std::vector<json> records;
  for (size_t i = 0; i < lines.size(); ++i) {
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::exception& e) {
      out << "replay error: record " << i << " unparseable: " << e.what() << "\n";
      return 2;
    }
    if (!rec.contains("c")) {
      out << "replay error: record " << i << " missing checksum\n";
      return 2;
    }
    std::string stored = rec.at("c");
    rec.erase("c");
    chain = fnv1a(rec.dump(), chain);
    if (hex64(chain) != stored) {
      out << "replay error: checksum mismatch at record " << i << "\n";
      return 2;
    }
    records.push_back(rec);
  }
  if (records.front().value("type", "") != "header") {
    out << "replay error: first record is not a header\n";
    return 2;
  }
  if (records.back().value("type", "") != "end") {
    out << "replay error: trace truncated at record " << records.size() << " (no end record)\n";
    return 2;
  }

  // Timeline reconstruction + offline invariant recheck.
  protocol::InvariantChecker checker;
  long ticks = 0;
  std::map<int, Cell> poses;
  int leader = -1;
  for (const auto& rec : records) {
    if (rec.value("type", "") != "tick") continue;
    ticks = rec.at("t").get<long>() + 1;
    for (const auto& a : rec.at("agents"))
      poses[a.at("id").get<int>()] = {a.at("cell").at(0).get<int>(),
                                      a.at("cell").at(1).get<int>()};
    for (const auto& pe : rec.at("proto")) {
      protocol::ProtoEvent e;
      e.tick = pe.at("tick").get<long>();
      e.type = pe.at("type").get<std::string>();
      e.a = pe.value("a", -1);
      e.b = pe.value("b", -1);
      e.version = pe.value("version", -1L);
      e.detail = pe.value("detail", "");
      checker.on_event(e);
      if (e.type == "leader_on") {
        if (leader != e.a)
          out << "[t" << e.tick << "] leadership -> agent " << e.a << " (" << e.detail << ")\n";
        leader = e.a;
      }
      if (e.type == "crash") out << "[t" << e.tick << "] agent " << e.a << " crashed\n";
    }
    for (const auto& ev : rec.at("events"))
      if (ev.at("kind").get<int>() == (int)world::EventKind::DeclareSuccess)
        out << "[t" << ev.at("tick").get<long>() << "] agent " << ev.at("agent").get<int>()
            << " found '" << ev.at("detail").get<std::string>() << "'\n";
  }
  out << "replayed " << ticks << " ticks, " << poses.size() << " agents\n";

  auto recorded =
      records.back().at("report").at("invariant_violations").get<std::vector<std::string>>();
  if (recorded != checker.violations()) {
    out << "replay error: invariant verdicts differ from the live run\n";
    for (const auto& v : checker.violations()) out << "  recomputed: " << v << "\n";
    for (const auto& v : recorded) out << "  recorded:   " << v << "\n";
    return 1;
  }
  out << "checksums ok, invariant verdicts match (" << checker.violations().size()
      << " violations)\n";
  return checker.violations().empty() ? 0 : 1;
}

int replay(const std::string& trace_path, std::ostream& out) {
  std::ifstream in(trace_path);
  if (!in) {
    out << "replay error: cannot read " << trace_path << "\n";
    return 2;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return replay_text(ss.str(), out);
}

std::vector<std::string> validate_scenario(const std::string& path) {
  try {
    world::World w = world::load_scenario_file(path);
    return world::validate_world(w);
  } catch (const world::ScenarioError& e) {
    return {e.what()};
  }
}

}  // namespace teamnav::harness
