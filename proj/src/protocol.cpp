#include "teamnav/protocol.hpp"

#include <algorithm>
#include <cassert>

#include "teamnav/serial.hpp"

namespace teamnav::protocol {

using oracle::AgentDirective;
using oracle::AgentSummary;
using oracle::Proposal;
using oracle::RoomInfo;
using oracle::TargetStatus;

std::string to_string(MsgKind kind) {
  switch (kind) {
    case MsgKind::HelpRequest: return "help_request";
    case MsgKind::LeaderResponse: return "leader_response";
    case MsgKind::Interrupt: return "interrupt";
    case MsgKind::WhoIsLeader: return "who_is_leader";
    case MsgKind::LeaderIs: return "leader_is";
    case MsgKind::Heartbeat: return "heartbeat";
  }
  return "?";
}

uint64_t Message::payload_digest() const {
  nlohmann::json j = *this;
  j.erase("kind");
  j.erase("sender");
  j.erase("receiver");
  j.erase("sent_tick");
  j.erase("seq");
  return fnv1a(j.dump());
}

std::string message_log_line(const Message& m, long deliver_tick) {
  nlohmann::json j = {{"tick", deliver_tick},
                      {"kind", to_string(m.kind)},
                      {"sender", m.sender},
                      {"receiver", m.receiver},
                      {"digest", hex64(m.payload_digest())}};
  return j.dump();
}

SimNet::SimNet(int fixed_latency)
    : latency_([fixed_latency](const Message&) { return fixed_latency; }) {}

SimNet::SimNet(LatencyFn latency) : latency_(std::move(latency)) {}

void SimNet::send(Message m, long now) {
  m.seq = next_seq_++;
  long lat = std::max(0, latency_(m));
  long when = now + lat;
  auto key = std::make_pair(m.sender, m.receiver);
  auto it = pair_last_delivery_.find(key);
  if (it != pair_last_delivery_.end()) when = std::max(when, it->second);  // per-pair FIFO
  pair_last_delivery_[key] = when;
  if (on_send) on_send(m, now);
  in_flight_.push_back({when, m});
}

std::vector<Message> SimNet::deliver(long tick) {
  std::vector<Message> due;
  std::vector<std::pair<long, Message>> rest;
  for (auto& [when, m] : in_flight_) {
    if (when <= tick)
      due.push_back(m);
    else
      rest.push_back({when, m});
  }
  in_flight_ = std::move(rest);
  std::sort(due.begin(), due.end(), [](const Message& a, const Message& b) {
    if (a.sent_tick != b.sent_tick) return a.sent_tick < b.sent_tick;
    if (a.sender != b.sender) return a.sender < b.sender;
    return a.seq < b.seq;
  });
  return due;
}

Engine::Engine(ProtocolConfig cfg, std::vector<int> agent_ids, std::vector<std::string> goals,
               oracle::DecisionOracle& oracle, SimNet net, EventSink sink)
    : cfg_(cfg),
      ids_(std::move(agent_ids)),
      goals_(std::move(goals)),
      oracle_(oracle),
      net_(std::move(net)),
      sink_(std::move(sink)) {
  std::sort(ids_.begin(), ids_.end());
  if (ids_.empty()) throw std::invalid_argument("protocol engine needs at least one agent");
  for (int id : ids_) {
    AgentProto a;
    a.id = id;
    a.self_summary.id = id;
    agents_[id] = a;
  }
}

void Engine::emit(const ProtoEvent& e) {
  if (sink_) sink_(e);
}

int Engine::current_leader_id() const {
  for (const auto& [id, a] : agents_)
    if (a.alive && a.is_leader) return id;
  return -1;
}

int Engine::leader_count() const {
  int n = 0;
  for (const auto& [id, a] : agents_)
    if (a.alive && a.is_leader) ++n;
  return n;
}

void Engine::send(Message m, long now) {
  m.sent_tick = now;
  ++msg_counts_[to_string(m.kind)];
  if (m.kind == MsgKind::LeaderResponse && m.grant) ++grants_in_flight_;
  net_.send(std::move(m), now);
}

void Engine::bootstrap(const std::map<int, std::vector<RoomInfo>>& initial_rooms, long tick) {
  AgentProto& leader = agents_.at(ids_.front());
  Token token;
  token.state.version = 1;
  for (int id : ids_) {
    AgentSummary s;
    s.id = id;
    token.state.agents.push_back(s);
    auto it = initial_rooms.find(id);
    if (it != initial_rooms.end())
      for (const auto& r : it->second) token.state.upsert_room(r);
  }
  for (const auto& g : goals_) token.progress.set(g, TargetStatus::Unclaimed);
  token.lineage = {leader.id};
  leader.token = token;
  leader.known = token.stamp();
  leader.known_lineage = token.lineage;
  for (auto& [id, a] : agents_) {
    a.believed_leader = leader.id;
    a.belief = {0, 0};
    a.known_lineage = {leader.id};
  }
  // The temporary leader is the lowest id by rule, so it is common knowledge
  // and needs no announcement; beliefs were seeded above.
  became_leader(leader, tick, "bootstrap");
}

void Engine::became_leader(AgentProto& me, long t, const std::string& how) {
  me.is_leader = true;
  me.believed_leader = me.id;
  me.belief = me.token->stamp();
  me.known = me.token->stamp();
  me.known_lineage = me.token->lineage;
  me.recovering = false;
  me.probe_outstanding = false;
  recovery_pending_ = false;
  emit({t, "leader_on", me.id, -1, me.token->version(), how});
  if (on_token) on_token(me.id, *me.token);
  dispatch_held(me, t);
}

void Engine::update_self(int agent_id, const AgentSummary& summary,
                         const std::vector<RoomInfo>& rooms, const std::set<std::string>& found) {
  AgentProto& me = agents_.at(agent_id);
  me.self_summary = summary;
  me.self_summary.id = agent_id;
  me.contributed_rooms = rooms;
  me.found_by_self = found;
}

void Engine::merge_self_into(AgentProto& me, Token& token) {
  AgentSummary& entry = token.state.agent_entry(me.id);
  bool had = entry.has_assignment;
  oracle::RoomRef assigned = entry.assigned;
  entry = me.self_summary;
  entry.has_assignment = had;
  entry.assigned = assigned;
  for (const auto& r : me.contributed_rooms) {
    const RoomInfo* existing = token.state.find_room(r.room);
    if (!existing || existing->explored_pct <= r.explored_pct) {
      RoomInfo shared = r;
      shared.distance = -1;  // distances are viewer-relative
      token.state.upsert_room(shared);
    }
  }
  for (const auto& cls : me.found_by_self) token.progress.set(cls, TargetStatus::Found);
  token.state.version += 1;
}

void Engine::scrub_dead(Token& token, const std::set<int>& dead) {
  for (int id : dead) {
    bool known = false;
    for (const auto& a : token.state.agents)
      if (a.id == id) known = true;
    if (!known) continue;
    AgentSummary& entry = token.state.agent_entry(id);
    entry.alive = false;
    entry.has_assignment = false;
    for (auto& tgt : token.progress.targets)
      if (tgt.status == TargetStatus::Locked && tgt.locked_by == id) {
        tgt.status = TargetStatus::Unclaimed;
        tgt.locked_by = -1;
      }
  }
}

oracle::PromptContext Engine::leader_context(const AgentProto& leader,
                                             const Proposal& proposal) const {
  oracle::PromptContext ctx;
  ctx.agent_id = proposal.agent_id;
  ctx.proposal = proposal;
  ctx.global_state = leader.token->state;
  ctx.global_progress = leader.token->progress;
  ctx.goals = goals_;
  return ctx;
}

bool Engine::request_help(int agent_id, const Proposal& proposal, long tick) {
  AgentProto& me = agents_.at(agent_id);
  if (!me.alive || me.awaiting) return false;
  emit({tick, "trigger", agent_id, -1, -1, oracle::to_string(proposal.action)});
  me.history.push_back("[t" + std::to_string(tick) + "] asked for coordination toward " +
                       oracle::to_string(proposal.action));
  long request_id = ++me.request_seq;
  if (me.is_leader) {
    serve_request(me, proposal, request_id, tick);
    return true;
  }
  me.awaiting = true;
  me.pending = proposal;
  me.pending_request_id = request_id;
  me.request_tick = tick;
  if (me.believed_leader < 0 || me.believed_dead.count(me.believed_leader)) {
    start_recovery(me, me.believed_leader, tick);
    return true;
  }
  me.request_dest = me.believed_leader;
  Message m;
  m.kind = MsgKind::HelpRequest;
  m.sender = agent_id;
  m.receiver = me.believed_leader;
  m.proposal = proposal;
  m.request_id = request_id;
  m.routing = me.belief;
  send(m, tick);
  return true;
}

void Engine::serve_request(AgentProto& leader, const Proposal& proposal, long request_id,
                           long t) {
  auto served = leader.token->served_requests.find(proposal.agent_id);
  if (served != leader.token->served_requests.end() && served->second >= request_id) {
    // A re-sent or forwarded copy of a request this token already answered.
    emit({t, "duplicate_request", leader.id, proposal.agent_id, request_id, ""});
    return;
  }
  leader.token->served_requests[proposal.agent_id] = request_id;
  merge_self_into(leader, *leader.token);
  oracle::PromptContext ctx = leader_context(leader, proposal);
  oracle::CoordinationResult result = oracle_.coordinate(ctx);

  Token& token = *leader.token;
  for (const auto& d : result.directives) {
    AgentSummary& entry = token.state.agent_entry(d.agent);
    entry.has_assignment = true;
    entry.assigned = d.action;
    for (auto& tgt : token.progress.targets)
      if (tgt.status == TargetStatus::Locked && tgt.locked_by == d.agent) {
        tgt.status = TargetStatus::Unclaimed;
        tgt.locked_by = -1;
      }
    for (const auto& l : d.locks) token.progress.set(l, TargetStatus::Locked, d.agent);
  }
  token.state.version += 1;

  const AgentDirective& reply = result.directives.front();
  for (size_t i = 1; i < result.directives.size(); ++i) {
    const AgentDirective& d = result.directives[i];
    emit({t, "interrupt_issued", leader.id, d.agent, token.version(),
          oracle::to_string(d.action)});
    if (d.agent == leader.id) continue;
    Message m;
    m.kind = MsgKind::Interrupt;
    m.sender = leader.id;
    m.receiver = d.agent;
    m.directive = d;
    m.stamp = token.stamp();  // lets the member refresh its leader belief
    send(m, t);
  }

  if (proposal.agent_id == leader.id) {
    emit({t, "self_service", leader.id, -1, token.version(), ""});
    leader.known = token.stamp();
    leader.belief = token.stamp();
    if (on_token) on_token(leader.id, token);
    if (on_directive) on_directive(leader.id, reply);
    return;
  }

  // Leadership transfers with the answer: append the requester to the lineage
  // and resign the moment the grant leaves.
  if (token.lineage.empty() || token.lineage.back() != proposal.agent_id)
    token.lineage.push_back(proposal.agent_id);
  Message m;
  m.kind = MsgKind::LeaderResponse;
  m.sender = leader.id;
  m.receiver = proposal.agent_id;
  m.directive = reply;
  m.token = token;
  m.grant = true;
  m.response_id = next_response_id_++;
  send(m, t);
  emit({t, "grant_sent", leader.id, proposal.agent_id, token.version(), ""});
  leader.is_leader = false;
  leader.believed_leader = proposal.agent_id;
  leader.belief = token.stamp();
  leader.known = token.stamp();
  leader.known_lineage = token.lineage;
  emit({t, "leader_off", leader.id, proposal.agent_id, token.version(), "grant sent"});
}

void Engine::dispatch_held(AgentProto& me, long t) {
  std::deque<Message> keep;
  while (!me.held_requests.empty()) {
    Message m = me.held_requests.front();
    me.held_requests.pop_front();
    if (me.is_leader) {
      serve_request(me, m.proposal, m.request_id, t);
      if (!me.is_leader) {
        // Leadership just moved on; everything still held re-routes there.
        continue;
      }
    } else if (me.belief > m.routing && me.believed_leader >= 0 &&
               !me.believed_dead.count(me.believed_leader)) {
      Message fwd = m;
      fwd.sender = me.id;
      fwd.receiver = me.believed_leader;
      fwd.routing = me.belief;
      send(fwd, t);
      Message correct;
      correct.kind = MsgKind::LeaderIs;
      correct.sender = me.id;
      correct.receiver = m.proposal.agent_id;
      correct.leader_id = me.believed_leader;
      correct.stamp = me.belief;
      send(correct, t);
      emit({t, "forward", me.id, me.believed_leader, me.belief.version, ""});
    } else {
      keep.push_back(m);
    }
  }
  me.held_requests = std::move(keep);
}

void Engine::handle_help_request(AgentProto& me, const Message& m, long t) {
  if (me.is_leader) {
    serve_request(me, m.proposal, m.request_id, t);
    return;
  }
  me.held_requests.push_back(m);
  dispatch_held(me, t);
  if (!me.held_requests.empty())
    emit({t, "request_held", me.id, m.proposal.agent_id, m.routing.version, ""});
}

void Engine::handle_leader_response(AgentProto& me, const Message& m, long t) {
  if (m.grant) --grants_in_flight_;
  if (me.applied_responses.count(m.response_id)) {
    emit({t, "duplicate_response", me.id, m.sender, m.response_id, ""});
    return;
  }
  if (m.token.stamp() < me.known) {
    // A deeper snapshot exists somewhere; refuse the stale grant and go find
    // the real leader.
    emit({t, "stale_snapshot", me.id, m.sender, m.token.version(), ""});
    if (me.awaiting && !me.recovering) start_recovery(me, m.sender, t);
    return;
  }
  me.applied_responses.insert(m.response_id);
  me.token = m.token;
  merge_self_into(me, *me.token);
  me.awaiting = false;
  me.history.push_back("[t" + std::to_string(t) + "] leader " + std::to_string(m.sender) +
                       (m.directive.support ? " supported " : " redirected to ") +
                       oracle::to_string(m.directive.action));
  became_leader(me, t, "inherited");
  emit({t, "grant_applied", me.id, m.sender, me.token->version(), ""});
  if (on_directive) on_directive(me.id, m.directive);
}

void Engine::handle_who_is_leader(AgentProto& me, const Message& m, long t) {
  auto reply = [&](int leader_id, Stamp stamp) {
    Message r;
    r.kind = MsgKind::LeaderIs;
    r.sender = me.id;
    r.receiver = m.sender;
    r.leader_id = leader_id;
    r.stamp = stamp;
    send(r, t);
  };
  if (me.is_leader) {
    reply(me.id, me.token->stamp());
    return;
  }
  bool belief_useful = me.believed_leader >= 0 && me.believed_leader != me.id &&
                       me.believed_leader != m.suspect_id &&
                       !me.believed_dead.count(me.believed_leader);
  if (belief_useful) {
    reply(me.believed_leader, me.belief);
    return;
  }
  if (me.token.has_value()) {
    // This agent is the most recent reachable holder. Ping the suspect once
    // before resuming leadership so a merely-slow leader is never displaced.
    int suspect = m.suspect_id >= 0 && m.suspect_id != me.id ? m.suspect_id
                                                             : me.believed_leader;
    if (suspect < 0 || suspect == me.id || me.believed_dead.count(suspect)) {
      if (suspect >= 0 && suspect != me.id) me.believed_dead.insert(suspect);
      self_promote(me, t, "lineage query from " + std::to_string(m.sender));
      return;
    }
    if (me.verifying_promotion) {
      if (std::find(me.promotion_askers.begin(), me.promotion_askers.end(), m.sender) ==
          me.promotion_askers.end())
        me.promotion_askers.push_back(m.sender);
      return;
    }
    me.verifying_promotion = true;
    me.verify_suspect = suspect;
    me.verify_sent_tick = t;
    me.promotion_askers = {m.sender};
    Message ping;
    ping.kind = MsgKind::WhoIsLeader;
    ping.sender = me.id;
    ping.receiver = suspect;
    ping.suspect_id = suspect;
    send(ping, t);
    emit({t, "promotion_verify", me.id, suspect, -1, ""});
    return;
  }
  reply(-1, me.known);
  if (!me.recovering && m.suspect_id >= 0 &&
      (me.believed_leader == m.suspect_id || me.believed_leader < 0)) {
    // Our own leader belief just got discredited; go find out too.
    start_recovery(me, m.suspect_id, t);
  }
}

void Engine::self_promote(AgentProto& me, long t, const std::string& reason) {
  me.token->era = std::max(me.token->era, me.known.era) + 1;
  scrub_dead(*me.token, me.believed_dead);
  if (me.token->lineage.empty() || me.token->lineage.back() != me.id)
    me.token->lineage.push_back(me.id);
  merge_self_into(me, *me.token);
  emit({t, "self_promote", me.id, -1, me.token->version(), reason});
  became_leader(me, t, "recovered");
  for (int id : ids_) {
    if (id == me.id || me.believed_dead.count(id)) continue;
    Message r;
    r.kind = MsgKind::LeaderIs;
    r.sender = me.id;
    r.receiver = id;
    r.leader_id = me.id;
    r.stamp = me.token->stamp();
    send(r, t);
  }
  if (me.awaiting) {
    me.awaiting = false;
    serve_request(me, me.pending, me.pending_request_id, t);
  }
}

void Engine::handle_leader_is(AgentProto& me, const Message& m, long t) {
  if (m.sender == me.probe_target) me.probe_outstanding = false;
  if (me.verifying_promotion && m.sender == me.verify_suspect) {
    // The suspect (or its successor chain) is alive after all; stand down and
    // pass the fresher pointer to whoever asked us.
    me.verifying_promotion = false;
    emit({t, "promotion_cancelled", me.id, m.sender, m.stamp.version, ""});
    int learned = m.leader_id >= 0 ? m.leader_id : m.sender;
    for (int asker : me.promotion_askers) {
      if (asker == me.id) continue;
      Message r;
      r.kind = MsgKind::LeaderIs;
      r.sender = me.id;
      r.receiver = asker;
      r.leader_id = learned;
      r.stamp = m.stamp;
      send(r, t);
    }
    me.promotion_askers.clear();
  }
  if (m.leader_id < 0) {
    if (me.recovering) continue_recovery(me, t);
    return;
  }
  if (me.believed_dead.count(m.leader_id)) {
    // The advocate believes in a leader we know crashed: confront it so the
    // lineage holder behind it can resume.
    if (me.recovering && m.sender != me.id) {
      Message probe;
      probe.kind = MsgKind::WhoIsLeader;
      probe.sender = me.id;
      probe.receiver = m.sender;
      probe.suspect_id = m.leader_id;
      send(probe, t);
      me.probe_outstanding = true;
      me.probe_target = m.sender;
      me.probe_sent_tick = t;
    }
    return;
  }
  if (me.is_leader && m.leader_id != me.id) {
    Stamp mine = me.token->stamp();
    bool defer = m.stamp > mine || (m.stamp == mine && m.leader_id < me.id);
    if (defer) {
      me.is_leader = false;
      emit({t, "leader_off", me.id, m.leader_id, m.stamp.version, "deferred"});
    } else {
      Message r;
      r.kind = MsgKind::LeaderIs;
      r.sender = me.id;
      r.receiver = m.sender;
      r.leader_id = me.id;
      r.stamp = mine;
      send(r, t);
      return;
    }
  }
  if (m.leader_id == me.id && !me.is_leader) {
    // A stale pointer back at us; our own recovery (or a lineage query with a
    // verified suspect) decides whether we actually resume.
    if (me.recovering) continue_recovery(me, t);
    return;
  }
  if (m.stamp > me.belief) {
    me.believed_leader = m.leader_id;
    me.belief = m.stamp;
    me.known = std::max(me.known, m.stamp);
    // A live leader under a newer stamp also settles any pending promotion.
    if (me.verifying_promotion && m.leader_id != me.verify_suspect) {
      me.verifying_promotion = false;
      me.promotion_askers.clear();
      emit({t, "promotion_cancelled", me.id, m.leader_id, m.stamp.version, "newer leader"});
    }
    dispatch_held(me, t);
  }
  if (me.recovering) {
    me.recovering = false;
    me.probe_outstanding = false;
    emit({t, "recovery_resolved", me.id, m.leader_id, m.stamp.version, ""});
    if (me.awaiting) {
      // The original copy may have died with the old leader; re-send the same
      // request id so an already-served copy is recognized and dropped.
      me.request_dest = m.leader_id;
      me.request_tick = t;
      Message req;
      req.kind = MsgKind::HelpRequest;
      req.sender = me.id;
      req.receiver = m.leader_id;
      req.proposal = me.pending;
      req.request_id = me.pending_request_id;
      req.routing = me.belief;
      send(req, t);
    }
  } else if (me.awaiting && me.request_dest != m.leader_id) {
    // The request is being relayed toward the real leader; just track it.
    me.request_dest = m.leader_id;
    me.request_tick = t;
  }
}

void Engine::start_recovery(AgentProto& me, int suspect, long t) {
  me.recovering = true;
  me.probe_outstanding = false;
  if (suspect >= 0 && suspect != me.id) me.believed_dead.insert(suspect);
  emit({t, "recovery_start", me.id, suspect, -1, "leader unresponsive"});
  me.probe_plan.clear();
  me.probe_next = 0;
  // Lineage first, most recent holder first, then everyone else by id.
  for (auto it = me.known_lineage.rbegin(); it != me.known_lineage.rend(); ++it)
    if (*it != me.id && !me.believed_dead.count(*it) &&
        std::find(me.probe_plan.begin(), me.probe_plan.end(), *it) == me.probe_plan.end())
      me.probe_plan.push_back(*it);
  for (int id : ids_)
    if (id != me.id && !me.believed_dead.count(id) &&
        std::find(me.probe_plan.begin(), me.probe_plan.end(), id) == me.probe_plan.end())
      me.probe_plan.push_back(id);
  continue_recovery(me, t);
}

void Engine::continue_recovery(AgentProto& me, long t) {
  while (me.probe_next < me.probe_plan.size()) {
    int target = me.probe_plan[me.probe_next++];
    if (me.believed_dead.count(target)) continue;
    Message probe;
    probe.kind = MsgKind::WhoIsLeader;
    probe.sender = me.id;
    probe.receiver = target;
    probe.suspect_id = me.request_dest;
    send(probe, t);
    emit({t, "probe", me.id, target, -1, ""});
    me.probe_outstanding = true;
    me.probe_target = target;
    me.probe_sent_tick = t;
    return;
  }
  // Plan exhausted: the lowest believed-alive id claims leadership.
  int lowest = me.id;
  for (int id : ids_)
    if (!me.believed_dead.count(id)) {
      lowest = std::min(lowest, id);
      break;  // ids_ sorted
    }
  if (lowest == me.id) {
    if (!me.token.has_value()) {
      Token token;
      for (int id : ids_) {
        AgentSummary s;
        s.id = id;
        s.alive = !me.believed_dead.count(id);
        token.state.agents.push_back(s);
      }
      for (const auto& g : goals_) token.progress.set(g, TargetStatus::Unclaimed);
      token.lineage = me.known_lineage;
      token.state.version = me.known.version;
      token.era = me.known.era;
      me.token = token;
    }
    me.token->state.version += 1;
    emit({t, "self_elect", me.id, -1, me.token->version(), "lineage exhausted"});
    self_promote(me, t, "self-elected");
  } else {
    // Someone lower is alive and will claim; retry the whole cycle after a
    // timeout so progress is guaranteed either way.
    me.probe_outstanding = true;
    me.probe_target = -1;
    me.probe_sent_tick = t;
    me.probe_plan.clear();
    me.probe_next = 0;
    for (int id : ids_)
      if (id != me.id && !me.believed_dead.count(id)) me.probe_plan.push_back(id);
  }
}

void Engine::crash(int agent_id, long tick) {
  AgentProto& me = agents_.at(agent_id);
  if (!me.alive) return;
  me.alive = false;
  emit({tick, "crash", agent_id, -1, -1, me.is_leader ? "leader" : "member"});
  if (me.is_leader) {
    me.is_leader = false;
    recovery_pending_ = true;
  }
}

void Engine::handle(const Message& m, long t) {
  auto it = agents_.find(m.receiver);
  if (it == agents_.end() || !it->second.alive) {
    emit({t, "dropped_dead_receiver", m.sender, m.receiver, -1, to_string(m.kind)});
    if (m.kind == MsgKind::LeaderResponse && m.grant) {
      --grants_in_flight_;
      recovery_pending_ = true;  // the token died in flight
      emit({t, "grant_dropped", m.sender, m.receiver, m.token.version(), ""});
    }
    return;
  }
  AgentProto& me = it->second;
  switch (m.kind) {
    case MsgKind::HelpRequest: handle_help_request(me, m, t); break;
    case MsgKind::LeaderResponse: handle_leader_response(me, m, t); break;
    case MsgKind::Interrupt:
      if (m.stamp > me.belief) {
        me.believed_leader = m.sender;
        me.belief = m.stamp;
        me.known = std::max(me.known, m.stamp);
      }
      me.history.push_back("[t" + std::to_string(t) + "] interrupted toward " +
                           oracle::to_string(m.directive.action));
      emit({t, "interrupt_received", me.id, m.sender, -1, oracle::to_string(m.directive.action)});
      if (on_directive) on_directive(me.id, m.directive);
      break;
    case MsgKind::WhoIsLeader: handle_who_is_leader(me, m, t); break;
    case MsgKind::LeaderIs: handle_leader_is(me, m, t); break;
    case MsgKind::Heartbeat: break;
  }
}

void Engine::tick(long t) {
  int safety = 1000 + 100 * (int)ids_.size() * (int)ids_.size();
  while (true) {
    std::vector<Message> due = net_.deliver(t);
    if (due.empty()) break;
    for (const auto& m : due) {
      emit({t, "deliver", m.sender, m.receiver, m.seq, to_string(m.kind)});
      handle(m, t);
    }
    if (--safety <= 0) throw std::logic_error("protocol message storm");
  }
  for (auto& [id, me] : agents_) {
    if (!me.alive) continue;
    if (me.awaiting && !me.recovering && t - me.request_tick >= cfg_.response_timeout)
      start_recovery(me, me.request_dest, t);
    else if (me.recovering && me.probe_outstanding && me.probe_target >= 0 &&
             t - me.probe_sent_tick >= cfg_.probe_timeout) {
      me.believed_dead.insert(me.probe_target);
      emit({t, "probe_timeout", me.id, me.probe_target, -1, ""});
      me.probe_outstanding = false;
      continue_recovery(me, t);
    } else if (me.recovering && me.probe_outstanding && me.probe_target < 0 &&
               t - me.probe_sent_tick >= cfg_.probe_timeout) {
      me.probe_outstanding = false;
      continue_recovery(me, t);
    }
    if (me.verifying_promotion && t - me.verify_sent_tick >= (cfg_.probe_timeout + 1) / 2) {
      me.verifying_promotion = false;
      me.promotion_askers.clear();
      me.believed_dead.insert(me.verify_suspect);
      emit({t, "promotion_verified", me.id, me.verify_suspect, -1, "suspect silent"});
      self_promote(me, t, "verified crash of " + std::to_string(me.verify_suspect));
    }
    if (cfg_.heartbeat_period > 0 && me.is_leader && t % cfg_.heartbeat_period == 0) {
      for (int other : ids_)
        if (other != me.id && !me.believed_dead.count(other)) {
          Message hb;
          hb.kind = MsgKind::Heartbeat;
          hb.sender = me.id;
          hb.receiver = other;
          send(hb, t);
        }
    }
  }
  bool q = net_.quiescent();
  if (q && !was_quiescent_) emit_quiescent_snapshot(t);
  was_quiescent_ = q;
}

void InvariantChecker::on_event(const ProtoEvent& e) {
  auto violation = [&](const std::string& what) {
    violations_.push_back("[t" + std::to_string(e.tick) + "] " + what);
  };
  if (e.type == "leader_on") {
    leaders_.insert(e.a);
    recovery_pending_ = false;
    bootstrapped_ = true;
    if (leader_sequence_.empty() || leader_sequence_.back() != e.a)
      leader_sequence_.push_back(e.a);
    if (leaders_.size() > 1) {
      std::string who;
      for (int id : leaders_) who += std::to_string(id) + " ";
      violation("two simultaneous leaders: " + who);
    }
  } else if (e.type == "leader_off") {
    leaders_.erase(e.a);
  } else if (e.type == "grant_sent") {
    ++grants_in_flight_;
  } else if (e.type == "grant_applied") {
    --grants_in_flight_;
  } else if (e.type == "grant_dropped" || e.type == "stale_snapshot") {
    --grants_in_flight_;
    recovery_pending_ = true;
  } else if (e.type == "crash") {
    crashed_.insert(e.a);
    if (leaders_.count(e.a)) {
      leaders_.erase(e.a);
      recovery_pending_ = true;
    }
  } else if (e.type == "recovery_start") {
    ++recoveries_;
  } else if (e.type == "probe") {
    if (std::find(leader_sequence_.begin(), leader_sequence_.end(), e.b) !=
        leader_sequence_.end())
      lineage_contacted_ = true;
  } else if (e.type == "quiescent") {
    ++quiescent_points_;
    nlohmann::json snap = nlohmann::json::parse(e.detail);
    std::set<std::string> rooms;
    for (const auto& a : snap.at("assignments"))
      if (!rooms.insert(a.at("room").dump()).second)
        violation("room " + a.at("room").dump() + " assigned to two agents");
    std::set<std::string> locks;
    for (const auto& l : snap.at("locks"))
      if (!locks.insert(l.at("target").get<std::string>()).second)
        violation("target " + l.at("target").get<std::string>() + " locked twice");
  }
  if (bootstrapped_ && leaders_.empty() && grants_in_flight_ <= 0 && !recovery_pending_ &&
      e.type != "quiescent" && e.type != "deliver" && e.type != "trigger")
    violation("no leader, no grant in flight, no recovery pending (after " + e.type + ")");
}

void Engine::emit_quiescent_snapshot(long t) {
  const AgentProto* leader = nullptr;
  for (const auto& [id, a] : agents_)
    if (a.alive && a.is_leader) leader = &a;
  if (!leader || !leader->token.has_value()) return;
  nlohmann::json snap;
  snap["assignments"] = nlohmann::json::array();
  for (const auto& a : leader->token->state.agents)
    if (a.alive && a.has_assignment && !a.assigned.frontier)
      snap["assignments"].push_back({{"agent", a.id}, {"room", a.assigned}});
  snap["locks"] = nlohmann::json::array();
  for (const auto& tgt : leader->token->progress.targets)
    if (tgt.status == TargetStatus::Locked)
      snap["locks"].push_back({{"target", tgt.cls}, {"agent", tgt.locked_by}});
  emit({t, "quiescent", leader->id, -1, leader->token->version(), snap.dump()});
}

}  // namespace teamnav::protocol
