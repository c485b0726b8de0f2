#pragma once

// JSON serializers for digesting, tracing and the python surface. Kept in one
// place so every digest sees the same canonical encoding.

#include <json.hpp>

#include "teamnav/oracle.hpp"
#include "teamnav/protocol.hpp"
#include "teamnav/world.hpp"

namespace teamnav {
inline void to_json(nlohmann::json& j, const Cell& c) { j = nlohmann::json{c.x, c.y}; }
}  // namespace teamnav

namespace teamnav::oracle {

inline void to_json(nlohmann::json& j, const RoomRef& r) {
  j = r.frontier ? nlohmann::json("frontier") : nlohmann::json{r.anchor.x, r.anchor.y};
}

inline void to_json(nlohmann::json& j, const TargetState& t) {
  j = {{"cls", t.cls}, {"status", (int)t.status}};
  if (t.status == TargetStatus::Locked) j["locked_by"] = t.locked_by;
}

inline void to_json(nlohmann::json& j, const ProgressView& p) { j = {{"targets", p.targets}}; }

inline void to_json(nlohmann::json& j, const RoomInfo& r) {
  j = {{"room", r.room},       {"label", r.label},
       {"objects", r.objects}, {"likely", r.likely_targets},
       {"explored", r.explored_pct}, {"centroid", r.centroid},
       {"dist", r.distance}};
}

inline void to_json(nlohmann::json& j, const AgentSummary& a) {
  j = {{"id", a.id}, {"pose", a.pose}, {"heading", a.heading}, {"alive", a.alive}};
  if (a.has_assignment) j["assigned"] = a.assigned;
}

inline void to_json(nlohmann::json& j, const StateView& s) {
  j = {{"version", s.version}, {"agents", s.agents}, {"rooms", s.rooms}};
}

inline void to_json(nlohmann::json& j, const Proposal& p) {
  j = {{"agent", p.agent_id}, {"locks", p.locks}, {"action", p.action}, {"thoughts", p.thoughts}};
}

inline void to_json(nlohmann::json& j, const AgentDirective& d) {
  j = {{"agent", d.agent},
       {"action", d.action},
       {"interrupt", d.is_interrupt},
       {"locks", d.locks},
       {"thoughts", d.thoughts}};
  if (!d.is_interrupt) j["support"] = d.support;
}

inline void to_json(nlohmann::json& j, const CoordinationResult& c) {
  j = {{"directives", c.directives}};
}

}  // namespace teamnav::oracle

namespace teamnav::protocol {

inline void to_json(nlohmann::json& j, const Token& t) {
  j = {{"state", t.state}, {"progress", t.progress}, {"lineage", t.lineage}, {"era", t.era}};
  for (const auto& [agent, rid] : t.served_requests)
    j["served"][std::to_string(agent)] = rid;
}

inline void to_json(nlohmann::json& j, const Message& m) {
  j = {{"kind", to_string(m.kind)},
       {"sender", m.sender},
       {"receiver", m.receiver},
       {"sent_tick", m.sent_tick},
       {"seq", m.seq}};
  switch (m.kind) {
    case MsgKind::HelpRequest:
      j["proposal"] = m.proposal;
      j["request_id"] = m.request_id;
      j["routing"] = {m.routing.era, m.routing.version};
      break;
    case MsgKind::LeaderResponse:
      j["directive"] = m.directive;
      j["token"] = m.token;
      j["grant"] = m.grant;
      j["response_id"] = m.response_id;
      break;
    case MsgKind::Interrupt:
      j["directive"] = m.directive;
      j["stamp"] = {m.stamp.era, m.stamp.version};
      break;
    case MsgKind::WhoIsLeader:
      j["suspect"] = m.suspect_id;
      break;
    case MsgKind::LeaderIs:
      j["leader"] = m.leader_id;
      j["stamp"] = {m.stamp.era, m.stamp.version};
      break;
    case MsgKind::Heartbeat:
      break;
  }
}

inline void to_json(nlohmann::json& j, const ProtoEvent& e) {
  j = {{"tick", e.tick}, {"type", e.type}};
  if (e.a != -1) j["a"] = e.a;
  if (e.b != -1) j["b"] = e.b;
  if (e.version != -1) j["version"] = e.version;
  if (!e.detail.empty()) j["detail"] = e.detail;
}

}  // namespace teamnav::protocol

namespace teamnav::world {

inline void to_json(nlohmann::json& j, const AgentPose& p) {
  j = {{"cell", p.cell}, {"heading", p.heading}, {"alive", p.alive}};
}

inline void to_json(nlohmann::json& j, const SubtaskOutcome& o) {
  j = {{"agent", o.agent_id},
       {"class", o.declared_class},
       {"success", o.result == SubtaskResult::Success},
       {"tick", o.tick}};
}

inline void to_json(nlohmann::json& j, const Event& e) {
  j = {{"tick", e.tick}, {"agent", e.agent_id}, {"kind", (int)e.kind}, {"detail", e.detail}};
}

}  // namespace teamnav::world
