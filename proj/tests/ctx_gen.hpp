#pragma once

// Randomized PromptContext generator shared by the unit and acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "teamnav/oracle.hpp"

namespace teamnav::testgen {

inline oracle::PromptContext random_context(std::mt19937_64& rng) {
  using namespace oracle;
  static const std::vector<std::string> kClasses = {"tv",   "toilet", "cup",  "bed",
                                                    "sofa", "plant",  "desk", "towel"};
  static const std::vector<std::string> kLabels = {"bedroom", "bathroom", "kitchen",
                                                   "living_room", "unknown room", ""};
  auto pick_int = [&](int lo, int hi) { return lo + (int)(rng() % (hi - lo + 1)); };

  PromptContext ctx;
  ctx.agent_id = pick_int(0, 7);

  int n_goals = pick_int(1, 4);
  for (int i = 0; i < n_goals; ++i) {
    const std::string& cls = kClasses[i];
    ctx.goals.push_back(cls);
    TargetState t;
    t.cls = cls;
    switch (rng() % 3) {
      case 0: t.status = TargetStatus::Unclaimed; break;
      case 1:
        t.status = TargetStatus::Locked;
        t.locked_by = pick_int(0, 7);
        break;
      default: t.status = TargetStatus::Found; break;
    }
    ctx.progress.targets.push_back(t);
  }
  std::sort(ctx.progress.targets.begin(), ctx.progress.targets.end(),
            [](const TargetState& a, const TargetState& b) { return a.cls < b.cls; });
  ctx.global_progress = ctx.progress;

  auto random_state = [&](int n_agents, int n_rooms) {
    StateView s;
    s.version = pick_int(0, 99);
    for (int i = 0; i < n_agents; ++i) {
      AgentSummary a;
      a.id = i;
      a.pose = {pick_int(0, 24), pick_int(0, 16)};
      a.heading = pick_int(0, 11);
      a.alive = rng() % 5 != 0;
      if (rng() % 2) {
        a.has_assignment = true;
        if (rng() % 4 == 0)
          a.assigned = frontier_room();
        else
          a.assigned = {{pick_int(0, 20), pick_int(0, 12)}, false};
      }
      s.agents.push_back(a);
    }
    std::set<Cell> used;
    for (int i = 0; i < n_rooms; ++i) {
      RoomInfo r;
      do {
        r.room = {{pick_int(0, 20), pick_int(0, 12)}, false};
      } while (!used.insert(r.room.anchor).second);
      r.label = kLabels[rng() % kLabels.size()];
      int n_obj = pick_int(0, 3);
      std::set<std::string> objs;
      for (int k = 0; k < n_obj; ++k) objs.insert(kClasses[rng() % kClasses.size()]);
      r.objects.assign(objs.begin(), objs.end());
      for (const auto& g : ctx.goals)
        if (rng() % 2) r.likely_targets.push_back(g);
      r.explored_pct = pick_int(0, 100);
      r.centroid = {pick_int(0, 24), pick_int(0, 16)};
      r.distance = rng() % 3 ? pick_int(0, 60) : -1;
      s.rooms.push_back(r);
    }
    std::sort(s.rooms.begin(), s.rooms.end(),
              [](const RoomInfo& a, const RoomInfo& b) { return a.room < b.room; });
    return s;
  };

  ctx.state = random_state(1, pick_int(1, 4));
  ctx.state.agents[0].id = ctx.agent_id;
  ctx.global_state = random_state(pick_int(1, 5), pick_int(1, 5));

  int n_hist = pick_int(0, 3);
  for (int i = 0; i < n_hist; ++i)
    ctx.history.push_back("[t" + std::to_string(pick_int(0, 400)) + "] exchange " +
                          std::to_string(i) + " about " + kClasses[rng() % kClasses.size()]);

  for (const auto& r : ctx.state.rooms)
    if (rng() % 2) ctx.options.push_back(r.room);
  if (ctx.options.empty() || rng() % 3 == 0) ctx.options.push_back(frontier_room());

  ctx.proposal.agent_id = ctx.agent_id;
  ctx.proposal.action = ctx.options[rng() % ctx.options.size()];
  for (const auto& t : ctx.progress.targets)
    if (t.status != TargetStatus::Found && rng() % 2) ctx.proposal.locks.push_back(t.cls);
  ctx.proposal.thoughts = "searching for " + kClasses[rng() % kClasses.size()];
  return ctx;
}

}  // namespace teamnav::testgen
