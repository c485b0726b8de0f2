#include "teamnav/oracle.hpp"

#include <algorithm>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace teamnav::oracle {

using nlohmann::json;

std::string to_string(const RoomRef& r) {
  if (r.frontier) return "frontier";
  return "room (" + std::to_string(r.anchor.x) + "," + std::to_string(r.anchor.y) + ")";
}

namespace {

RoomRef parse_room_ref(const std::string& s) {
  if (s == "frontier") return frontier_room();
  int x = 0, y = 0;
  if (std::sscanf(s.c_str(), "room (%d,%d)", &x, &y) != 2)
    throw PromptError("bad room reference: '" + s + "'");
  return {{x, y}, false};
}

void require_line_safe(const std::string& field, const std::string& value) {
  if (value.find('\n') != std::string::npos || value.find('|') != std::string::npos)
    throw PromptError("field '" + field + "' must be a single line without '|'");
}

void require_token(const std::string& field, const std::string& value) {
  if (value.empty()) throw PromptError("field '" + field + "' is empty");
  for (char c : value)
    if (!(std::isalnum((unsigned char)c) || c == '_' || c == '-'))
      throw PromptError("field '" + field + "' must be an identifier, got '" + value + "'");
}

std::string bracket_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out + "]";
}

std::vector<std::string> parse_bracket_list(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw PromptError("bad bracket list: '" + s + "'");
  std::vector<std::string> out;
  std::string inner = s.substr(1, s.size() - 2);
  if (inner.empty()) return out;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string cell_str(const Cell& c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

Cell parse_cell(const std::string& s) {
  int x = 0, y = 0;
  if (std::sscanf(s.c_str(), "(%d,%d)", &x, &y) != 2)
    throw PromptError("bad cell: '" + s + "'");
  return {x, y};
}

}  // namespace

std::vector<std::string> ProgressView::remaining() const {
  std::vector<std::string> out;
  for (const auto& t : targets)
    if (t.status != TargetStatus::Found) out.push_back(t.cls);
  return out;
}

const TargetState* ProgressView::find(const std::string& cls) const {
  for (const auto& t : targets)
    if (t.cls == cls) return &t;
  return nullptr;
}

TargetState* ProgressView::find(const std::string& cls) {
  for (auto& t : targets)
    if (t.cls == cls) return &t;
  return nullptr;
}

void ProgressView::set(const std::string& cls, TargetStatus status, int locked_by) {
  if (TargetState* t = find(cls)) {
    if (t->status == TargetStatus::Found) return;  // found never reverts
    t->status = status;
    t->locked_by = status == TargetStatus::Locked ? locked_by : -1;
    return;
  }
  targets.push_back({cls, status, status == TargetStatus::Locked ? locked_by : -1});
  std::sort(targets.begin(), targets.end(),
            [](const TargetState& a, const TargetState& b) { return a.cls < b.cls; });
}

const RoomInfo* StateView::find_room(const RoomRef& r) const {
  for (const auto& info : rooms)
    if (info.room == r) return &info;
  return nullptr;
}

void StateView::upsert_room(const RoomInfo& info) {
  for (auto& r : rooms)
    if (r.room == info.room) {
      r = info;
      return;
    }
  rooms.push_back(info);
  std::sort(rooms.begin(), rooms.end(),
            [](const RoomInfo& a, const RoomInfo& b) { return a.room < b.room; });
}

AgentSummary& StateView::agent_entry(int id) {
  for (auto& a : agents)
    if (a.id == id) return a;
  AgentSummary s;
  s.id = id;
  agents.push_back(s);
  std::sort(agents.begin(), agents.end(),
            [](const AgentSummary& a, const AgentSummary& b) { return a.id < b.id; });
  return agent_entry(id);
}

namespace {

std::string status_str(const TargetState& t) {
  switch (t.status) {
    case TargetStatus::Unclaimed: return "unclaimed";
    case TargetStatus::Found: return "found";
    case TargetStatus::Locked: return "locked_by " + std::to_string(t.locked_by);
  }
  return "unclaimed";
}

void render_progress(std::ostream& out, const ProgressView& p) {
  if (p.targets.empty()) {
    out << "(none)\n";
    return;
  }
  for (const auto& t : p.targets) {
    require_token("target class", t.cls);
    out << "- " << t.cls << ": " << status_str(t) << "\n";
  }
}

void render_state(std::ostream& out, const StateView& s) {
  out << "version: " << s.version << "\n";
  for (const auto& a : s.agents) {
    out << "agent " << a.id << " | pose=" << cell_str(a.pose) << " | heading=" << a.heading
        << " | alive=" << (a.alive ? "yes" : "no") << " | assigned="
        << (a.has_assignment ? to_string(a.assigned) : std::string("none")) << "\n";
  }
  for (const auto& r : s.rooms) {
    for (const auto& o : r.objects) require_token("room object", o);
    for (const auto& t : r.likely_targets) require_token("likely target", t);
    require_line_safe("room label", r.label);
    out << to_string(r.room) << " | explored=" << r.explored_pct << "% | dist=" << r.distance
        << " | centroid=" << cell_str(r.centroid) << " | objects=" << bracket_list(r.objects)
        << " | likely=" << bracket_list(r.likely_targets) << " | label=" << r.label << "\n";
  }
}

void render_string_list(std::ostream& out, const std::vector<std::string>& items,
                        const char* field, bool token_only) {
  if (items.empty()) {
    out << "(none)\n";
    return;
  }
  for (const auto& s : items) {
    if (token_only)
      require_token(field, s);
    else
      require_line_safe(field, s);
    out << "- " << s << "\n";
  }
}

void render_proposal(std::ostream& out, const Proposal& p) {
  require_line_safe("proposal thoughts", p.thoughts);
  for (const auto& l : p.locks) require_token("proposal lock", l);
  out << "agent: " << p.agent_id << "\n";
  out << "action: " << to_string(p.action) << "\n";
  out << "locks: " << bracket_list(p.locks) << "\n";
  out << "thoughts: " << p.thoughts << "\n";
}

}  // namespace

Prompts render_prompts(const PromptContext& ctx) {
  Prompts out;
  {
    std::ostringstream m;
    m << "# MEMBER PROMPT\n";
    m << "## ID\n" << "agent: " << ctx.agent_id << "\n";
    m << "## PROGRESS\n";
    render_progress(m, ctx.progress);
    m << "## STATE\n";
    render_state(m, ctx.state);
    m << "## GOALS\n";
    render_string_list(m, ctx.goals, "goal", true);
    m << "## HISTORY\n";
    render_string_list(m, ctx.history, "history entry", false);
    m << "## OPTIONS\n";
    if (ctx.options.empty()) m << "(none)\n";
    for (const auto& o : ctx.options) m << "- " << to_string(o) << "\n";
    out.member = m.str();
  }
  {
    std::ostringstream l;
    l << "# LEADER PROMPT\n";
    l << "## PROPOSAL\n";
    render_proposal(l, ctx.proposal);
    l << "## GLOBAL PROGRESS\n";
    render_progress(l, ctx.global_progress);
    l << "## GLOBAL STATE\n";
    render_state(l, ctx.global_state);
    l << "## GOALS\n";
    render_string_list(l, ctx.goals, "goal", true);
    out.leader = l.str();
  }
  return out;
}

namespace {

struct LineReader {
  std::vector<std::string> lines;
  size_t pos = 0;

  explicit LineReader(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
  }
  bool done() const { return pos >= lines.size(); }
  const std::string& peek() const {
    if (done()) throw PromptError("unexpected end of prompt");
    return lines[pos];
  }
  std::string next() {
    std::string l = peek();
    ++pos;
    return l;
  }
  void expect(const std::string& exact) {
    if (next() != exact) throw PromptError("expected line '" + exact + "'");
  }
  bool at_section() const { return !done() && peek().rfind("## ", 0) == 0; }
};

std::string strip_prefix(const std::string& line, const std::string& prefix) {
  if (line.rfind(prefix, 0) != 0)
    throw PromptError("expected prefix '" + prefix + "' in line '" + line + "'");
  return line.substr(prefix.size());
}

std::vector<std::string> split_fields(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t sep = s.find(" | ", start);
    if (sep == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, sep - start));
    start = sep + 3;
  }
  return out;
}

TargetState parse_progress_line(const std::string& line) {
  std::string body = strip_prefix(line, "- ");
  size_t colon = body.find(": ");
  if (colon == std::string::npos) throw PromptError("bad progress line '" + line + "'");
  TargetState t;
  t.cls = body.substr(0, colon);
  std::string status = body.substr(colon + 2);
  if (status == "unclaimed") {
    t.status = TargetStatus::Unclaimed;
  } else if (status == "found") {
    t.status = TargetStatus::Found;
  } else if (status.rfind("locked_by ", 0) == 0) {
    t.status = TargetStatus::Locked;
    t.locked_by = std::stoi(status.substr(10));
  } else {
    throw PromptError("bad target status '" + status + "'");
  }
  return t;
}

ProgressView parse_progress(LineReader& r) {
  ProgressView p;
  if (!r.at_section() && r.peek() == "(none)") {
    r.next();
    return p;
  }
  while (!r.at_section()) p.targets.push_back(parse_progress_line(r.next()));
  return p;
}

StateView parse_state(LineReader& r) {
  StateView s;
  s.version = std::stol(strip_prefix(r.next(), "version: "));
  while (!r.at_section()) {
    std::string line = r.next();
    auto fields = split_fields(line);
    if (line.rfind("agent ", 0) == 0) {
      if (fields.size() != 5) throw PromptError("bad agent line '" + line + "'");
      AgentSummary a;
      a.id = std::stoi(strip_prefix(fields[0], "agent "));
      a.pose = parse_cell(strip_prefix(fields[1], "pose="));
      a.heading = std::stoi(strip_prefix(fields[2], "heading="));
      a.alive = strip_prefix(fields[3], "alive=") == "yes";
      std::string assigned = strip_prefix(fields[4], "assigned=");
      if (assigned != "none") {
        a.has_assignment = true;
        a.assigned = parse_room_ref(assigned);
      }
      s.agents.push_back(a);
    } else {
      if (fields.size() != 7) throw PromptError("bad room line '" + line + "'");
      RoomInfo info;
      info.room = parse_room_ref(fields[0]);
      std::string explored = strip_prefix(fields[1], "explored=");
      if (explored.empty() || explored.back() != '%')
        throw PromptError("bad explored field '" + explored + "'");
      info.explored_pct = std::stoi(explored.substr(0, explored.size() - 1));
      info.distance = std::stoi(strip_prefix(fields[2], "dist="));
      info.centroid = parse_cell(strip_prefix(fields[3], "centroid="));
      info.objects = parse_bracket_list(strip_prefix(fields[4], "objects="));
      info.likely_targets = parse_bracket_list(strip_prefix(fields[5], "likely="));
      info.label = strip_prefix(fields[6], "label=");
      s.rooms.push_back(info);
    }
  }
  return s;
}

std::vector<std::string> parse_string_list(LineReader& r) {
  std::vector<std::string> out;
  if (!r.at_section() && !r.done() && r.peek() == "(none)") {
    r.next();
    return out;
  }
  while (!r.done() && !r.at_section()) out.push_back(strip_prefix(r.next(), "- "));
  return out;
}

Proposal parse_proposal_block(LineReader& r) {
  Proposal p;
  p.agent_id = std::stoi(strip_prefix(r.next(), "agent: "));
  p.action = parse_room_ref(strip_prefix(r.next(), "action: "));
  p.locks = parse_bracket_list(strip_prefix(r.next(), "locks: "));
  p.thoughts = strip_prefix(r.next(), "thoughts: ");
  return p;
}

}  // namespace

PromptContext parse_prompts(const std::string& member_text, const std::string& leader_text) {
  PromptContext ctx;
  {
    LineReader r(member_text);
    r.expect("# MEMBER PROMPT");
    r.expect("## ID");
    ctx.agent_id = std::stoi(strip_prefix(r.next(), "agent: "));
    r.expect("## PROGRESS");
    ctx.progress = parse_progress(r);
    r.expect("## STATE");
    ctx.state = parse_state(r);
    r.expect("## GOALS");
    ctx.goals = parse_string_list(r);
    r.expect("## HISTORY");
    ctx.history = parse_string_list(r);
    r.expect("## OPTIONS");
    for (const auto& s : parse_string_list(r)) ctx.options.push_back(parse_room_ref(s));
  }
  {
    LineReader r(leader_text);
    r.expect("# LEADER PROMPT");
    r.expect("## PROPOSAL");
    ctx.proposal = parse_proposal_block(r);
    r.expect("## GLOBAL PROGRESS");
    ctx.global_progress = parse_progress(r);
    r.expect("## GLOBAL STATE");
    ctx.global_state = parse_state(r);
    r.expect("## GOALS");
    auto goals = parse_string_list(r);
    if (goals != ctx.goals) throw PromptError("member and leader goal sections disagree");
  }
  return ctx;
}

std::vector<RoomRef> compute_options(const ProgressView& progress, const StateView& state,
                                     bool frontier_available,
                                     const std::optional<RoomRef>& exclude) {
  std::vector<std::string> remaining = progress.remaining();
  std::vector<RoomRef> options;
  for (const auto& info : state.rooms) {
    if (exclude && info.room == *exclude) continue;
    bool likely = false;
    for (const auto& t : info.likely_targets)
      if (std::find(remaining.begin(), remaining.end(), t) != remaining.end()) likely = true;
    if (info.explored_pct < 100 || likely) options.push_back(info.room);
  }
  if (frontier_available) options.push_back(frontier_room());
  return options;
}

namespace {

// Lockable = still findable by this agent: unclaimed or already locked by it.
std::vector<std::string> lockable_targets(const ProgressView& p, int agent_id) {
  std::vector<std::string> out;
  for (const auto& t : p.targets)
    if (t.status == TargetStatus::Unclaimed ||
        (t.status == TargetStatus::Locked && t.locked_by == agent_id))
      out.push_back(t.cls);
  return out;
}

double room_score(const rooms::CoOccurrenceTable& table, const RoomInfo& info,
                  const std::vector<std::string>& lockable, const Cell& pose) {
  double sum = 0.0;
  for (const auto& t : lockable) sum += table.weight(info.label, t);
  int dist = info.distance >= 0 ? info.distance : manhattan(pose, info.centroid);
  return sum / (1.0 + dist);
}

std::vector<std::string> locks_for_room(const rooms::CoOccurrenceTable& table,
                                        const std::string& label,
                                        const std::vector<std::string>& lockable) {
  std::vector<std::string> out;
  for (const auto& t : lockable)
    if (table.weight(label, t) > 0.0) out.push_back(t);
  return out;
}

Cell pose_of(const StateView& s, int agent_id) {
  for (const auto& a : s.agents)
    if (a.id == agent_id) return a.pose;
  return {0, 0};
}

}  // namespace

Proposal RuleOracle::propose(const PromptContext& ctx) {
  if (ctx.options.empty()) throw std::runtime_error("no candidate rooms");
  std::vector<std::string> lockable = lockable_targets(ctx.progress, ctx.agent_id);
  Cell pose = pose_of(ctx.state, ctx.agent_id);

  std::vector<RoomRef> options = ctx.options;
  std::sort(options.begin(), options.end());
  RoomRef best = options.front();
  double best_score = -1.0;
  std::string best_label;
  for (const auto& opt : options) {
    double score = 0.0;
    std::string label;
    if (!opt.frontier) {
      const RoomInfo* info = ctx.state.find_room(opt);
      if (!info) continue;
      score = room_score(table_, *info, lockable, pose);
      label = info->label;
    }
    if (score > best_score) {
      best_score = score;
      best = opt;
      best_label = label;
    }
  }

  Proposal p;
  p.agent_id = ctx.agent_id;
  p.action = best;
  if (!best.frontier) p.locks = locks_for_room(table_, best_label, lockable);
  p.thoughts = best.frontier
                   ? "no scored room stands out; pushing the frontier"
                   : "heading for " + to_string(best) +
                         (best_label.empty() ? "" : " which looks like a " + best_label);
  return p;
}

CoordinationResult RuleOracle::coordinate(const PromptContext& ctx) {
  const Proposal& p = ctx.proposal;
  const StateView& sg = ctx.global_state;
  const ProgressView& pg = ctx.global_progress;

  // Standing assignments of everyone else; the frontier pseudo-room is a
  // region class, not a room, and never conflicts.
  std::map<RoomRef, int> standing;
  for (const auto& a : sg.agents)
    if (a.id != p.agent_id && a.alive && a.has_assignment && !a.assigned.frontier)
      standing[a.assigned] = a.id;

  bool room_conflict = !p.action.frontier && standing.count(p.action) > 0;
  bool lock_conflict = false;
  for (const auto& l : p.locks) {
    const TargetState* t = pg.find(l);
    if (t && ((t->status == TargetStatus::Locked && t->locked_by != p.agent_id) ||
              t->status == TargetStatus::Found))
      lock_conflict = true;
  }

  std::vector<std::string> lockable = lockable_targets(pg, p.agent_id);
  Cell requester_pose = pose_of(sg, p.agent_id);

  auto best_candidate = [&](const std::set<RoomRef>& banned, const Cell& pose,
                            int for_agent) -> std::optional<std::pair<RoomRef, std::string>> {
    std::vector<std::string> agent_lockable = lockable_targets(pg, for_agent);
    std::optional<std::pair<RoomRef, std::string>> best;
    double best_score = -1.0;
    for (const auto& info : sg.rooms) {
      if (banned.count(info.room)) continue;
      bool likely = false;
      for (const auto& t : info.likely_targets)
        if (std::find(agent_lockable.begin(), agent_lockable.end(), t) != agent_lockable.end())
          likely = true;
      if (info.explored_pct >= 100 && !likely) continue;
      double score = room_score(table_, info, agent_lockable, pose);
      if (score > best_score) {
        best_score = score;
        best = {{info.room, info.label}};
      }
    }
    return best;
  };

  CoordinationResult result;
  AgentDirective r;
  r.agent = p.agent_id;
  r.is_interrupt = false;
  std::set<std::string> granted;  // locks handed out in this result

  auto trim_locks = [&](const std::vector<std::string>& wanted, const std::string& label,
                        int agent) {
    std::vector<std::string> agent_lockable = lockable_targets(pg, agent);
    std::vector<std::string> out;
    for (const auto& l : wanted) {
      bool ok = std::find(agent_lockable.begin(), agent_lockable.end(), l) !=
                    agent_lockable.end() &&
                !granted.count(l) && (label.empty() || table_.weight(label, l) > 0.0);
      if (ok) out.push_back(l);
    }
    return out;
  };

  if (!room_conflict && !lock_conflict) {
    r.support = true;
    r.action = p.action;
    std::string label;
    if (const RoomInfo* info = sg.find_room(p.action)) label = info->label;
    r.locks = trim_locks(p.locks, "", p.agent_id);
    r.thoughts = "no conflict with standing assignments; proposal approved";
  } else {
    r.support = false;
    std::set<RoomRef> banned{p.action};
    for (const auto& [room, agent] : standing) banned.insert(room);
    auto alt = best_candidate(banned, requester_pose, p.agent_id);
    if (alt) {
      r.action = alt->first;
      r.locks = trim_locks(locks_for_room(table_, alt->second, lockable), "", p.agent_id);
      r.thoughts = "proposal conflicts with the team plan; redirected to " + to_string(r.action);
    } else if (!p.action.frontier) {
      r.action = frontier_room();
      r.thoughts = "proposal conflicts and no free room remains; explore the frontier";
    } else {
      // Lock conflict on a frontier proposal with nothing else to offer:
      // support the move, drop the contested locks.
      r.support = true;
      r.action = p.action;
      r.locks = trim_locks(p.locks, "", p.agent_id);
      r.thoughts = "frontier move approved with contested locks dropped";
    }
  }
  for (const auto& l : r.locks) granted.insert(l);
  result.directives.push_back(r);

  // A teammate's room becomes redundant when every target it was likely to
  // yield is now found or locked by someone else. Interrupt only rooms that
  // this very decision made redundant.
  auto consumed = [&](const std::string& t, int owner, bool with_grants) {
    const TargetState* ts = pg.find(t);
    bool locked_elsewhere =
        ts && ((ts->status == TargetStatus::Found) ||
               (ts->status == TargetStatus::Locked && ts->locked_by != owner));
    if (with_grants && granted.count(t) && r.agent != owner) locked_elsewhere = true;
    return locked_elsewhere;
  };
  std::set<RoomRef> used{r.action};
  for (const auto& [room, agent] : standing) used.insert(room);
  for (const auto& a : sg.agents) {
    if (a.id == p.agent_id || !a.alive || !a.has_assignment || a.assigned.frontier) continue;
    const RoomInfo* info = sg.find_room(a.assigned);
    if (!info || info->likely_targets.empty()) continue;
    bool redundant_now = true, redundant_before = true;
    for (const auto& t : info->likely_targets) {
      if (!consumed(t, a.id, true)) redundant_now = false;
      if (!consumed(t, a.id, false)) redundant_before = false;
    }
    if (!redundant_now || redundant_before) continue;
    AgentDirective d;
    d.agent = a.id;
    d.is_interrupt = true;
    auto alt = best_candidate(used, a.pose, a.id);
    if (alt) {
      d.action = alt->first;
      d.locks = trim_locks(locks_for_room(table_, alt->second, lockable_targets(pg, a.id)), "",
                           a.id);
    } else {
      d.action = frontier_room();
    }
    d.thoughts = "assigned room no longer promises any open target";
    if (!d.action.frontier) used.insert(d.action);
    for (const auto& l : d.locks) granted.insert(l);
    result.directives.push_back(d);
  }
  return result;
}

ParsedReply parse_llm_reply(const std::string& text, const PromptContext& ctx) {
  // Extract the first fenced block.
  std::vector<std::string> lines;
  {
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
  }
  size_t start = lines.size(), end = lines.size();
  for (size_t i = 0; i < lines.size(); ++i)
    if (lines[i].rfind("```", 0) == 0) {
      if (start == lines.size()) {
        start = i;
      } else {
        end = i;
        break;
      }
    }
  if (start >= lines.size() || end >= lines.size())
    throw PromptError("reply has no fenced block");

  std::map<std::string, std::string> kv;
  std::vector<std::string> interrupts;
  for (size_t i = start + 1; i < end; ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    size_t colon = line.find(": ");
    if (colon == std::string::npos) throw PromptError("bad reply line '" + line + "'");
    std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 2);
    if (key == "interrupt")
      interrupts.push_back(value);
    else
      kv[key] = value;
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw PromptError("reply missing field '" + key + "'");
    return it->second;
  };

  std::string type = need("type");
  if (type == "proposal") {
    Proposal p;
    p.agent_id = ctx.agent_id;
    p.action = parse_room_ref(need("action"));
    p.locks = parse_bracket_list(need("locks"));
    p.thoughts = kv.count("thoughts") ? kv["thoughts"] : "";
    for (const auto& problem : check_proposal(p, ctx)) throw PromptError(problem);
    return p;
  }
  if (type == "coordination") {
    CoordinationResult res;
    AgentDirective r;
    r.agent = ctx.proposal.agent_id;
    r.is_interrupt = false;
    std::string decision = need("decision");
    if (decision != "support" && decision != "oppose")
      throw PromptError("bad decision '" + decision + "'");
    r.support = decision == "support";
    r.action = parse_room_ref(need("action"));
    r.locks = parse_bracket_list(need("locks"));
    r.thoughts = kv.count("thoughts") ? kv["thoughts"] : "";
    res.directives.push_back(r);
    for (const auto& spec : interrupts) {
      auto fields = split_fields(spec);
      if (fields.size() < 3) throw PromptError("bad interrupt '" + spec + "'");
      AgentDirective d;
      d.is_interrupt = true;
      d.agent = std::stoi(strip_prefix(fields[0], "agent "));
      d.action = parse_room_ref(strip_prefix(fields[1], "action="));
      d.locks = parse_bracket_list(strip_prefix(fields[2], "locks="));
      if (fields.size() > 3) d.thoughts = strip_prefix(fields[3], "thoughts=");
      res.directives.push_back(d);
    }
    for (const auto& problem : check_coordination(res, ctx)) throw PromptError(problem);
    return res;
  }
  throw PromptError("bad reply type '" + type + "'");
}

std::string RemoteOracle::complete(const std::string& prompt) {
  httplib::Client client(cfg_.host, cfg_.port);
  client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
  client.set_read_timeout(0, cfg_.timeout_ms * 1000);
  json req;
  req["model"] = cfg_.model;
  req["temperature"] = 0;
  req["max_tokens"] = cfg_.max_tokens;
  req["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});
  auto res = client.Post(cfg_.path, req.dump(), "application/json");
  if (!res || res->status != 200) throw std::runtime_error("oracle endpoint unavailable");
  json body = json::parse(res->body);
  return body.at("choices").at(0).at("message").at("content").get<std::string>();
}

namespace {

const char* kProposalReminder =
    "\n\nREMINDER: answer with exactly one fenced block of the form\n"
    "```\ntype: proposal\naction: room (x,y)\nlocks: [a,b]\nthoughts: ...\n```\n";
const char* kCoordinationReminder =
    "\n\nREMINDER: answer with exactly one fenced block of the form\n"
    "```\ntype: coordination\ndecision: support\naction: room (x,y)\nlocks: [a,b]\n"
    "thoughts: ...\ninterrupt: agent N | action=room (x,y) | locks=[a]\n```\n";

}  // namespace

Proposal RemoteOracle::propose(const PromptContext& ctx) {
  std::string prompt = render_prompts(ctx).member;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      ParsedReply reply = parse_llm_reply(complete(attempt ? prompt + kProposalReminder : prompt),
                                          ctx);
      if (auto* p = std::get_if<Proposal>(&reply)) return *p;
    } catch (const std::exception&) {
    }
  }
  ++degraded_;
  return fallback_.propose(ctx);
}

CoordinationResult RemoteOracle::coordinate(const PromptContext& ctx) {
  std::string prompt = render_prompts(ctx).leader;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      ParsedReply reply = parse_llm_reply(
          complete(attempt ? prompt + kCoordinationReminder : prompt), ctx);
      if (auto* c = std::get_if<CoordinationResult>(&reply)) return *c;
    } catch (const std::exception&) {
    }
  }
  ++degraded_;
  return fallback_.coordinate(ctx);
}

std::vector<std::string> check_proposal(const Proposal& p, const PromptContext& ctx) {
  std::vector<std::string> problems;
  if (!p.action.frontier && !ctx.state.find_room(p.action))
    problems.push_back("proposal action " + to_string(p.action) + " is not a known room");
  for (const auto& l : p.locks) {
    const TargetState* t = ctx.progress.find(l);
    if (!t)
      problems.push_back("proposal locks unknown target '" + l + "'");
    else if (t->status == TargetStatus::Found)
      problems.push_back("proposal locks already-found target '" + l + "'");
  }
  return problems;
}

std::vector<std::string> check_coordination(const CoordinationResult& result,
                                            const PromptContext& ctx) {
  std::vector<std::string> problems;
  if (result.directives.empty()) {
    problems.push_back("coordination result has no directives");
    return problems;
  }
  const AgentDirective& r = result.directives.front();
  if (r.is_interrupt) problems.push_back("requester directive marked as interrupt");
  if (r.agent != ctx.proposal.agent_id)
    problems.push_back("first directive does not address the requester");
  if (!r.support && r.action == ctx.proposal.action)
    problems.push_back("oppose decision must change the action");
  for (size_t i = 1; i < result.directives.size(); ++i)
    if (!result.directives[i].is_interrupt)
      problems.push_back("non-requester directive must be an interrupt");

  // Room assignments pairwise distinct across directives and untouched
  // standing assignments (frontier exempt).
  std::map<RoomRef, int> rooms;
  std::set<int> directed;
  for (const auto& d : result.directives) directed.insert(d.agent);
  for (const auto& d : result.directives)
    if (!d.action.frontier && !rooms.emplace(d.action, d.agent).second)
      problems.push_back("room " + to_string(d.action) + " assigned twice");
  for (const auto& a : ctx.global_state.agents) {
    if (directed.count(a.id) || !a.alive || !a.has_assignment || a.assigned.frontier) continue;
    if (!rooms.emplace(a.assigned, a.id).second)
      problems.push_back("directive assigns room " + to_string(a.assigned) +
                         " already held by agent " + std::to_string(a.id));
  }

  // Lock sets pairwise disjoint and compatible with global progress.
  std::map<std::string, int> lock_owner;
  for (const auto& d : result.directives)
    for (const auto& l : d.locks) {
      if (!lock_owner.emplace(l, d.agent).second)
        problems.push_back("target '" + l + "' locked twice in one result");
      const TargetState* t = ctx.global_progress.find(l);
      if (!t)
        problems.push_back("directive locks unknown target '" + l + "'");
      else if (t->status == TargetStatus::Found)
        problems.push_back("directive locks already-found target '" + l + "'");
      else if (t->status == TargetStatus::Locked && t->locked_by != d.agent &&
               !directed.count(t->locked_by))
        problems.push_back("target '" + l + "' is locked by agent " +
                           std::to_string(t->locked_by));
    }
  return problems;
}

Proposal ValidatingOracle::propose(const PromptContext& ctx) {
  Proposal p = inner_->propose(ctx);
  auto problems = check_proposal(p, ctx);
  if (problems.empty()) return p;
  if (inner_->name() == "rule") throw std::logic_error("rule oracle proposal: " + problems[0]);
  ++degraded_;
  return rule_.propose(ctx);
}

CoordinationResult ValidatingOracle::coordinate(const PromptContext& ctx) {
  CoordinationResult c = inner_->coordinate(ctx);
  auto problems = check_coordination(c, ctx);
  if (problems.empty()) return c;
  if (inner_->name() == "rule") throw std::logic_error("rule oracle coordination: " + problems[0]);
  ++degraded_;
  return rule_.coordinate(ctx);
}

}  // namespace teamnav::oracle
