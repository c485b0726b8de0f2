#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "teamnav/grid.hpp"
#include "teamnav/rooms.hpp"

namespace teamnav::oracle {

// Rooms are referenced across agents by their segment anchor cell (smallest
// mask cell). The frontier pseudo-room stands for "push into unknown space";
// it sorts after every real room so it loses scoring ties.
struct RoomRef {
  Cell anchor{0, 0};
  bool frontier = false;

  friend bool operator==(const RoomRef& a, const RoomRef& b) {
    return a.frontier == b.frontier && (a.frontier || a.anchor == b.anchor);
  }
  friend bool operator!=(const RoomRef& a, const RoomRef& b) { return !(a == b); }
  friend bool operator<(const RoomRef& a, const RoomRef& b) {
    if (a.frontier != b.frontier) return b.frontier;
    return !a.frontier && a.anchor < b.anchor;
  }
};

inline RoomRef frontier_room() { return {{0, 0}, true}; }
std::string to_string(const RoomRef& r);

enum class TargetStatus : uint8_t { Unclaimed, Locked, Found };

struct TargetState {
  std::string cls;
  TargetStatus status = TargetStatus::Unclaimed;
  int locked_by = -1;  // Locked only

  friend bool operator==(const TargetState& a, const TargetState& b) {
    return a.cls == b.cls && a.status == b.status &&
           (a.status != TargetStatus::Locked || a.locked_by == b.locked_by);
  }
};

// Task progress (P_i for a member, P_g at the leader).
struct ProgressView {
  std::vector<TargetState> targets;  // sorted by class

  std::vector<std::string> remaining() const;
  const TargetState* find(const std::string& cls) const;
  TargetState* find(const std::string& cls);
  void set(const std::string& cls, TargetStatus status, int locked_by = -1);

  friend bool operator==(const ProgressView&, const ProgressView&) = default;
};

struct RoomInfo {
  RoomRef room;
  std::string label;  // empty until described
  std::vector<std::string> objects;
  std::vector<std::string> likely_targets;
  int explored_pct = 0;
  Cell centroid{0, 0};
  int distance = -1;  // topo steps from the viewing agent; -1 unknown

  friend bool operator==(const RoomInfo&, const RoomInfo&) = default;
};

struct AgentSummary {
  int id = -1;
  Cell pose{0, 0};
  int heading = 0;
  bool has_assignment = false;
  RoomRef assigned;
  bool alive = true;

  friend bool operator==(const AgentSummary& a, const AgentSummary& b) {
    return a.id == b.id && a.pose == b.pose && a.heading == b.heading &&
           a.has_assignment == b.has_assignment && a.alive == b.alive &&
           (!a.has_assignment || a.assigned == b.assigned);
  }
};

// Recorded state (S_i for a member, S_g at the leader).
struct StateView {
  long version = 0;
  std::vector<AgentSummary> agents;  // sorted by id; members carry just themselves
  std::vector<RoomInfo> rooms;       // sorted by room ref

  const RoomInfo* find_room(const RoomRef& r) const;
  void upsert_room(const RoomInfo& info);
  AgentSummary& agent_entry(int id);

  friend bool operator==(const StateView&, const StateView&) = default;
};

// Member output of the help-request decision: locked targets, the chosen
// room, and a one-line rationale.
struct Proposal {
  int agent_id = -1;
  std::vector<std::string> locks;
  RoomRef action;
  std::string thoughts;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

// One per-agent entry of the leader's coordination result. The requester's
// entry carries the support/oppose decision; third-party entries carry the
// interrupt flag instead.
struct AgentDirective {
  int agent = -1;
  RoomRef action;
  bool is_interrupt = false;
  bool support = true;  // requester entries only
  std::vector<std::string> locks;
  std::string thoughts;

  friend bool operator==(const AgentDirective& a, const AgentDirective& b) {
    return a.agent == b.agent && a.action == b.action && a.is_interrupt == b.is_interrupt &&
           (a.is_interrupt || a.support == b.support) && a.locks == b.locks &&
           a.thoughts == b.thoughts;
  }
};

struct CoordinationResult {
  std::vector<AgentDirective> directives;  // first entry answers the requester

  friend bool operator==(const CoordinationResult&, const CoordinationResult&) = default;
};

// Everything the two prompt templates consume. The member half drives the
// proposal prompt; the leader half drives the coordination prompt.
struct PromptContext {
  // member fields
  int agent_id = -1;
  ProgressView progress;
  StateView state;
  std::vector<std::string> goals;
  std::vector<std::string> history;  // single-line entries
  std::vector<RoomRef> options;
  // leader fields
  Proposal proposal;
  ProgressView global_progress;
  StateView global_state;

  friend bool operator==(const PromptContext&, const PromptContext&) = default;
};

struct Prompts {
  std::string member;
  std::string leader;
};

struct PromptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic labeled-section rendering; parse_prompts is its exact inverse.
Prompts render_prompts(const PromptContext& ctx);
PromptContext parse_prompts(const std::string& member_text, const std::string& leader_text);

// Candidate rooms for a member: not fully explored, or still likely to hold a
// remaining target; a frontier pseudo-room is appended when one exists.
std::vector<RoomRef> compute_options(const ProgressView& progress, const StateView& state,
                                     bool frontier_available,
                                     const std::optional<RoomRef>& exclude = std::nullopt);

class DecisionOracle {
 public:
  virtual ~DecisionOracle() = default;
  virtual Proposal propose(const PromptContext& ctx) = 0;
  virtual CoordinationResult coordinate(const PromptContext& ctx) = 0;
  virtual std::string name() const = 0;
  virtual int degraded_count() const { return 0; }
};

// Pure, deterministic decision rules over the co-occurrence table: the seam
// where a language model would sit.
class RuleOracle : public DecisionOracle {
 public:
  explicit RuleOracle(rooms::CoOccurrenceTable table) : table_(std::move(table)) {}
  Proposal propose(const PromptContext& ctx) override;
  CoordinationResult coordinate(const PromptContext& ctx) override;
  std::string name() const override { return "rule"; }

 private:
  rooms::CoOccurrenceTable table_;
};

// Reply parsing for the remote path: the first fenced block of the response
// is read as key/value lines.
using ParsedReply = std::variant<Proposal, CoordinationResult>;
ParsedReply parse_llm_reply(const std::string& text, const PromptContext& ctx);

struct RemoteOracleConfig {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string path = "/v1/chat/completions";
  std::string model = "decision-model";
  int timeout_ms = 4000;
  int max_tokens = 512;
};

// Chat-completion-style HTTP oracle, temperature 0. An unparseable reply gets
// one reprompt with a format reminder; a second failure falls back to the
// rule oracle and counts a degradation.
class RemoteOracle : public DecisionOracle {
 public:
  RemoteOracle(RemoteOracleConfig cfg, rooms::CoOccurrenceTable fallback_table)
      : cfg_(std::move(cfg)), fallback_(std::move(fallback_table)) {}
  Proposal propose(const PromptContext& ctx) override;
  CoordinationResult coordinate(const PromptContext& ctx) override;
  std::string name() const override { return "remote"; }
  int degraded_count() const override { return degraded_; }

 private:
  std::string complete(const std::string& prompt);

  RemoteOracleConfig cfg_;
  RuleOracle fallback_;
  int degraded_ = 0;
};

// Checks CoordinationResult invariants: distinct room assignments (frontier
// exempt), disjoint locks within remaining targets, oppose implies a changed
// action. Returns problem descriptions, empty when clean.
std::vector<std::string> check_coordination(const CoordinationResult& result,
                                            const PromptContext& ctx);
std::vector<std::string> check_proposal(const Proposal& p, const PromptContext& ctx);

// Wraps any oracle with invariant checks. A rule oracle violating them is a
// bug (throws); a remote oracle violating them degrades to the rule result.
class ValidatingOracle : public DecisionOracle {
 public:
  ValidatingOracle(std::unique_ptr<DecisionOracle> inner, rooms::CoOccurrenceTable table)
      : inner_(std::move(inner)), rule_(std::move(table)) {}
  Proposal propose(const PromptContext& ctx) override;
  CoordinationResult coordinate(const PromptContext& ctx) override;
  std::string name() const override { return inner_->name(); }
  int degraded_count() const override { return degraded_ + inner_->degraded_count(); }

 private:
  std::unique_ptr<DecisionOracle> inner_;
  RuleOracle rule_;
  int degraded_ = 0;
};

}  // namespace teamnav::oracle
