#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "teamnav/oracle.hpp"

namespace teamnav::protocol {

enum class MsgKind : uint8_t {
  HelpRequest,
  LeaderResponse,
  Interrupt,
  WhoIsLeader,
  LeaderIs,
  Heartbeat,
};

std::string to_string(MsgKind kind);

// The leadership token: global state S_g, global progress P_g, and the
// ordered history of leaders. Exactly one live copy is authoritative; past
// leaders keep stale copies for crash recovery.
// Orders leadership information across crash recoveries: every recovery
// promotion opens a new era, and a newer era beats any version from an older
// one (the dead branch).
struct Stamp {
  long era = 0;
  long version = 0;
  friend auto operator<=>(const Stamp&, const Stamp&) = default;
};

struct Token {
  oracle::StateView state;        // S_g (carries the version counter)
  oracle::ProgressView progress;  // P_g
  std::vector<int> lineage;       // past leaders, most recent last
  std::map<int, long> served_requests;  // per-agent id of the last served request
  long era = 0;

  long version() const { return state.version; }
  Stamp stamp() const { return {era, state.version}; }
  int current_leader() const { return lineage.empty() ? -1 : lineage.back(); }
};

struct Message {
  MsgKind kind = MsgKind::Heartbeat;
  int sender = -1;
  int receiver = -1;
  long sent_tick = 0;
  long seq = -1;  // assigned by the network, global send order

  // payload, by kind
  oracle::Proposal proposal;        // HelpRequest
  long request_id = -1;             // HelpRequest: requester-local sequence, dedups re-sends
  Stamp routing;                    // HelpRequest: belief stamp of the sender/forwarder
  oracle::AgentDirective directive; // LeaderResponse, Interrupt
  Token token;                      // LeaderResponse
  bool grant = false;               // LeaderResponse: true when answering a HelpRequest
  long response_id = -1;            // LeaderResponse: dedup key
  int leader_id = -1;               // LeaderIs (-1 = unknown)
  Stamp stamp;                      // LeaderIs / Interrupt: sender belief stamp
  int suspect_id = -1;              // WhoIsLeader: the leader presumed dead

  uint64_t payload_digest() const;
};

// Reliable per-pair-FIFO network with integer tick latencies. Delivery order
// is fixed by (deliver_tick, sender, seq) so simulations are reproducible.
class SimNet {
 public:
  using LatencyFn = std::function<int(const Message&)>;

  explicit SimNet(int fixed_latency = 1);
  explicit SimNet(LatencyFn latency);

  void send(Message m, long now);
  std::vector<Message> deliver(long tick);  // messages due at `tick`, sorted
  bool quiescent() const { return in_flight_.empty(); }
  long total_sent() const { return next_seq_; }

  // Observer for the message log; sees every message at send time.
  std::function<void(const Message&, long)> on_send;

 private:
  LatencyFn latency_;
  long next_seq_ = 0;
  std::map<std::pair<int, int>, long> pair_last_delivery_;
  std::vector<std::pair<long, Message>> in_flight_;  // (deliver_tick, msg)
};

struct ProtoEvent {
  long tick = 0;
  std::string type;
  int a = -1;
  int b = -1;
  long version = -1;
  std::string detail;
};

using EventSink = std::function<void(const ProtoEvent&)>;

struct ProtocolConfig {
  long response_timeout = 16;  // ticks a member waits for a LeaderResponse
  long probe_timeout = 16;     // ticks a recoverer waits for a probe answer
  long heartbeat_period = 0;   // 0 disables leader heartbeats
};

// Per-agent protocol state.
struct AgentProto {
  int id = -1;
  bool alive = true;
  bool is_leader = false;
  std::optional<Token> token;  // latest copy held; stale once leadership moved on
  Stamp known;                 // deepest stamp seen anywhere
  int believed_leader = -1;
  Stamp belief{0, -1};
  std::vector<int> known_lineage;
  std::vector<std::string> history;  // H_i, one line per exchange

  bool awaiting = false;
  oracle::Proposal pending;
  long pending_request_id = -1;
  long request_seq = 0;
  long request_tick = 0;
  int request_dest = -1;

  bool recovering = false;
  std::vector<int> probe_plan;
  size_t probe_next = 0;
  bool probe_outstanding = false;
  int probe_target = -1;
  long probe_sent_tick = 0;
  std::set<int> believed_dead;
  std::set<long> applied_responses;

  // Pending self-promotion: a lineage holder pings the suspect once before
  // resuming leadership, so a slow leader never gets displaced while alive.
  bool verifying_promotion = false;
  int verify_suspect = -1;
  long verify_sent_tick = 0;
  std::vector<int> promotion_askers;

  // knowledge the agent folds into the token when it becomes leader
  oracle::AgentSummary self_summary;
  std::vector<oracle::RoomInfo> contributed_rooms;
  std::set<std::string> found_by_self;

  std::deque<Message> held_requests;  // requests parked until leadership settles
};

// The comm-triggered dynamic leadership engine: a deterministic state machine
// over the simulated network. Leadership transfers to whichever agent most
// recently asked for and received coordination; crashed leaders are recovered
// by walking the lineage.
class Engine {
 public:
  Engine(ProtocolConfig cfg, std::vector<int> agent_ids, std::vector<std::string> goals,
         oracle::DecisionOracle& oracle, SimNet net, EventSink sink = nullptr);

  // Seeds the token at the lowest agent id from everyone's preliminary room
  // descriptions and announces the temporary leader.
  void bootstrap(const std::map<int, std::vector<oracle::RoomInfo>>& initial_rooms, long tick);

  // Member trigger: route a help request to the best-known leader (handled
  // locally when the requester is the leader). Returns false if the agent is
  // dead or already has a request outstanding.
  bool request_help(int agent_id, const oracle::Proposal& proposal, long tick);

  // Keeps an agent's contribution to the global state fresh.
  void update_self(int agent_id, const oracle::AgentSummary& summary,
                   const std::vector<oracle::RoomInfo>& rooms,
                   const std::set<std::string>& found);

  void crash(int agent_id, long tick);

  // Delivers due messages, runs handlers, then timeout logic. Call once per
  // simulation tick after triggers.
  void tick(long t);

  bool quiescent() const { return net_.quiescent(); }
  const AgentProto& agent(int id) const { return agents_.at(id); }
  const std::vector<int>& agent_ids() const { return ids_; }
  int leader_count() const;
  int current_leader_id() const;
  long grants_in_flight() const { return grants_in_flight_; }
  bool recovery_pending() const { return recovery_pending_; }
  long messages_sent() const { return net_.total_sent(); }
  const std::map<std::string, long>& message_counts() const { return msg_counts_; }

  // Directive delivery to the embodied layer (requester responses and
  // interrupts) and token installation notifications.
  std::function<void(int, const oracle::AgentDirective&)> on_directive;
  std::function<void(int, const Token&)> on_token;

 private:
  void send(Message m, long now);
  void handle(const Message& m, long t);
  void handle_help_request(AgentProto& me, const Message& m, long t);
  void handle_leader_response(AgentProto& me, const Message& m, long t);
  void handle_who_is_leader(AgentProto& me, const Message& m, long t);
  void handle_leader_is(AgentProto& me, const Message& m, long t);
  void serve_request(AgentProto& leader, const oracle::Proposal& proposal,
                     long request_id, long t);
  void self_promote(AgentProto& me, long t, const std::string& reason);
  void start_recovery(AgentProto& me, int suspect, long t);
  void continue_recovery(AgentProto& me, long t);
  void scrub_dead(Token& token, const std::set<int>& dead);
  void merge_self_into(AgentProto& me, Token& token);
  void dispatch_held(AgentProto& me, long t);
  void became_leader(AgentProto& me, long t, const std::string& how);
  void emit(const ProtoEvent& e);
  void emit_quiescent_snapshot(long t);
  oracle::PromptContext leader_context(const AgentProto& leader,
                                       const oracle::Proposal& proposal) const;

  ProtocolConfig cfg_;
  std::vector<int> ids_;
  std::vector<std::string> goals_;
  oracle::DecisionOracle& oracle_;
  SimNet net_;
  EventSink sink_;
  std::map<int, AgentProto> agents_;
  std::map<std::string, long> msg_counts_;
  long grants_in_flight_ = 0;
  long next_response_id_ = 0;
  bool recovery_pending_ = false;
  bool was_quiescent_ = true;
};

// Line-delimited message log record (docs/formats.md).
std::string message_log_line(const Message& m, long deliver_tick);

// Replays the protocol event stream and checks the safety invariants:
//  - at most one alive leader after every processed message; zero leaders only
//    while a grant is in flight or a crash recovery is pending;
//  - at quiescent points, room assignments pairwise distinct and locks
//    pairwise disjoint;
//  - every leader_on extends the previous lineage (rollback allowed only
//    through recovery).
// Works identically on the live stream and on a recorded trace.
class InvariantChecker {
 public:
  void on_event(const ProtoEvent& e);
  const std::vector<std::string>& violations() const { return violations_; }
  const std::vector<int>& leader_sequence() const { return leader_sequence_; }
  long quiescent_points() const { return quiescent_points_; }
  int handoffs() const { return std::max<int>(0, (int)leader_sequence_.size() - 1); }
  bool lineage_contacted() const { return lineage_contacted_; }
  long recoveries() const { return recoveries_; }

 private:
  std::set<int> leaders_;
  std::set<int> crashed_;
  long grants_in_flight_ = 0;
  bool recovery_pending_ = false;
  bool bootstrapped_ = false;
  bool lineage_contacted_ = false;
  long quiescent_points_ = 0;
  long recoveries_ = 0;
  std::vector<int> leader_sequence_;
  std::vector<std::string> violations_;
};

}  // namespace teamnav::protocol
