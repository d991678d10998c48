#ifndef VGRID_AGENT_HPP
#define VGRID_AGENT_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vgrid/caps.hpp"
#include "vgrid/enforce.hpp"
#include "vgrid/federation.hpp"
#include "vgrid/guest.hpp"
#include "vgrid/ids.hpp"
#include "vgrid/tag.hpp"

namespace vgrid {

// ---------------------------------------------------------------------------
// Lifecycle types
// ---------------------------------------------------------------------------

enum class AgentState : std::uint8_t {
    Instantiated,
    Migrating,
    Active,
    Completed,
    Destroyed,
};

inline const char* agent_state_name(AgentState s) {
    switch (s) {
        case AgentState::Instantiated: return "instantiated";
        case AgentState::Migrating: return "migrating";
        case AgentState::Active: return "active";
        case AgentState::Completed: return "completed";
        case AgentState::Destroyed: return "destroyed";
    }
    return "?";
}

enum class DestroyCause : std::uint8_t {
    Disconnect,
    MissionEnd,
    Compromise,
    ParentRevoked,
    Hostile,
};

inline const char* destroy_cause_name(DestroyCause c) {
    switch (c) {
        case DestroyCause::Disconnect: return "disconnect";
        case DestroyCause::MissionEnd: return "mission_end";
        case DestroyCause::Compromise: return "compromise";
        case DestroyCause::ParentRevoked: return "parent_revoked";
        case DestroyCause::Hostile: return "hostile";
    }
    return "?";
}

enum class Mechanism : std::uint8_t { Monitor, StaticThenRun, Rewrite, Combined };

inline const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::Monitor: return "monitor";
        case Mechanism::StaticThenRun: return "static";
        case Mechanism::Rewrite: return "rewrite";
        case Mechanism::Combined: return "combined";
    }
    return "?";
}

inline std::optional<Mechanism> mechanism_from_name(const std::string& s) {
    if (s == "monitor") return Mechanism::Monitor;
    if (s == "static") return Mechanism::StaticThenRun;
    if (s == "rewrite") return Mechanism::Rewrite;
    if (s == "combined") return Mechanism::Combined;
    return std::nullopt;
}

struct Mission {
    MissionId mission_id;
    TaskId task;
    GuestProgram program;
    NodeId target;
    CapSet required_caps;
    SimTime deadline{0};
};

enum class NotificationKind : std::uint8_t {
    HostUnreachable,
    HandshakeFailed,
    Compromised,
    PolicyViolation,
    MissionComplete,
};

inline const char* notification_kind_name(NotificationKind k) {
    switch (k) {
        case NotificationKind::HostUnreachable: return "host_unreachable";
        case NotificationKind::HandshakeFailed: return "handshake_failed";
        case NotificationKind::Compromised: return "compromised";
        case NotificationKind::PolicyViolation: return "policy_violation";
        case NotificationKind::MissionComplete: return "mission_complete";
    }
    return "?";
}

struct Notification {
    TokenId from;
    TokenId to;  // the sender's parent token
    NotificationKind kind{NotificationKind::MissionComplete};
    SimTime at{0};
    std::uint64_t result_digest{0};  // MissionComplete only
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class AgentError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class RejectedSubscription : public AgentError {
  public:
    using AgentError::AgentError;
};

class ParentDestroyed : public AgentError {
  public:
    using AgentError::AgentError;
};

class NotMyChild : public AgentError {
  public:
    using AgentError::AgentError;
};

// ---------------------------------------------------------------------------
// Agent instance
// ---------------------------------------------------------------------------

class AgentInstance {
  public:
    AgentInstance(CapabilityToken token, bool is_main)
        : token_(std::move(token)), is_main_(is_main) {}

    const CapabilityToken& token() const { return token_; }
    bool is_main() const { return is_main_; }
    AgentState state() const { return state_; }
    bool terminal() const {
        return state_ == AgentState::Completed || state_ == AgentState::Destroyed;
    }
    std::optional<NodeId> location() const { return location_; }
    std::optional<DestroyCause> destroy_cause() const { return cause_; }
    const std::optional<Mission>& mission() const { return mission_; }

    void assign_mission(Mission m) {
        require_state(AgentState::Instantiated, "assign mission");
        mission_ = std::move(m);
    }

    void begin_migration(NodeId to) {
        require_state(AgentState::Instantiated, "migrate");
        state_ = AgentState::Migrating;
        location_ = to;
    }

    void activate() {
        require_state(AgentState::Migrating, "activate");
        state_ = AgentState::Active;
    }

    void complete() {
        require_state(AgentState::Active, "complete");
        state_ = AgentState::Completed;
    }

    void destroy(DestroyCause cause) {
        if (terminal()) throw std::logic_error("agent already terminal");
        if (cause == DestroyCause::Disconnect && !is_main_)
            throw std::logic_error("disconnect destruction applies to main agents only");
        if (cause == DestroyCause::MissionEnd && is_main_)
            throw std::logic_error("mission-end destruction applies to secondaries only");
        state_ = AgentState::Destroyed;
        cause_ = cause;
    }

  private:
    void require_state(AgentState expected, const char* action) const {
        if (state_ != expected)
            throw std::logic_error(std::string("cannot ") + action + " from state " +
                                   agent_state_name(state_));
    }

    CapabilityToken token_;
    bool is_main_;
    AgentState state_{AgentState::Instantiated};
    std::optional<NodeId> location_;
    std::optional<DestroyCause> cause_;
    std::optional<Mission> mission_;
};

// ---------------------------------------------------------------------------
// Spawning
// ---------------------------------------------------------------------------

inline AgentInstance spawn_main(const SubscriptionDecision& decision) {
    const auto* ok = std::get_if<SubscriptionAccepted>(&decision);
    if (!ok) throw RejectedSubscription("subscription was rejected");
    return AgentInstance(ok->root_token, /*is_main=*/true);
}

// Delegates a token carrying exactly the mission's required capabilities.
inline AgentInstance spawn_secondary(const AgentInstance& parent, Mission mission,
                                     Coordinator& coordinator) {
    if (parent.terminal()) throw ParentDestroyed("parent agent is terminal");
    if (parent.state() == AgentState::Migrating)
        throw std::logic_error("parent is migrating");
    CapabilityToken child = coordinator.issue_delegate(
        parent.token(), mission.mission_id, mission.required_caps);
    AgentInstance agent(std::move(child), /*is_main=*/false);
    agent.assign_mission(std::move(mission));
    return agent;
}

// ---------------------------------------------------------------------------
// Mission execution (post-handshake)
// ---------------------------------------------------------------------------

struct CompletedOutcome {
    std::uint64_t result_digest{0};
    Trace trace;
};

struct TruncatedOutcome {
    Trace trace;                   // committed prefix only
    std::size_t violating_index{0};
    bool refused_statically{false};
};

struct HandshakeFailedOutcome {
    HandshakeFailure failure;
};

struct HostVanishedOutcome {};

using MissionOutcome = std::variant<CompletedOutcome, TruncatedOutcome,
                                    HandshakeFailedOutcome, HostVanishedOutcome>;

inline const char* mission_outcome_name(const MissionOutcome& o) {
    if (std::holds_alternative<CompletedOutcome>(o)) return "completed";
    if (std::holds_alternative<TruncatedOutcome>(o)) return "truncated";
    if (std::holds_alternative<HandshakeFailedOutcome>(o)) return "handshake_failed";
    return "host_vanished";
}

inline std::uint64_t result_digest(MissionId mission, const std::vector<GuestEvent>& events) {
    ByteWriter w;
    w.u64(mission.value);
    for (GuestEvent e : events) w.u8(static_cast<std::uint8_t>(e));
    return digest64(w.bytes());
}

struct MissionExecution {
    MissionOutcome outcome;
    int end_state{0};               // automaton state after the committed events
    std::size_t guard_count{0};     // combined mechanism only
};

// Runs the mission program under the chosen mechanism, starting from the
// host's current automaton state. The caller has already authenticated the
// agent; handshake and churn failures are the simulator's concern.
inline MissionExecution execute_mission(const SecurityAutomaton& policy,
                                        const Mission& mission, Mechanism mechanism,
                                        BranchOracle oracle, int start_state) {
    auto advance = [&](const std::vector<GuestEvent>& events) {
        int s = start_state;
        for (GuestEvent e : events) {
            auto next = policy.step(s, e);
            if (!next) throw std::logic_error("committed event violates the policy");
            s = *next;
        }
        return s;
    };
    auto completed = [&](Trace t) {
        MissionExecution ex;
        ex.end_state = advance(t.events);
        ex.outcome = CompletedOutcome{result_digest(mission.mission_id, t.events),
                                      std::move(t)};
        return ex;
    };
    auto truncated = [&](Trace t, std::size_t index, bool refused) {
        MissionExecution ex;
        ex.end_state = advance(t.events);
        ex.outcome = TruncatedOutcome{std::move(t), index, refused};
        return ex;
    };

    switch (mechanism) {
        case Mechanism::Monitor: {
            Verdict v = run_monitor(policy, mission.program, std::move(oracle), start_state);
            if (auto* ok = std::get_if<MonitoredOk>(&v)) return completed(std::move(ok->trace));
            auto& tr = std::get<MonitoredTruncated>(v);
            return truncated(std::move(tr.trace), tr.violating_index, false);
        }
        case Mechanism::StaticThenRun: {
            Verdict v = static_analyze(policy, mission.program, start_state);
            if (std::holds_alternative<AcceptedStatically>(v))
                return completed(execute_unmonitored(mission.program, std::move(oracle)));
            auto& rej = std::get<RejectedStatically>(v);
            return truncated(Trace{}, rej.witness.events.size() - 1, true);
        }
        case Mechanism::Rewrite: {
            GuestProgram guarded = rewrite_program(policy, mission.program);
            Trace t = execute_rewritten(guarded, std::move(oracle), policy, start_state);
            if (t.terminated_by == Termination::GuardHalt) {
                std::size_t index = t.events.size();
                return truncated(std::move(t), index, false);
            }
            return completed(std::move(t));
        }
        case Mechanism::Combined: {
            CombinedResult res =
                run_combined(policy, mission.program, std::move(oracle), start_state);
            MissionExecution ex;
            if (auto* ok = std::get_if<MonitoredOk>(&res.verdict)) {
                ex = completed(std::move(ok->trace));
            } else {
                auto& tr = std::get<MonitoredTruncated>(res.verdict);
                ex = truncated(std::move(tr.trace), tr.violating_index, false);
            }
            ex.guard_count = res.guard_count;
            return ex;
        }
    }
    throw std::logic_error("unknown mechanism");
}

// ---------------------------------------------------------------------------
// Reassignment decisions
// ---------------------------------------------------------------------------

struct ReassignmentPolicy {
    int retry_budget{8};
    SimTime cooldown{10};
};

struct Reassignment {
    NodeId target;
};

enum class GiveUpReason : std::uint8_t { TasksPending };

struct GiveUp {
    GiveUpReason reason{GiveUpReason::TasksPending};
};

using ReassignDecision = std::variant<Reassignment, GiveUp>;

inline std::optional<NodeId> select_provider(const std::set<NodeId>& eligible,
                                             const std::set<NodeId>& excluded) {
    for (NodeId n : eligible)
        if (!excluded.contains(n)) return n;
    return std::nullopt;
}

// Parent-side decision on a child's notification. Completion kinds record
// the result and return no decision; failure kinds pick the next target or
// give up. `attempts` counts dispatches so far for this task.
inline std::optional<ReassignDecision> handle_notification(
    const AgentInstance& parent, const Notification& n, const std::set<NodeId>& eligible,
    const std::set<NodeId>& excluded, int attempts, const ReassignmentPolicy& policy) {
    if (n.to != parent.token().token_id)
        throw NotMyChild("notification addressed to a different parent");
    if (n.kind == NotificationKind::MissionComplete ||
        n.kind == NotificationKind::PolicyViolation)
        return std::nullopt;
    if (attempts >= policy.retry_budget) return GiveUp{GiveUpReason::TasksPending};
    auto target = select_provider(eligible, excluded);
    if (!target) return GiveUp{GiveUpReason::TasksPending};
    return Reassignment{*target};
}

}  // namespace vgrid

#endif
