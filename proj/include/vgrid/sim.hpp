#ifndef VGRID_SIM_HPP
#define VGRID_SIM_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "vgrid/agent.hpp"
#include "vgrid/automaton.hpp"
#include "vgrid/enforce.hpp"
#include "vgrid/federation.hpp"
#include "vgrid/guest.hpp"
#include "vgrid/ids.hpp"
#include "vgrid/rng.hpp"
#include "vgrid/scenario.hpp"
#include "vgrid/tag.hpp"

namespace vgrid {

class InvariantBreach : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Metrics {
    std::uint64_t epoch_count{0};
    std::uint64_t giveups{0};
    std::uint64_t jobs_completed{0};
    SimTime job_latency_total{0};
    std::uint64_t messages{0};
    std::uint64_t tasks_completed{0};
    std::uint64_t tasks_dispatched{0};
    std::uint64_t tasks_reassigned{0};
    std::uint64_t violations_blocked{0};
    SimTime wasted_work{0};

    // Fixed-point with three decimals, computed in integers.
    std::string mean_job_latency() const {
        if (jobs_completed == 0) return "0.000";
        std::uint64_t milli = static_cast<std::uint64_t>(job_latency_total) * 1000 /
                              jobs_completed;
        std::string frac = std::to_string(milli % 1000);
        while (frac.size() < 3) frac.insert(frac.begin(), '0');
        return std::to_string(milli / 1000) + "." + frac;
    }

    std::string to_text() const {
        std::string out;
        out += "epoch_count=" + std::to_string(epoch_count) + "\n";
        out += "giveups=" + std::to_string(giveups) + "\n";
        out += "jobs_completed=" + std::to_string(jobs_completed) + "\n";
        out += "mean_job_latency=" + mean_job_latency() + "\n";
        out += "messages=" + std::to_string(messages) + "\n";
        out += "tasks_completed=" + std::to_string(tasks_completed) + "\n";
        out += "tasks_dispatched=" + std::to_string(tasks_dispatched) + "\n";
        out += "tasks_reassigned=" + std::to_string(tasks_reassigned) + "\n";
        out += "violations_blocked=" + std::to_string(violations_blocked) + "\n";
        out += "wasted_work=" + std::to_string(wasted_work) + "\n";
        return out;
    }
};

// ---------------------------------------------------------------------------
// Run result
// ---------------------------------------------------------------------------

struct AcceptedResult {
    TaskId task;
    JobId job;
    NodeId host;
    TokenId token;
    std::uint64_t digest{0};
    std::uint64_t epoch_version{0};
    SimTime at{0};
};

struct RunResult {
    std::string trace;
    Metrics metrics;
    std::map<NodeId, std::vector<GuestEvent>> committed;
    std::vector<AcceptedResult> accepted;
    std::map<JobId, SimTime> job_completion;
    std::uint64_t final_epoch_version{0};
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

class Simulation {
  public:
    explicit Simulation(Scenario scenario)
        : s_(std::move(scenario)),
          policy_(s_.policy()),
          coord_(Coordinator::from_seed(s_.seed, policy_.policy_id())) {}

    RunResult run() {
        seed_churn();
        while (!queue_.empty() && queue_.top().time <= s_.horizon) {
            Event ev = queue_.top();
            queue_.pop();
            now_ = ev.time;
            seq_ = ev.seq;
            std::visit([&](const auto& payload) { handle(payload); }, ev.payload);
        }
        now_ = s_.horizon;
        sweep();
        audit();
        RunResult out;
        out.trace = std::move(trace_);
        out.metrics = metrics_;
        for (const auto& [id, node] : nodes_) out.committed[id] = node.committed;
        out.accepted = accepted_;
        out.job_completion = job_completion_;
        out.final_epoch_version = coord_.current_epoch().version;
        return out;
    }

  private:
    // -- events -----------------------------------------------------------

    struct ConnectEv {
        NodeId node;
    };
    struct DisconnectEv {
        NodeId node;
    };
    struct EpochDeliveryEv {
        NodeId node;
        std::uint64_t version;
    };
    struct DispatchEv {
        TokenId agent;
    };
    struct ExecStepEv {
        TokenId agent;
    };
    struct NotificationEv {
        Notification n;
        TaskId task;
    };
    struct JobCompleteEv {
        JobId job;
    };
    using EventPayload = std::variant<ConnectEv, DisconnectEv, EpochDeliveryEv, DispatchEv,
                                      ExecStepEv, NotificationEv, JobCompleteEv>;

    struct Event {
        SimTime time{0};
        std::uint64_t seq{0};
        EventPayload payload;
    };

    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.seq > b.seq;
        }
    };

    void schedule(SimTime time, EventPayload payload) {
        queue_.push(Event{time, next_seq_++, std::move(payload)});
    }

    // -- runtime state ----------------------------------------------------

    struct NodeRt {
        const NodeSpec* spec{nullptr};
        bool connected{false};
        std::uint64_t epoch_view{0};
        int automaton_state{0};
        std::vector<GuestEvent> committed;
        bool known_compromised{false};
        Credential credential;
    };

    struct AttemptRt {
        int number{0};
        MissionId mission;
        TokenId token;
        NodeId target;
        SimTime exec_start{-1};
        SimTime exec_end{-1};
        bool executing{false};
    };

    struct TaskRt {
        const TaskSpec* spec{nullptr};
        JobId job;
        NodeId owner;
        int attempts{0};
        bool terminal{false};
        bool completed{false};
        std::optional<AttemptRt> live;
        bool failed_unclassified{false};
        std::map<NodeId, SimTime> cooldown_until;
    };

    struct JobRt {
        const JobSpec* spec{nullptr};
        std::size_t open_tasks{0};
        bool complete_scheduled{false};
    };

    // -- trace writing ----------------------------------------------------

    using Kv = std::pair<std::string, std::string>;

    void trace_line(const char* kind, std::vector<Kv> kvs) {
        std::sort(kvs.begin(), kvs.end(),
                  [](const Kv& a, const Kv& b) { return a.first < b.first; });
        trace_ += std::to_string(now_);
        trace_ += '\t';
        trace_ += std::to_string(seq_);
        trace_ += '\t';
        trace_ += kind;
        trace_ += '\t';
        for (std::size_t i = 0; i < kvs.size(); ++i) {
            if (i) trace_ += ' ';
            trace_ += kvs[i].first;
            trace_ += '=';
            trace_ += kvs[i].second;
        }
        trace_ += '\n';
    }

    static std::string num(std::uint64_t v) { return std::to_string(v); }
    static std::string num(SimTime v) { return std::to_string(v); }
    static std::string hex16(std::uint64_t v) {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = digits[v & 0xF];
            v >>= 4;
        }
        return out;
    }

    // -- setup ------------------------------------------------------------

    void seed_churn() {
        for (const auto& node : s_.nodes) {
            NodeRt rt;
            rt.spec = &node;
            rt.automaton_state = policy_.initial();
            nodes_.emplace(node.id, std::move(rt));
        }
        for (const auto& job : s_.jobs) {
            JobRt jr;
            jr.spec = &job;
            jr.open_tasks = job.tasks.size();
            jobs_.emplace(job.id, jr);
            for (const auto& task : job.tasks) {
                TaskRt tr;
                tr.spec = &task;
                tr.job = job.id;
                tr.owner = job.owner;
                tasks_.emplace(task.id, std::move(tr));
            }
        }
        for (const auto& node : s_.nodes) {
            auto events = churn_process(
                node.churn,
                substream(s_.seed, rng_purpose::kChurn, node.id.value).next_u64(),
                s_.horizon);
            for (const auto& ce : events) {
                if (ce.connect)
                    schedule(ce.time, ConnectEv{node.id});
                else
                    schedule(ce.time, DisconnectEv{node.id});
            }
        }
    }

    // -- epoch plumbing ---------------------------------------------------

    void broadcast_epoch() {
        metrics_.epoch_count += 1;
        const PolicyEpoch& epoch = coord_.current_epoch();
        trace_line("epoch", {{"version", num(epoch.version)},
                             {"members", num(epoch.membership.size())},
                             {"revoked", num(epoch.revoked.size())}});
        for (const auto& [node, version] : disseminate(epoch, epoch.membership)) {
            metrics_.messages += 1;
            schedule(now_ + s_.dissemination_latency, EpochDeliveryEv{node, version});
        }
    }

    const PolicyEpoch& epoch_at(std::uint64_t version) const {
        return coord_.epoch_history().at(version);
    }

    // -- task helpers -----------------------------------------------------

    std::set<NodeId> eligible_nodes() const {
        std::set<NodeId> out;
        for (const auto& [id, node] : nodes_)
            if (node.connected && !node.known_compromised) out.insert(id);
        return out;
    }

    std::optional<NodeId> pick_target(const TaskRt& task) const {
        auto eligible = eligible_nodes();
        std::set<NodeId> cooling;
        for (const auto& [node, until] : task.cooldown_until)
            if (now_ < until) cooling.insert(node);
        // Cooldown is a preference, never a blocker: when every candidate is
        // cooling down the lowest eligible node is used anyway.
        if (auto fresh = select_provider(eligible, cooling)) return fresh;
        return select_provider(eligible, {});
    }

    bool owner_ready(const TaskRt& task) const {
        auto main_it = main_of_.find(task.owner);
        if (main_it == main_of_.end()) return false;
        const AgentInstance& main = agents_.at(main_it->second);
        return !main.terminal();
    }

    AgentInstance& agent(TokenId id) { return agents_.at(id); }

    void dispatch_task(TaskId task_id, TaskRt& task, NodeId target) {
        task.attempts += 1;
        if (task.failed_unclassified) {
            metrics_.tasks_reassigned += 1;
            task.failed_unclassified = false;
        }
        metrics_.tasks_dispatched += 1;

        Mission mission;
        mission.mission_id = MissionId{next_mission_++};
        mission.task = task_id;
        mission.program = task.spec->program;
        mission.target = target;
        mission.required_caps = required_caps(task.spec->program);
        mission.deadline = s_.horizon;

        AgentInstance& parent = agent(main_of_.at(task.owner));
        AgentInstance child = spawn_secondary(parent, mission, coord_);
        TokenId token = child.token().token_id;
        child.begin_migration(target);
        agents_.emplace(token, std::move(child));
        attempt_task_.emplace(token, task_id);

        AttemptRt attempt;
        attempt.number = task.attempts;
        attempt.mission = mission.mission_id;
        attempt.token = token;
        attempt.target = target;
        task.live = attempt;

        trace_line("agent", {{"token", num(token.value)},
                             {"kind", "secondary"},
                             {"state", "instantiated"},
                             {"parent", num(parent.token().token_id.value)},
                             {"mission", num(mission.mission_id.value)},
                             {"caps", cap_set_names(mission.required_caps)}});
        trace_line("agent", {{"token", num(token.value)},
                             {"kind", "secondary"},
                             {"state", "migrating"},
                             {"target", num(target.value)}});
        trace_line("task", {{"task", num(task_id.value)},
                            {"job", num(task.job.value)},
                            {"status", "dispatched"},
                            {"target", num(target.value)},
                            {"attempts", num(static_cast<std::uint64_t>(task.attempts))}});

        metrics_.messages += 1;
        schedule(now_ + s_.dispatch_latency, DispatchEv{token});
    }

    void give_up(TaskId task_id, TaskRt& task) {
        metrics_.giveups += 1;
        task.failed_unclassified = false;
        task.terminal = true;
        trace_line("task",
                   {{"task", num(task_id.value)},
                    {"job", num(task.job.value)},
                    {"status", "giveup"},
                    {"attempts", num(static_cast<std::uint64_t>(task.attempts))}});
    }

    void scan_pending() {
        for (auto& [task_id, task] : tasks_) {
            if (task.terminal || task.live) continue;
            // The budget caps dispatches even when the failure was never
            // adjudicated (owner down at the time).
            if (task.attempts >= s_.retry_budget) {
                give_up(task_id, task);
                continue;
            }
            if (!owner_ready(task)) continue;
            auto target = pick_target(task);
            if (!target) continue;
            dispatch_task(task_id, task, *target);
        }
    }

    // A failed attempt has been cleared from task.live; decide what follows.
    void resolve_failed_attempt(TaskId task_id, TaskRt& task) {
        if (task.attempts >= s_.retry_budget) {
            give_up(task_id, task);
            return;
        }
        if (owner_ready(task)) {
            if (auto target = pick_target(task)) {
                dispatch_task(task_id, task, *target);
                return;
            }
        }
        trace_line("task", {{"task", num(task_id.value)},
                            {"job", num(task.job.value)},
                            {"status", "pending"}});
    }

    void fail_attempt(TaskRt& task, bool cool_target) {
        AttemptRt attempt = *task.live;
        task.live.reset();
        attempt_task_.erase(attempt.token);
        task.failed_unclassified = true;
        if (cool_target) task.cooldown_until[attempt.target] = now_ + s_.cooldown;
    }

    void complete_task(TaskId task_id, TaskRt& task) {
        if (task.live) {
            attempt_task_.erase(task.live->token);
            task.live.reset();
        }
        task.terminal = true;
        task.completed = true;
        metrics_.tasks_completed += 1;
        trace_line("task",
                   {{"task", num(task_id.value)},
                    {"job", num(task.job.value)},
                    {"status", "completed"},
                    {"attempts", num(static_cast<std::uint64_t>(task.attempts))}});
        JobRt& job = jobs_.at(task.job);
        job.open_tasks -= 1;
        if (job.open_tasks == 0 && !job.complete_scheduled) {
            job.complete_scheduled = true;
            schedule(now_, JobCompleteEv{task.job});
        }
    }

    void send_notification(NotificationKind kind, const AgentInstance& child,
                           TaskId task_id, std::uint64_t digest = 0) {
        Notification n;
        n.from = child.token().token_id;
        n.to = child.token().parent.value();
        n.kind = kind;
        n.at = now_;
        n.result_digest = digest;
        metrics_.messages += 1;
        schedule(now_, NotificationEv{n, task_id});
    }

    void record_violation(TaskId task_id, TokenId agent_token, NodeId host,
                          std::size_t index, bool refused) {
        metrics_.violations_blocked += 1;
        trace_line("violation", {{"task", num(task_id.value)},
                                 {"node", num(host.value)},
                                 {"agent", num(agent_token.value)},
                                 {"mechanism", mechanism_name(s_.mechanism)},
                                 {"kind", refused ? "rejected_static" : "truncated"},
                                 {"index", num(static_cast<std::uint64_t>(index))}});
    }

    void commit_events(NodeRt& host, NodeId host_id, TokenId agent_token,
                       const std::vector<GuestEvent>& events, int end_state) {
        if (events.empty()) return;
        host.committed.insert(host.committed.end(), events.begin(), events.end());
        host.automaton_state = end_state;
        trace_line("commit", {{"node", num(host_id.value)},
                              {"agent", num(agent_token.value)},
                              {"events", trace_events_string(events)},
                              {"state", policy_.state_name(end_state)}});
    }

    // -- event handlers ---------------------------------------------------

    void handle(const ConnectEv& ev) {
        NodeRt& node = nodes_.at(ev.node);
        if (node.connected) return;
        trace_line("connect", {{"node", num(ev.node.value)}});

        SubscriptionDecision decision = coord_.subscribe(ev.node, CapSet::all(), {});
        const auto& ok = std::get<SubscriptionAccepted>(decision);
        node.connected = true;
        node.epoch_view = coord_.current_epoch().version;
        node.credential = *coord_.host_credential(ev.node);
        if (node.spec->compromised) node.credential.secret_tag.bytes[0] ^= 0xFF;

        AgentInstance main = spawn_main(decision);
        TokenId main_token = main.token().token_id;
        agents_.emplace(main_token, std::move(main));
        main_of_[ev.node] = main_token;

        trace_line("subscription", {{"node", num(ev.node.value)},
                                    {"token", num(ok.root_token.token_id.value)},
                                    {"caps", cap_set_names(ok.root_token.caps)},
                                    {"epoch", num(node.epoch_view)}});
        trace_line("agent", {{"token", num(main_token.value)},
                             {"kind", "main"},
                             {"state", "instantiated"},
                             {"node", num(ev.node.value)}});
        broadcast_epoch();
        scan_pending();
    }

    void handle(const DisconnectEv& ev) {
        NodeRt& node = nodes_.at(ev.node);
        if (!node.connected) return;
        trace_line("disconnect", {{"node", num(ev.node.value)}});
        node.connected = false;

        // Work running on the vanished host fails immediately.
        for (auto& [task_id, task] : tasks_) {
            if (!task.live || !task.live->executing || task.live->target != ev.node)
                continue;
            AgentInstance& child = agent(task.live->token);
            metrics_.wasted_work += now_ - task.live->exec_start;
            send_notification(NotificationKind::HostUnreachable, child, task_id);
            child.destroy(DestroyCause::MissionEnd);
            trace_line("agent", {{"token", num(task.live->token.value)},
                                 {"kind", "secondary"},
                                 {"state", "destroyed"},
                                 {"cause", destroy_cause_name(DestroyCause::MissionEnd)}});
            fail_attempt(task, /*cool_target=*/true);
        }

        auto main_it = main_of_.find(ev.node);
        if (main_it != main_of_.end()) {
            AgentInstance& main = agent(main_it->second);
            if (!main.terminal()) {
                main.destroy(DestroyCause::Disconnect);
                trace_line("agent", {{"token", num(main_it->second.value)},
                                     {"kind", "main"},
                                     {"state", "destroyed"},
                                     {"cause", destroy_cause_name(DestroyCause::Disconnect)}});
            }
            main_of_.erase(main_it);
        }

        coord_.disconnect(ev.node);
        broadcast_epoch();
    }

    void handle(const EpochDeliveryEv& ev) {
        NodeRt& node = nodes_.at(ev.node);
        if (!node.connected || ev.version <= node.epoch_view) return;
        node.epoch_view = ev.version;
        trace_line("epoch_delivery",
                   {{"node", num(ev.node.value)}, {"version", num(ev.version)}});

        // Revocations travel with the epoch: agents hosted here whose chain
        // no longer validates are torn down.
        const PolicyEpoch& epoch = epoch_at(ev.version);
        for (auto& [task_id, task] : tasks_) {
            if (!task.live || !task.live->executing || task.live->target != ev.node)
                continue;
            AgentInstance& child = agent(task.live->token);
            if (coord_.validate_chain(child.token(), epoch).valid()) continue;
            metrics_.wasted_work += now_ - task.live->exec_start;
            child.destroy(DestroyCause::ParentRevoked);
            trace_line("agent",
                       {{"token", num(task.live->token.value)},
                        {"kind", "secondary"},
                        {"state", "destroyed"},
                        {"cause", destroy_cause_name(DestroyCause::ParentRevoked)}});
            fail_attempt(task, /*cool_target=*/false);
            trace_line("task", {{"task", num(task_id.value)},
                                {"job", num(task.job.value)},
                                {"status", "pending"}});
        }
    }

    void handle(const DispatchEv& ev) {
        auto task_it = attempt_task_.find(ev.agent);
        if (task_it == attempt_task_.end()) return;
        TaskId task_id = task_it->second;
        TaskRt& task = tasks_.at(task_id);
        AttemptRt& attempt = *task.live;
        AgentInstance& child = agent(ev.agent);
        NodeId target = attempt.target;
        NodeRt& host = nodes_.at(target);

        auto base_kvs = [&](const char* outcome) {
            return std::vector<Kv>{{"agent", num(ev.agent.value)},
                                   {"mission", num(attempt.mission.value)},
                                   {"task", num(task_id.value)},
                                   {"node", num(target.value)},
                                   {"outcome", outcome}};
        };

        if (!host.connected) {
            trace_line("dispatch", base_kvs("host_unreachable"));
            send_notification(NotificationKind::HostUnreachable, child, task_id);
            child.destroy(DestroyCause::MissionEnd);
            trace_line("agent", {{"token", num(ev.agent.value)},
                                 {"kind", "secondary"},
                                 {"state", "destroyed"},
                                 {"cause", destroy_cause_name(DestroyCause::MissionEnd)}});
            fail_attempt(task, /*cool_target=*/true);
            return;
        }

        // The mobile agent may carry a fresher epoch than a stale host; the
        // handshake uses whichever view is newer.
        std::uint64_t version = std::max(host.epoch_view, child.token().issued_epoch);
        HandshakeResult hs = coord_.handshake(child.token(), host.credential,
                                              epoch_at(version));
        if (const auto* fail = std::get_if<HandshakeFailure>(&hs)) {
            if (fail->side == HandshakeSide::Host) {
                trace_line("dispatch", base_kvs("compromised"));
                host.known_compromised = true;
                send_notification(NotificationKind::Compromised, child, task_id);
                child.destroy(DestroyCause::Compromise);
                trace_line("agent",
                           {{"token", num(ev.agent.value)},
                            {"kind", "secondary"},
                            {"state", "destroyed"},
                            {"cause", destroy_cause_name(DestroyCause::Compromise)}});
                fail_attempt(task, /*cool_target=*/true);
            } else {
                // Agent-side failure means the delegation chain died while
                // the agent was in flight; the parent is gone, nobody to
                // notify.
                trace_line("dispatch", base_kvs("parent_revoked"));
                child.destroy(DestroyCause::ParentRevoked);
                trace_line("agent",
                           {{"token", num(ev.agent.value)},
                            {"kind", "secondary"},
                            {"state", "destroyed"},
                            {"cause", destroy_cause_name(DestroyCause::ParentRevoked)}});
                fail_attempt(task, /*cool_target=*/false);
                trace_line("task", {{"task", num(task_id.value)},
                                    {"job", num(task.job.value)},
                                    {"status", "pending"}});
            }
            return;
        }

        if (s_.mechanism == Mechanism::StaticThenRun) {
            Verdict v = static_analyze(policy_, task.spec->program, host.automaton_state);
            if (const auto* rej = std::get_if<RejectedStatically>(&v)) {
                trace_line("dispatch", base_kvs("refused"));
                child.activate();
                record_violation(task_id, ev.agent, target,
                                 rej->witness.events.size() - 1, /*refused=*/true);
                send_notification(NotificationKind::PolicyViolation, child, task_id);
                child.complete();
                trace_line("agent", {{"token", num(ev.agent.value)},
                                     {"kind", "secondary"},
                                     {"state", "completed"}});
                complete_task(task_id, task);
                return;
            }
        }

        trace_line("dispatch", base_kvs("active"));
        child.activate();
        trace_line("agent", {{"token", num(ev.agent.value)},
                             {"kind", "secondary"},
                             {"state", "active"},
                             {"node", num(target.value)}});
        attempt.executing = true;
        attempt.exec_start = now_;
        attempt.exec_end = now_ + effective_duration(task.spec->duration, s_.busy_fraction);
        schedule(attempt.exec_end, ExecStepEv{ev.agent});
    }

    void handle(const ExecStepEv& ev) {
        auto task_it = attempt_task_.find(ev.agent);
        if (task_it == attempt_task_.end()) return;  // attempt already failed
        TaskId task_id = task_it->second;
        TaskRt& task = tasks_.at(task_id);
        AttemptRt& attempt = *task.live;
        if (!attempt.executing || attempt.exec_end != now_) return;
        AgentInstance& child = agent(ev.agent);
        NodeId target = attempt.target;
        NodeRt& host = nodes_.at(target);

        auto base_kvs = [&](const char* outcome) {
            return std::vector<Kv>{{"agent", num(ev.agent.value)},
                                   {"mission", num(attempt.mission.value)},
                                   {"task", num(task_id.value)},
                                   {"node", num(target.value)},
                                   {"outcome", outcome}};
        };

        bool hostile = host.spec->compromised ||
                       (host.spec->compromise_at && *host.spec->compromise_at <= now_);
        if (hostile) {
            trace_line("exec_step", base_kvs("hostile"));
            host.known_compromised = true;
            metrics_.wasted_work += now_ - attempt.exec_start;
            send_notification(NotificationKind::Compromised, child, task_id);
            child.destroy(DestroyCause::Hostile);
            trace_line("agent", {{"token", num(ev.agent.value)},
                                 {"kind", "secondary"},
                                 {"state", "destroyed"},
                                 {"cause", destroy_cause_name(DestroyCause::Hostile)}});
            fail_attempt(task, /*cool_target=*/true);
            return;
        }

        const Mission mission{attempt.mission, task_id, task.spec->program, target,
                              required_caps(task.spec->program), s_.horizon};
        BranchOracle oracle = make_oracle(attempt.mission, task.spec->program);
        MissionExecution exec = execute_mission(policy_, mission, s_.mechanism,
                                                std::move(oracle), host.automaton_state);
        // Host-side work is finished; only result delivery remains, so churn
        // on this host no longer touches the attempt.
        attempt.executing = false;

        if (const auto* done = std::get_if<CompletedOutcome>(&exec.outcome)) {
            std::vector<Kv> kvs = base_kvs("completed");
            if (s_.mechanism == Mechanism::Combined)
                kvs.push_back({"guards", num(static_cast<std::uint64_t>(exec.guard_count))});
            trace_line("exec_step", std::move(kvs));
            commit_events(host, target, ev.agent, done->trace.events, exec.end_state);
            send_notification(NotificationKind::MissionComplete, child, task_id,
                              done->result_digest);
            child.complete();
            trace_line("agent", {{"token", num(ev.agent.value)},
                                 {"kind", "secondary"},
                                 {"state", "completed"}});
            return;
        }

        const auto& tr = std::get<TruncatedOutcome>(exec.outcome);
        std::vector<Kv> kvs = base_kvs(tr.refused_statically ? "refused" : "truncated");
        if (s_.mechanism == Mechanism::Combined)
            kvs.push_back({"guards", num(static_cast<std::uint64_t>(exec.guard_count))});
        trace_line("exec_step", std::move(kvs));
        commit_events(host, target, ev.agent, tr.trace.events, exec.end_state);
        record_violation(task_id, ev.agent, target, tr.violating_index,
                         tr.refused_statically);
        send_notification(NotificationKind::PolicyViolation, child, task_id);
        child.complete();
        trace_line("agent", {{"token", num(ev.agent.value)},
                             {"kind", "secondary"},
                             {"state", "completed"}});
        complete_task(task_id, task);
    }

    void handle(const NotificationEv& ev) {
        trace_line("notification", {{"kind", notification_kind_name(ev.n.kind)},
                                    {"from", num(ev.n.from.value)},
                                    {"to", num(ev.n.to.value)}});
        TaskRt& task = tasks_.at(ev.task);

        auto parent_it = agents_.find(ev.n.to);
        bool parent_alive = parent_it != agents_.end() && !parent_it->second.terminal();

        switch (ev.n.kind) {
            case NotificationKind::MissionComplete: {
                const CapabilityToken token = *coord_.lookup(ev.n.from);
                NodeId host = agent(ev.n.from).location().value();
                SimTime effective =
                    effective_duration(task.spec->duration, s_.busy_fraction);
                if (!parent_alive) {
                    trace_line("result", {{"task", num(ev.task.value)},
                                          {"job", num(task.job.value)},
                                          {"digest", hex16(ev.n.result_digest)},
                                          {"token", num(ev.n.from.value)},
                                          {"status", "dropped"}});
                    metrics_.wasted_work += effective;
                    fail_attempt(task, /*cool_target=*/false);
                    resolve_failed_attempt(ev.task, task);
                    return;
                }
                bool valid = coord_.validate_chain(token, coord_.current_epoch()).valid();
                if (!valid) {
                    trace_line("result", {{"task", num(ev.task.value)},
                                          {"job", num(task.job.value)},
                                          {"digest", hex16(ev.n.result_digest)},
                                          {"token", num(ev.n.from.value)},
                                          {"status", "rejected"},
                                          {"epoch", num(coord_.current_epoch().version)}});
                    metrics_.wasted_work += effective;
                    fail_attempt(task, /*cool_target=*/false);
                    resolve_failed_attempt(ev.task, task);
                    return;
                }
                std::uint64_t version = coord_.current_epoch().version;
                trace_line("result", {{"task", num(ev.task.value)},
                                      {"job", num(task.job.value)},
                                      {"digest", hex16(ev.n.result_digest)},
                                      {"token", num(ev.n.from.value)},
                                      {"status", "accepted"},
                                      {"epoch", num(version)}});
                accepted_.push_back({ev.task, task.job, host, ev.n.from,
                                     ev.n.result_digest, version, now_});
                complete_task(ev.task, task);
                if (!coord_.revoke(ev.n.from).empty()) broadcast_epoch();
                return;
            }
            case NotificationKind::PolicyViolation:
                // Task bookkeeping happened at the blocking site; the parent
                // just learns about it. Clean up the finished delegation.
                if (!coord_.revoke(ev.n.from).empty()) broadcast_epoch();
                return;
            case NotificationKind::HostUnreachable:
            case NotificationKind::HandshakeFailed:
            case NotificationKind::Compromised: {
                if (!coord_.revoke(ev.n.from).empty()) broadcast_epoch();
                if (task.terminal || task.live) return;
                if (!parent_alive) {
                    trace_line("task", {{"task", num(ev.task.value)},
                                        {"job", num(task.job.value)},
                                        {"status", "pending"}});
                    return;
                }
                resolve_failed_attempt(ev.task, task);
                return;
            }
        }
    }

    void handle(const JobCompleteEv& ev) {
        metrics_.jobs_completed += 1;
        metrics_.job_latency_total += now_;
        job_completion_[ev.job] = now_;
        trace_line("job_complete",
                   {{"job", num(ev.job.value)}, {"latency", num(now_)}});
    }

    BranchOracle make_oracle(MissionId mission, const GuestProgram& program) {
        BranchOracle oracle;
        std::size_t n = branch_count(program);
        if (n == 0) return oracle;
        Rng rng(substream(s_.seed, rng_purpose::kBranch, mission.value));
        oracle.bits.resize(n);
        for (std::size_t i = 0; i < n; ++i) oracle.bits[i] = rng.next_bool();
        return oracle;
    }

    // -- end of run -------------------------------------------------------

    void sweep() {
        for (auto& [task_id, task] : tasks_) {
            if (task.live) {
                if (task.live->executing)
                    metrics_.wasted_work += s_.horizon - task.live->exec_start;
                attempt_task_.erase(task.live->token);
                task.live.reset();
                metrics_.giveups += 1;
                continue;
            }
            if (task.failed_unclassified) {
                task.failed_unclassified = false;
                metrics_.giveups += 1;
            }
        }
    }

    void audit() const {
        for (const auto& [id, node] : nodes_) {
            int state = policy_.initial();
            for (GuestEvent e : node.committed) {
                auto next = policy_.step(state, e);
                if (!next)
                    throw InvariantBreach("committed events violate the policy on node " +
                                          to_string(id));
                state = *next;
            }
            if (state != node.automaton_state)
                throw InvariantBreach("automaton state drifted on node " + to_string(id));
        }
        if (metrics_.tasks_dispatched !=
            metrics_.tasks_completed + metrics_.tasks_reassigned + metrics_.giveups)
            throw InvariantBreach("attempt conservation failed");
        for (const auto& r : accepted_) {
            auto token = coord_.lookup(r.token);
            if (!token) throw InvariantBreach("accepted result has no token");
            if (!coord_.validate_chain(*token, epoch_at(r.epoch_version)).valid())
                throw InvariantBreach("accepted result fails validation at its epoch");
            const NodeRt& host = nodes_.at(r.host);
            bool hostile_then = host.spec->compromised ||
                (host.spec->compromise_at && r.at >= *host.spec->compromise_at);
            if (hostile_then)
                throw InvariantBreach("result accepted from a compromised node");
        }
    }

    // -- members ----------------------------------------------------------

    Scenario s_;
    SecurityAutomaton policy_;
    Coordinator coord_;

    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::uint64_t next_seq_{0};
    SimTime now_{0};
    std::uint64_t seq_{0};

    std::map<NodeId, NodeRt> nodes_;
    std::map<TaskId, TaskRt> tasks_;
    std::map<JobId, JobRt> jobs_;
    std::map<TokenId, AgentInstance> agents_;
    std::map<NodeId, TokenId> main_of_;
    std::map<TokenId, TaskId> attempt_task_;
    std::uint64_t next_mission_{1};

    std::string trace_;
    Metrics metrics_;
    std::vector<AcceptedResult> accepted_;
    std::map<JobId, SimTime> job_completion_;
};

inline RunResult run_scenario(Scenario scenario) {
    Simulation sim(std::move(scenario));
    return sim.run();
}

}  // namespace vgrid

#endif
