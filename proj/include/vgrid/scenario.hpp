#ifndef VGRID_SCENARIO_HPP
#define VGRID_SCENARIO_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vgrid/agent.hpp"
#include "vgrid/automaton.hpp"
#include "vgrid/guest.hpp"
#include "vgrid/ids.hpp"
#include "vgrid/rng.hpp"

namespace vgrid {

class ScenarioError : public std::runtime_error {
  public:
    ScenarioError(int line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message),
          line_(line) {}

    int line() const { return line_; }

  private:
    int line_;
};

// Exact fraction, kept unreduced; the simulator never touches floating point
// for timing.
struct Rational {
    std::int64_t num{0};
    std::int64_t den{1};
};

// ceil(duration * den / (den - num)): the provider owner's local load
// stretches task time without making the node unavailable.
inline SimTime effective_duration(SimTime duration, const Rational& busy) {
    std::int64_t free = busy.den - busy.num;
    return (duration * busy.den + free - 1) / free;
}

// ---------------------------------------------------------------------------
// Churn
// ---------------------------------------------------------------------------

struct ChurnAlwaysOn {};
struct ChurnScript {
    struct Step {
        SimTime time{0};
        bool connect{true};
    };
    std::vector<Step> steps;
};
struct ChurnExp {
    SimTime mean_on{1};
    SimTime mean_off{1};
    bool start_on{true};
};
using ChurnSpec = std::variant<ChurnAlwaysOn, ChurnScript, ChurnExp>;

struct ChurnEvent {
    SimTime time{0};
    bool connect{true};
};

// Expands a churn spec into the alternating connect/disconnect sequence,
// truncated at the horizon. stream_seed must already be substreamed per
// node so unrelated draws never shift it.
inline std::vector<ChurnEvent> churn_process(const ChurnSpec& spec,
                                             std::uint64_t stream_seed, SimTime horizon) {
    std::vector<ChurnEvent> out;
    if (std::holds_alternative<ChurnAlwaysOn>(spec)) {
        out.push_back({0, true});
        return out;
    }
    if (const auto* script = std::get_if<ChurnScript>(&spec)) {
        for (const auto& step : script->steps) {
            if (step.time > horizon) break;
            out.push_back({step.time, step.connect});
        }
        return out;
    }
    const auto& exp = std::get<ChurnExp>(spec);
    Rng rng(stream_seed);
    bool on = exp.start_on;
    SimTime t = 0;
    if (on) {
        out.push_back({0, true});
    } else {
        t = rng.next_exponential(exp.mean_off);
        if (t > horizon) return out;
        out.push_back({t, true});
        on = true;
    }
    while (true) {
        SimTime hold = rng.next_exponential(on ? exp.mean_on : exp.mean_off);
        t += hold;
        if (t > horizon) return out;
        on = !on;
        out.push_back({t, on});
    }
}

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

struct NodeSpec {
    NodeId id;
    bool compromised{false};              // hostile from the start
    std::optional<SimTime> compromise_at; // honest until this time
    ChurnSpec churn;
};

struct TaskSpec {
    TaskId id;          // global, in file order
    JobId job;
    GuestProgram program;
    SimTime duration{1};
};

struct JobSpec {
    JobId id;
    NodeId owner;
    std::vector<TaskSpec> tasks;
};

struct Scenario {
    std::uint64_t seed{0};
    SimTime horizon{1000};
    std::vector<NodeSpec> nodes;
    std::vector<JobSpec> jobs;
    std::vector<SecurityAutomaton> policies;
    PolicyId active_policy;
    Mechanism mechanism{Mechanism::Monitor};
    SimTime dissemination_latency{1};
    SimTime dispatch_latency{1};
    Rational busy_fraction{1, 20};
    int retry_budget{8};
    SimTime cooldown{10};

    const SecurityAutomaton& policy() const {
        for (const auto& p : policies)
            if (p.policy_id() == active_policy) return p;
        throw std::logic_error("active policy not found");
    }
};

// ---------------------------------------------------------------------------
// Scenario file parsing
// ---------------------------------------------------------------------------
//
// Sections [sim], [policy], [nodes], [jobs]; `#` comments. [policy] holds
// the policy file syntax verbatim; a task block holds guest program text
// until `endtask`.

namespace scenario_detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == '#') break;
        if (c == ' ' || c == '\t' || c == '\r') {
            if (!cur.empty()) {
                fields.push_back(cur);
                cur.clear();
            }
            continue;
        }
        cur.push_back(c);
    }
    if (!cur.empty()) fields.push_back(cur);
    return fields;
}

inline std::uint64_t parse_u64(const std::string& s, int line, const char* what) {
    if (s.empty()) throw ScenarioError(line, std::string("expected ") + what);
    std::uint64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9')
            throw ScenarioError(line, std::string("bad ") + what + " '" + s + "'");
        std::uint64_t next = v * 10 + static_cast<std::uint64_t>(c - '0');
        if (next < v) throw ScenarioError(line, std::string(what) + " overflows");
        v = next;
    }
    return v;
}

inline Rational parse_fraction(const std::string& s, int line) {
    auto dot = s.find('.');
    std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
    if (whole.empty() || (dot != std::string::npos && frac.empty()))
        throw ScenarioError(line, "bad fraction '" + s + "'");
    if (frac.size() > 9) throw ScenarioError(line, "fraction '" + s + "' too precise");
    std::uint64_t w = parse_u64(whole, line, "fraction");
    std::uint64_t num = w;
    std::uint64_t den = 1;
    for (char c : frac) {
        if (c < '0' || c > '9') throw ScenarioError(line, "bad fraction '" + s + "'");
        num = num * 10 + static_cast<std::uint64_t>(c - '0');
        den *= 10;
    }
    Rational r{static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
    if (r.num > r.den) throw ScenarioError(line, "busy_fraction out of range [0,1)");
    if (r.num == r.den)
        throw ScenarioError(line, "busy_fraction 1 leaves no provider time");
    return r;
}

inline ChurnSpec parse_churn(const std::vector<std::string>& fields, std::size_t at,
                             int line) {
    if (at >= fields.size()) throw ScenarioError(line, "missing churn spec");
    const std::string& kind = fields[at];
    if (kind == "always-on") {
        if (at + 1 != fields.size())
            throw ScenarioError(line, "always-on takes no arguments");
        return ChurnAlwaysOn{};
    }
    if (kind == "script") {
        ChurnScript script;
        for (std::size_t i = at + 1; i < fields.size(); ++i) {
            auto sep = fields[i].find('@');
            if (sep == std::string::npos)
                throw ScenarioError(line, "script step needs connect@<t> or disconnect@<t>");
            std::string action = fields[i].substr(0, sep);
            SimTime t = static_cast<SimTime>(
                parse_u64(fields[i].substr(sep + 1), line, "script time"));
            bool connect;
            if (action == "connect")
                connect = true;
            else if (action == "disconnect")
                connect = false;
            else
                throw ScenarioError(line, "unknown script action '" + action + "'");
            if (!script.steps.empty()) {
                if (t <= script.steps.back().time)
                    throw ScenarioError(line, "script times must strictly increase");
                if (connect == script.steps.back().connect)
                    throw ScenarioError(line, "script must alternate connect/disconnect");
            } else if (!connect) {
                throw ScenarioError(line, "script must start with connect");
            }
            script.steps.push_back({t, connect});
        }
        if (script.steps.empty()) throw ScenarioError(line, "script needs at least one step");
        return script;
    }
    if (kind == "exp") {
        ChurnExp exp;
        bool have_on = false, have_off = false, have_start = false;
        for (std::size_t i = at + 1; i < fields.size(); ++i) {
            auto sep = fields[i].find('=');
            if (sep == std::string::npos)
                throw ScenarioError(line, "exp takes on=, off=, start=");
            std::string key = fields[i].substr(0, sep);
            std::string value = fields[i].substr(sep + 1);
            if (key == "on") {
                exp.mean_on = static_cast<SimTime>(parse_u64(value, line, "mean on-time"));
                have_on = true;
            } else if (key == "off") {
                exp.mean_off = static_cast<SimTime>(parse_u64(value, line, "mean off-time"));
                have_off = true;
            } else if (key == "start") {
                if (value == "on")
                    exp.start_on = true;
                else if (value == "off")
                    exp.start_on = false;
                else
                    throw ScenarioError(line, "start must be on or off");
                have_start = true;
            } else {
                throw ScenarioError(line, "unknown exp key '" + key + "'");
            }
        }
        if (!have_on || !have_off || !have_start)
            throw ScenarioError(line, "exp needs on=, off= and start=");
        if (exp.mean_on < 1 || exp.mean_off < 1)
            throw ScenarioError(line, "exp means must be at least 1");
        return exp;
    }
    throw ScenarioError(line, "unknown churn spec '" + kind + "'");
}

}  // namespace scenario_detail

inline Scenario load_scenario_text(const std::string& text) {
    using scenario_detail::parse_u64;
    using scenario_detail::split_fields;

    Scenario s;
    bool horizon_set = false;
    bool active_policy_set = false;

    enum class Section { None, Sim, Policy, Nodes, Jobs };
    Section section = Section::None;

    std::vector<std::pair<int, std::string>> policy_lines;

    std::optional<JobSpec> cur_job;
    int cur_job_line = 0;
    bool in_task = false;
    SimTime task_duration = 0;
    int task_line = 0;
    std::string task_text;
    std::uint64_t next_task = 1;

    auto finish_task = [&](int line) {
        GuestProgram program;
        try {
            program = parse_program(task_text);
        } catch (const SyntaxError& e) {
            throw ScenarioError(task_line + e.line(), "task program: " + std::string(e.what()));
        } catch (const GuestError& e) {
            throw ScenarioError(task_line, "task program: " + std::string(e.what()));
        }
        (void)line;
        cur_job->tasks.push_back(
            {TaskId{next_task++}, cur_job->id, std::move(program), task_duration});
        in_task = false;
        task_text.clear();
    };

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string raw = text.substr(
            start, end == std::string::npos ? std::string::npos : end - start);
        ++line_no;
        start = end == std::string::npos ? text.size() + 1 : end + 1;

        auto fields = split_fields(raw);

        if (!fields.empty() && fields[0].size() >= 2 && fields[0].front() == '[' &&
            fields[0].back() == ']' && fields.size() == 1) {
            if (in_task) throw ScenarioError(line_no, "section inside task block");
            if (cur_job) throw ScenarioError(line_no, "section inside job block");
            const std::string& name = fields[0];
            if (name == "[sim]")
                section = Section::Sim;
            else if (name == "[policy]")
                section = Section::Policy;
            else if (name == "[nodes]")
                section = Section::Nodes;
            else if (name == "[jobs]")
                section = Section::Jobs;
            else
                throw ScenarioError(line_no, "unknown section " + name);
            continue;
        }

        if (section == Section::Policy) {
            policy_lines.emplace_back(line_no, raw);
            continue;
        }
        if (in_task) {
            if (fields.size() == 1 && fields[0] == "endtask") {
                finish_task(line_no);
                continue;
            }
            task_text += raw;
            task_text += '\n';
            continue;
        }
        if (fields.empty()) continue;

        switch (section) {
            case Section::None:
                throw ScenarioError(line_no, "content before any section");
            case Section::Sim: {
                if (fields.size() != 3 || fields[1] != "=")
                    throw ScenarioError(line_no, "expected: <key> = <value>");
                const std::string& key = fields[0];
                const std::string& value = fields[2];
                if (key == "seed") {
                    s.seed = parse_u64(value, line_no, "seed");
                } else if (key == "horizon") {
                    s.horizon = static_cast<SimTime>(parse_u64(value, line_no, "horizon"));
                    horizon_set = true;
                } else if (key == "dissemination_latency") {
                    s.dissemination_latency =
                        static_cast<SimTime>(parse_u64(value, line_no, "latency"));
                } else if (key == "dispatch_latency") {
                    s.dispatch_latency =
                        static_cast<SimTime>(parse_u64(value, line_no, "latency"));
                } else if (key == "busy_fraction") {
                    s.busy_fraction = scenario_detail::parse_fraction(value, line_no);
                } else if (key == "mechanism") {
                    auto m = mechanism_from_name(value);
                    if (!m) throw ScenarioError(line_no, "unknown mechanism '" + value + "'");
                    s.mechanism = *m;
                } else if (key == "active_policy") {
                    s.active_policy = value;
                    active_policy_set = true;
                } else if (key == "retry_budget") {
                    s.retry_budget = static_cast<int>(parse_u64(value, line_no, "budget"));
                    if (s.retry_budget < 1)
                        throw ScenarioError(line_no, "retry_budget must be at least 1");
                } else if (key == "cooldown") {
                    s.cooldown = static_cast<SimTime>(parse_u64(value, line_no, "cooldown"));
                } else {
                    throw ScenarioError(line_no, "unknown sim key '" + key + "'");
                }
                break;
            }
            case Section::Nodes: {
                if (fields[0] != "node")
                    throw ScenarioError(line_no, "expected node line");
                if (fields.size() < 3)
                    throw ScenarioError(line_no, "expected: node <id> honest|compromised <churn>");
                NodeSpec node;
                node.id = NodeId{parse_u64(fields[1], line_no, "node id")};
                if (fields[2] == "honest")
                    node.compromised = false;
                else if (fields[2] == "compromised")
                    node.compromised = true;
                else
                    throw ScenarioError(line_no, "expected honest or compromised");
                std::size_t at = 3;
                if (at < fields.size() && fields[at].rfind("compromise-at=", 0) == 0) {
                    if (node.compromised)
                        throw ScenarioError(line_no, "compromise-at requires an honest node");
                    node.compromise_at = static_cast<SimTime>(
                        parse_u64(fields[at].substr(14), line_no, "compromise time"));
                    ++at;
                }
                node.churn = scenario_detail::parse_churn(fields, at, line_no);
                for (const auto& other : s.nodes)
                    if (other.id == node.id)
                        throw ScenarioError(line_no,
                                            "duplicate node id " + to_string(node.id));
                s.nodes.push_back(std::move(node));
                break;
            }
            case Section::Jobs: {
                const std::string& kw = fields[0];
                if (kw == "job") {
                    if (cur_job) throw ScenarioError(line_no, "nested job");
                    if (fields.size() != 4 || fields[2] != "owner")
                        throw ScenarioError(line_no, "expected: job <id> owner <node>");
                    JobSpec job;
                    job.id = JobId{parse_u64(fields[1], line_no, "job id")};
                    job.owner = NodeId{parse_u64(fields[3], line_no, "owner node id")};
                    for (const auto& other : s.jobs)
                        if (other.id == job.id)
                            throw ScenarioError(line_no,
                                                "duplicate job id " + to_string(job.id));
                    cur_job = std::move(job);
                    cur_job_line = line_no;
                } else if (kw == "task") {
                    if (!cur_job) throw ScenarioError(line_no, "task outside job");
                    if (fields.size() != 3 || fields[1] != "duration")
                        throw ScenarioError(line_no, "expected: task duration <d>");
                    task_duration =
                        static_cast<SimTime>(parse_u64(fields[2], line_no, "duration"));
                    if (task_duration < 1)
                        throw ScenarioError(line_no, "duration must be at least 1");
                    in_task = true;
                    task_line = line_no;
                    task_text.clear();
                } else if (kw == "endjob") {
                    if (!cur_job) throw ScenarioError(line_no, "endjob outside job");
                    if (cur_job->tasks.empty())
                        throw ScenarioError(cur_job_line, "job " + to_string(cur_job->id) +
                                                              " has no tasks");
                    s.jobs.push_back(std::move(*cur_job));
                    cur_job.reset();
                } else {
                    throw ScenarioError(line_no, "unknown jobs keyword '" + kw + "'");
                }
                break;
            }
            case Section::Policy:
                break;  // handled above
        }
    }

    if (in_task) throw ScenarioError(task_line, "unterminated task block");
    if (cur_job) throw ScenarioError(cur_job_line, "unterminated job block");

    std::string policy_text;
    for (const auto& [ln, content] : policy_lines) {
        policy_text += content;
        policy_text += '\n';
    }
    try {
        s.policies = parse_policies(policy_text);
    } catch (const PolicyParseError& e) {
        int mapped = e.line() >= 1 && static_cast<std::size_t>(e.line()) <= policy_lines.size()
                         ? policy_lines[static_cast<std::size_t>(e.line()) - 1].first
                         : 1;
        throw ScenarioError(mapped, "policy: " + std::string(e.what()));
    }

    if (horizon_set && s.horizon <= 0)
        throw ScenarioError(1, "horizon must be positive");
    if (s.policies.empty()) throw ScenarioError(1, "scenario defines no policy");
    if (!active_policy_set) s.active_policy = s.policies.front().policy_id();
    bool found = false;
    for (const auto& p : s.policies)
        if (p.policy_id() == s.active_policy) found = true;
    if (!found) throw ScenarioError(1, "active_policy '" + s.active_policy + "' not defined");

    std::set<std::uint64_t> node_ids;
    for (const auto& n : s.nodes) node_ids.insert(n.id.value);
    for (const auto& job : s.jobs) {
        if (!node_ids.contains(job.owner.value))
            throw ScenarioError(1, "job " + to_string(job.id) + " owner " +
                                       to_string(job.owner) + " is not a declared node");
        if (s.mechanism == Mechanism::Rewrite)
            for (const auto& task : job.tasks)
                if (uses_reserved_registers(task.program.body))
                    throw ScenarioError(1, "task " + to_string(task.id) +
                                               " branches on a reserved register");
    }
    return s;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(0, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_scenario_text(buf.str());
}

}  // namespace vgrid

#endif
