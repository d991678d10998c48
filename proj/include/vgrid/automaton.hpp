#ifndef VGRID_AUTOMATON_HPP
#define VGRID_AUTOMATON_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgrid/guest.hpp"
#include "vgrid/ids.hpp"

namespace vgrid {

inline constexpr std::size_t kMaxAutomatonStates = 64;

class PolicyParseError : public std::runtime_error {
  public:
    PolicyParseError(int line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message),
          line_(line) {}

    int line() const { return line_; }

  private:
    int line_;
};

// Finite-state safety policy over the guest event alphabet. States are kept
// by declaration order; a missing delta entry is a violation.
class SecurityAutomaton {
  public:
    SecurityAutomaton() = default;

    SecurityAutomaton(PolicyId id, std::vector<std::string> state_names, int initial)
        : policy_id_(std::move(id)),
          state_names_(std::move(state_names)),
          initial_(initial) {
        if (state_names_.empty() || state_names_.size() > kMaxAutomatonStates)
            throw std::invalid_argument("state count must be in [1, 64]");
        if (initial_ < 0 || static_cast<std::size_t>(initial_) >= state_names_.size())
            throw std::invalid_argument("initial state out of range");
        delta_.assign(state_names_.size(), empty_row());
    }

    const PolicyId& policy_id() const { return policy_id_; }
    int initial() const { return initial_; }
    std::size_t state_count() const { return state_names_.size(); }
    const std::string& state_name(int s) const {
        return state_names_.at(static_cast<std::size_t>(s));
    }

    std::optional<int> state_index(const std::string& name) const {
        for (std::size_t i = 0; i < state_names_.size(); ++i)
            if (state_names_[i] == name) return static_cast<int>(i);
        return std::nullopt;
    }

    void add_transition(int from, GuestEvent event, int to) {
        check_state(from);
        check_state(to);
        int& slot = delta_[static_cast<std::size_t>(from)][event_index(event)];
        if (slot >= 0) throw std::invalid_argument("duplicate transition");
        slot = to;
    }

    bool has_transition(int from, GuestEvent event) const {
        check_state(from);
        return delta_[static_cast<std::size_t>(from)][event_index(event)] >= 0;
    }

    // nullopt means the transition is undefined: a violation.
    std::optional<int> step(int from, GuestEvent event) const {
        check_state(from);
        int to = delta_[static_cast<std::size_t>(from)][event_index(event)];
        if (to < 0) return std::nullopt;
        return to;
    }

  private:
    static std::array<int, kGuestEventCount> empty_row() {
        return {-1, -1, -1, -1};
    }

    static std::size_t event_index(GuestEvent e) { return static_cast<std::size_t>(e); }

    void check_state(int s) const {
        if (s < 0 || static_cast<std::size_t>(s) >= state_names_.size())
            throw std::invalid_argument("state out of range");
    }

    PolicyId policy_id_;
    std::vector<std::string> state_names_;
    int initial_{0};
    std::vector<std::array<int, kGuestEventCount>> delta_;
};

inline std::optional<int> automaton_step(const SecurityAutomaton& a, int state,
                                         GuestEvent event) {
    return a.step(state, event);
}

// Greatest k such that events[0..k) runs from `start` without hitting an
// undefined transition.
inline std::size_t longest_safe_prefix(const SecurityAutomaton& a,
                                       const std::vector<GuestEvent>& events,
                                       std::optional<int> start = std::nullopt) {
    int state = start.value_or(a.initial());
    for (std::size_t i = 0; i < events.size(); ++i) {
        auto next = a.step(state, events[i]);
        if (!next) return i;
        state = *next;
    }
    return events.size();
}

// ---------------------------------------------------------------------------
// Policy file parsing
// ---------------------------------------------------------------------------
//
// Line-oriented:
//   policy <id>
//   states S0 S1 ...
//   initial S0
//   on <state> <event> -> <state>
// `#` begins a comment; pairs with no `on` line are violating transitions.

namespace automaton_detail {

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

struct PolicyDraft {
    PolicyId id;
    int line{0};
    std::vector<std::string> states;
    std::optional<std::string> initial;
    int initial_line{0};
    struct Edge {
        std::string from;
        GuestEvent event;
        std::string to;
        int line;
    };
    std::vector<Edge> edges;
};

inline SecurityAutomaton finish(const PolicyDraft& d) {
    if (d.states.empty())
        throw PolicyParseError(d.line, "policy '" + d.id + "' has no states line");
    if (d.states.size() > kMaxAutomatonStates)
        throw PolicyParseError(d.line, "policy '" + d.id + "' exceeds 64 states");
    for (std::size_t i = 0; i < d.states.size(); ++i)
        for (std::size_t j = i + 1; j < d.states.size(); ++j)
            if (d.states[i] == d.states[j])
                throw PolicyParseError(d.line, "duplicate state '" + d.states[i] + "'");
    if (!d.initial)
        throw PolicyParseError(d.line, "policy '" + d.id + "' has no initial line");

    SecurityAutomaton a(d.id, d.states, 0);
    auto idx = [&](const std::string& name, int line) {
        auto i = a.state_index(name);
        if (!i) throw PolicyParseError(line, "unknown state '" + name + "'");
        return *i;
    };
    int initial = idx(*d.initial, d.initial_line);
    SecurityAutomaton out(d.id, d.states, initial);
    for (const auto& e : d.edges) {
        int from = idx(e.from, e.line);
        int to = idx(e.to, e.line);
        if (out.has_transition(from, e.event))
            throw PolicyParseError(e.line, "duplicate transition from '" + e.from +
                                               "' on '" + guest_event_name(e.event) + "'");
        out.add_transition(from, e.event, to);
    }
    return out;
}

}  // namespace automaton_detail

inline std::vector<SecurityAutomaton> parse_policies(const std::string& text) {
    using automaton_detail::PolicyDraft;
    std::vector<SecurityAutomaton> out;
    std::optional<PolicyDraft> cur;
    auto flush = [&] {
        if (cur) {
            out.push_back(automaton_detail::finish(*cur));
            cur.reset();
        }
    };

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = text.substr(
            start, end == std::string::npos ? std::string::npos : end - start);
        ++line_no;
        start = end == std::string::npos ? text.size() + 1 : end + 1;

        auto fields = automaton_detail::split_fields(line);
        if (fields.empty()) continue;
        const std::string& kw = fields[0];
        if (kw == "policy") {
            if (fields.size() != 2)
                throw PolicyParseError(line_no, "expected: policy <id>");
            flush();
            cur = PolicyDraft{};
            cur->id = fields[1];
            cur->line = line_no;
            continue;
        }
        if (!cur) throw PolicyParseError(line_no, "expected 'policy <id>' first");
        if (kw == "states") {
            if (fields.size() < 2)
                throw PolicyParseError(line_no, "states line needs at least one state");
            if (!cur->states.empty())
                throw PolicyParseError(line_no, "duplicate states line");
            cur->states.assign(fields.begin() + 1, fields.end());
        } else if (kw == "initial") {
            if (fields.size() != 2)
                throw PolicyParseError(line_no, "expected: initial <state>");
            if (cur->initial)
                throw PolicyParseError(line_no, "duplicate initial line");
            cur->initial = fields[1];
            cur->initial_line = line_no;
        } else if (kw == "on") {
            if (fields.size() != 5 || fields[3] != "->")
                throw PolicyParseError(line_no, "expected: on <state> <event> -> <state>");
            auto ev = guest_event_from_name(fields[2]);
            if (!ev)
                throw PolicyParseError(line_no, "unknown event '" + fields[2] + "'");
            cur->edges.push_back({fields[1], *ev, fields[4], line_no});
        } else {
            throw PolicyParseError(line_no, "unknown keyword '" + kw + "'");
        }
    }
    flush();
    if (out.empty()) throw PolicyParseError(1, "no policy found");
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
            if (out[i].policy_id() == out[j].policy_id())
                throw PolicyParseError(1, "duplicate policy id '" + out[i].policy_id() + "'");
    return out;
}

inline SecurityAutomaton parse_policy(const std::string& text) {
    return parse_policies(text).front();
}

// The running example in tests and samples: no send after read.
inline SecurityAutomaton make_nsar_policy() {
    SecurityAutomaton a("NSAR", {"S0", "S1"}, 0);
    a.add_transition(0, GuestEvent::Read, 1);
    a.add_transition(0, GuestEvent::Send, 0);
    a.add_transition(0, GuestEvent::Compute, 0);
    a.add_transition(0, GuestEvent::Write, 0);
    a.add_transition(1, GuestEvent::Read, 1);
    a.add_transition(1, GuestEvent::Compute, 1);
    a.add_transition(1, GuestEvent::Write, 1);
    return a;
}

}  // namespace vgrid

#endif
