#ifndef VGRID_ENFORCE_HPP
#define VGRID_ENFORCE_HPP

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vgrid/automaton.hpp"
#include "vgrid/guest.hpp"

namespace vgrid {

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

struct StaticWitness {
    // Event sequence ending with the violating event.
    std::vector<GuestEvent> events;
    // Oracle bits realizing the path, in execution order up to the violation.
    std::vector<bool> branch_decisions;
};

struct AcceptedStatically {};
struct RejectedStatically {
    StaticWitness witness;
};
struct MonitoredOk {
    Trace trace;
};
struct MonitoredTruncated {
    Trace trace;
    std::size_t violating_index{0};
};
struct Rewritten {
    GuestProgram program;
};

using Verdict = std::variant<AcceptedStatically, RejectedStatically, MonitoredOk,
                             MonitoredTruncated, Rewritten>;

inline const char* verdict_name(const Verdict& v) {
    if (std::holds_alternative<AcceptedStatically>(v)) return "accepted_static";
    if (std::holds_alternative<RejectedStatically>(v)) return "rejected_static";
    if (std::holds_alternative<MonitoredOk>(v)) return "ok";
    if (std::holds_alternative<MonitoredTruncated>(v)) return "truncated";
    return "rewritten";
}

class ReservedRegisterError : public GuestError {
  public:
    using GuestError::GuestError;
};

namespace enforce_detail {

inline void require_guard_free(const Block& block) {
    for (const auto& ins : block) {
        if (std::holds_alternative<GuardInstr>(ins.op))
            throw std::invalid_argument("program already contains guards");
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            require_guard_free(br->then_block);
            require_guard_free(br->else_block);
        }
    }
}

inline void require_guard_free(const GuestProgram& p) { require_guard_free(p.body); }

}  // namespace enforce_detail

// ---------------------------------------------------------------------------
// Execution monitoring
// ---------------------------------------------------------------------------

namespace enforce_detail {

struct MonitorState {
    const SecurityAutomaton* a{nullptr};
    BranchOracle* oracle{nullptr};
    int state{0};
    Trace trace;
    bool stopped{false};
};

inline void monitor_block(const Block& block, MonitorState& st) {
    for (const auto& ins : block) {
        if (st.stopped) return;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            bool taken = st.oracle->next();
            monitor_block(taken ? br->then_block : br->else_block, st);
            continue;
        }
        if (std::holds_alternative<HaltInstr>(ins.op)) {
            st.stopped = true;
            return;
        }
        GuestEvent ev = *emitted_event(ins);
        auto next = st.a->step(st.state, ev);
        if (!next) {
            st.trace.terminated_by = Termination::Truncated;
            st.trace.truncated_at = st.trace.events.size();
            st.stopped = true;
            return;
        }
        st.state = *next;
        st.trace.events.push_back(ev);
    }
}

}  // namespace enforce_detail

// Stepwise execution with every event checked before commit; halts at the
// first undefined transition, so the emitted trace is exactly the longest
// safe prefix of the unmonitored trace.
inline Verdict run_monitor(const SecurityAutomaton& a, const GuestProgram& p,
                           BranchOracle oracle, std::optional<int> start = std::nullopt) {
    enforce_detail::require_guard_free(p);
    enforce_detail::MonitorState st;
    st.a = &a;
    st.oracle = &oracle;
    st.state = start.value_or(a.initial());
    enforce_detail::monitor_block(p.body, st);
    if (st.trace.terminated_by == Termination::Truncated) {
        std::size_t idx = st.trace.truncated_at;
        return MonitoredTruncated{std::move(st.trace), idx};
    }
    return MonitoredOk{std::move(st.trace)};
}

// ---------------------------------------------------------------------------
// Static analysis (product construction)
// ---------------------------------------------------------------------------

namespace enforce_detail {

struct CfgNode {
    const Instruction* ins{nullptr};  // null marks the exit node
    int next{-1};
    int then_next{-1};
    int else_next{-1};
    std::size_t event_ordinal{static_cast<std::size_t>(-1)};
};

struct Cfg {
    std::vector<CfgNode> nodes;
    int entry{0};
    int exit{0};
    std::size_t event_count{0};
};

inline int build_cfg_block(const Block& block, int succ, Cfg& cfg) {
    int next = succ;
    for (auto it = block.rbegin(); it != block.rend(); ++it) {
        const Instruction& ins = *it;
        CfgNode node;
        node.ins = &ins;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            node.then_next = build_cfg_block(br->then_block, next, cfg);
            node.else_next = build_cfg_block(br->else_block, next, cfg);
        } else if (std::holds_alternative<HaltInstr>(ins.op)) {
            node.next = cfg.exit;
        } else {
            node.next = next;
        }
        cfg.nodes.push_back(node);
        next = static_cast<int>(cfg.nodes.size()) - 1;
    }
    return next;
}

inline void assign_event_ordinals(const Block& block,
                                  std::map<const Instruction*, std::size_t>& ordinals,
                                  std::size_t& counter) {
    for (const auto& ins : block) {
        if (emitted_event(ins)) ordinals[&ins] = counter++;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            assign_event_ordinals(br->then_block, ordinals, counter);
            assign_event_ordinals(br->else_block, ordinals, counter);
        }
    }
}

// Preorder ordinals for event instructions, used to report guard placement.
inline std::map<const Instruction*, std::size_t> event_ordinals(const GuestProgram& p) {
    std::map<const Instruction*, std::size_t> ordinals;
    std::size_t counter = 0;
    assign_event_ordinals(p.body, ordinals, counter);
    return ordinals;
}

inline Cfg build_cfg(const GuestProgram& p) {
    Cfg cfg;
    cfg.nodes.push_back(CfgNode{});  // exit
    cfg.exit = 0;
    cfg.entry = build_cfg_block(p.body, cfg.exit, cfg);
    auto ordinals = event_ordinals(p);
    cfg.event_count = ordinals.size();
    for (auto& node : cfg.nodes)
        if (node.ins)
            if (auto it = ordinals.find(node.ins); it != ordinals.end())
                node.event_ordinal = it->second;
    return cfg;
}

struct ProductEdge {
    enum class Kind : std::uint8_t { None, Event, Decision } kind{Kind::None};
    GuestEvent event{GuestEvent::Read};
    bool decision{false};
    int parent_node{-1};
    int parent_state{-1};
};

struct ProductResult {
    Cfg cfg;
    // Bitmask of reachable automaton states per CFG node.
    std::vector<std::uint64_t> reachable;
    bool violation_found{false};
    StaticWitness witness;
    // Event ordinals whose instruction can violate from some reachable state.
    std::vector<std::size_t> residual_ordinals;
};

// Breadth-first walk over (cfg node, automaton state). Exact for this
// language: the CFG is acyclic and every CFG path is realizable by some
// oracle assignment.
inline ProductResult analyze_product(const SecurityAutomaton& a, const GuestProgram& p,
                                     std::optional<int> start = std::nullopt) {
    ProductResult res;
    res.cfg = build_cfg(p);
    const auto& nodes = res.cfg.nodes;
    std::size_t nstates = a.state_count();
    res.reachable.assign(nodes.size(), 0);
    std::vector<ProductEdge> parents(nodes.size() * nstates);

    auto slot = [&](int node, int state) {
        return static_cast<std::size_t>(node) * nstates + static_cast<std::size_t>(state);
    };
    auto seen = [&](int node, int state) {
        return (res.reachable[static_cast<std::size_t>(node)] >> state) & 1u;
    };

    std::deque<std::pair<int, int>> queue;
    int start_state = start.value_or(a.initial());
    res.reachable[static_cast<std::size_t>(res.cfg.entry)] |= 1ull << start_state;
    queue.emplace_back(res.cfg.entry, start_state);

    auto push = [&](int node, int state, ProductEdge edge) {
        if (seen(node, state)) return;
        res.reachable[static_cast<std::size_t>(node)] |= 1ull << state;
        parents[slot(node, state)] = edge;
        queue.emplace_back(node, state);
    };

    auto reconstruct = [&](int node, int state, GuestEvent violating) {
        StaticWitness w;
        std::vector<GuestEvent> rev_events;
        std::vector<bool> rev_decisions;
        int n = node;
        int s = state;
        while (!(n == res.cfg.entry && s == start_state)) {
            const ProductEdge& e = parents[slot(n, s)];
            if (e.kind == ProductEdge::Kind::Event) rev_events.push_back(e.event);
            if (e.kind == ProductEdge::Kind::Decision) rev_decisions.push_back(e.decision);
            n = e.parent_node;
            s = e.parent_state;
        }
        w.events.assign(rev_events.rbegin(), rev_events.rend());
        w.events.push_back(violating);
        w.branch_decisions.assign(rev_decisions.rbegin(), rev_decisions.rend());
        return w;
    };

    while (!queue.empty()) {
        auto [node_idx, state] = queue.front();
        queue.pop_front();
        const CfgNode& node = nodes[static_cast<std::size_t>(node_idx)];
        if (!node.ins) continue;  // exit
        if (const auto* br = std::get_if<BranchInstr>(&node.ins->op)) {
            (void)br;
            push(node.then_next, state,
                 {ProductEdge::Kind::Decision, GuestEvent::Read, true, node_idx, state});
            push(node.else_next, state,
                 {ProductEdge::Kind::Decision, GuestEvent::Read, false, node_idx, state});
            continue;
        }
        if (std::holds_alternative<HaltInstr>(node.ins->op)) continue;
        GuestEvent ev = *emitted_event(*node.ins);
        auto next_state = a.step(state, ev);
        if (!next_state) {
            if (!res.violation_found) {
                res.violation_found = true;
                res.witness = reconstruct(node_idx, state, ev);
            }
            continue;
        }
        push(node.next, *next_state,
             {ProductEdge::Kind::Event, ev, false, node_idx, state});
    }

    // Residual points: event instructions with at least one reachable state
    // whose transition is undefined.
    std::vector<std::size_t> residual;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const CfgNode& node = nodes[i];
        if (!node.ins) continue;
        auto ev = emitted_event(*node.ins);
        if (!ev) continue;
        std::uint64_t mask = res.reachable[i];
        for (std::size_t s = 0; s < nstates && mask; ++s) {
            if (!((mask >> s) & 1u)) continue;
            if (!a.has_transition(static_cast<int>(s), *ev)) {
                residual.push_back(node.event_ordinal);
                break;
            }
        }
    }
    std::sort(residual.begin(), residual.end());
    res.residual_ordinals = std::move(residual);
    return res;
}

}  // namespace enforce_detail

// Product construction over the acyclic program: accepted iff no reachable
// (state, event) pair is undefined. Exact here, not just sound, because every
// CFG path is realizable.
inline Verdict static_analyze(const SecurityAutomaton& a, const GuestProgram& p,
                              std::optional<int> start = std::nullopt) {
    enforce_detail::require_guard_free(p);
    auto res = enforce_detail::analyze_product(a, p, start);
    if (res.violation_found) return RejectedStatically{std::move(res.witness)};
    return AcceptedStatically{};
}

// ---------------------------------------------------------------------------
// Program rewriting
// ---------------------------------------------------------------------------

namespace enforce_detail {

inline GuardInstr make_guard(const SecurityAutomaton& a, GuestEvent ev) {
    GuardInstr g;
    g.event = ev;
    g.next_state.resize(a.state_count());
    for (std::size_t s = 0; s < a.state_count(); ++s) {
        auto next = a.step(static_cast<int>(s), ev);
        g.next_state[s] = next ? *next : -1;
    }
    return g;
}

inline Block rewrite_block(const SecurityAutomaton& a, const Block& block) {
    Block out;
    for (const auto& ins : block) {
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            BranchInstr copy;
            copy.condition_register = br->condition_register;
            copy.then_block = rewrite_block(a, br->then_block);
            copy.else_block = rewrite_block(a, br->else_block);
            out.push_back({std::move(copy)});
            continue;
        }
        if (auto ev = emitted_event(ins)) out.push_back({make_guard(a, *ev)});
        out.push_back(ins);
    }
    return out;
}

}  // namespace enforce_detail

// Every event instruction gains a preceding inlined guard that tracks the
// automaton state in register 14 and halts (register 15 flags it) when the
// transition is undefined. The result enforces the policy with no monitor
// attached.
inline GuestProgram rewrite_program(const SecurityAutomaton& a, const GuestProgram& p) {
    enforce_detail::require_guard_free(p);
    if (uses_reserved_registers(p.body))
        throw ReservedRegisterError("program branches on a reserved register");
    GuestProgram out;
    out.body = enforce_detail::rewrite_block(a, p.body);
    out.declared_caps = p.declared_caps;
    return out;
}

inline Verdict rewrite(const SecurityAutomaton& a, const GuestProgram& p) {
    return Rewritten{rewrite_program(a, p)};
}

// Runs a rewritten program with the guard state register seeded from the
// automaton's initial state (or an explicit override).
inline Trace execute_rewritten(const GuestProgram& rewritten, BranchOracle oracle,
                               const SecurityAutomaton& a,
                               std::optional<int> start = std::nullopt) {
    return execute_unmonitored(rewritten, std::move(oracle), start.value_or(a.initial()));
}

// ---------------------------------------------------------------------------
// Combined mechanism
// ---------------------------------------------------------------------------

struct CombinedResult {
    Verdict verdict;
    std::size_t guard_count{0};
    // Preorder event ordinals that received a checking guard.
    std::vector<std::size_t> guarded_ordinals;
};

namespace enforce_detail {

struct CombinedState {
    const SecurityAutomaton* a{nullptr};
    BranchOracle* oracle{nullptr};
    const std::map<const Instruction*, bool>* guarded{nullptr};
    int state{0};
    Trace trace;
    bool stopped{false};
};

inline void combined_block(const Block& block, CombinedState& st) {
    for (const auto& ins : block) {
        if (st.stopped) return;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            bool taken = st.oracle->next();
            combined_block(taken ? br->then_block : br->else_block, st);
            continue;
        }
        if (std::holds_alternative<HaltInstr>(ins.op)) {
            st.stopped = true;
            return;
        }
        GuestEvent ev = *emitted_event(ins);
        auto it = st.guarded->find(&ins);
        bool checked = it != st.guarded->end() && it->second;
        auto next = st.a->step(st.state, ev);
        if (checked && !next) {
            st.trace.terminated_by = Termination::Truncated;
            st.trace.truncated_at = st.trace.events.size();
            st.stopped = true;
            return;
        }
        if (!next)
            throw std::logic_error("unguarded instruction hit an undefined transition");
        st.state = *next;
        st.trace.events.push_back(ev);
    }
}

}  // namespace enforce_detail

// Static analysis first; instructions proven safe at every reachable state
// run unguarded while residual points keep a checking guard. The thin
// monitor only tracks the automaton state so guards have it available; it
// checks nothing at unguarded points. Observable behavior matches
// run_monitor for the same oracle.
inline CombinedResult run_combined(const SecurityAutomaton& a, const GuestProgram& p,
                                   BranchOracle oracle,
                                   std::optional<int> start = std::nullopt) {
    enforce_detail::require_guard_free(p);
    auto analysis = enforce_detail::analyze_product(a, p, start);

    CombinedResult result;
    result.guarded_ordinals = analysis.residual_ordinals;
    result.guard_count = analysis.residual_ordinals.size();

    if (!analysis.violation_found) {
        Trace t = execute_unmonitored(p, std::move(oracle));
        t.terminated_by = Termination::Completed;
        result.verdict = MonitoredOk{std::move(t)};
        return result;
    }

    std::map<const Instruction*, bool> guarded;
    for (const auto& node : analysis.cfg.nodes) {
        if (!node.ins) continue;
        auto ev = emitted_event(*node.ins);
        if (!ev) continue;
        bool residual = false;
        for (std::size_t ord : analysis.residual_ordinals)
            if (ord == node.event_ordinal) residual = true;
        guarded[node.ins] = residual;
    }

    enforce_detail::CombinedState st;
    st.a = &a;
    st.oracle = &oracle;
    st.guarded = &guarded;
    st.state = start.value_or(a.initial());
    enforce_detail::combined_block(p.body, st);
    if (st.trace.terminated_by == Termination::Truncated) {
        std::size_t idx = st.trace.truncated_at;
        result.verdict = MonitoredTruncated{std::move(st.trace), idx};
    } else {
        result.verdict = MonitoredOk{std::move(st.trace)};
    }
    return result;
}

}  // namespace vgrid

#endif
