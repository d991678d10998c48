#ifndef VGRID_TESTS_SUPPORT_HPP
#define VGRID_TESTS_SUPPORT_HPP

// Shared corpus generators: random guest programs, random automata,
// delegation trees with an independently recorded shape, and synthetic
// churn scenarios. Everything is seeded, so failures reproduce exactly.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <vgrid/automaton.hpp>
#include <vgrid/federation.hpp>
#include <vgrid/guest.hpp>
#include <vgrid/rng.hpp>

namespace vgrid_test {

using namespace vgrid;

// --------------------------------------------------------------------------
// Random guest programs. Branch registers stay in [0, 13] so every program
// is also valid rewriter input.
// --------------------------------------------------------------------------

inline Block random_block(Rng& rng, int& instr_budget, int& branch_budget, int depth) {
    Block block;
    int len = 1 + static_cast<int>(rng.next_below(5));
    for (int i = 0; i < len && instr_budget > 0; ++i) {
        std::uint64_t pick = rng.next_below(100);
        if (pick < 14 && branch_budget > 0 && depth < 3 && instr_budget >= 3) {
            branch_budget -= 1;
            instr_budget -= 1;
            BranchInstr br;
            br.condition_register = static_cast<int>(rng.next_below(14));
            br.then_block = random_block(rng, instr_budget, branch_budget, depth + 1);
            br.else_block = random_block(rng, instr_budget, branch_budget, depth + 1);
            block.push_back({std::move(br)});
        } else if (pick < 36) {
            instr_budget -= 1;
            block.push_back({ReadInstr{static_cast<int>(rng.next_below(kRegionCount))}});
        } else if (pick < 58) {
            instr_budget -= 1;
            block.push_back({WriteInstr{static_cast<int>(rng.next_below(kRegionCount))}});
        } else if (pick < 78) {
            instr_budget -= 1;
            block.push_back({ComputeInstr{1 + static_cast<std::int64_t>(rng.next_below(5))}});
        } else if (pick < 96) {
            instr_budget -= 1;
            block.push_back({SendInstr{NodeId{rng.next_below(8)}}});
        } else {
            instr_budget -= 1;
            block.push_back({HaltInstr{}});
            break;
        }
    }
    return block;
}

inline GuestProgram random_program(Rng& rng, int max_instr, int max_branches) {
    int instr_budget = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_instr)));
    int branch_budget = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_branches) + 1));
    GuestProgram p;
    p.body = random_block(rng, instr_budget, branch_budget, 0);
    if (p.body.empty()) p.body.push_back({ComputeInstr{1}});
    p.declared_caps = required_caps(p);
    return p;
}

inline GuestProgram random_straightline_program(Rng& rng, int max_instr) {
    int instr_budget = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_instr)));
    int branch_budget = 0;
    GuestProgram p;
    p.body = random_block(rng, instr_budget, branch_budget, 0);
    if (p.body.empty()) p.body.push_back({ComputeInstr{1}});
    p.declared_caps = required_caps(p);
    return p;
}

// --------------------------------------------------------------------------
// Random automata: 1..max_states states, roughly 70% transition density.
// --------------------------------------------------------------------------

inline SecurityAutomaton random_automaton(Rng& rng, int max_states, const std::string& id) {
    int n = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_states)));
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) names.push_back("q" + std::to_string(i));
    SecurityAutomaton a(id, names, 0);
    for (int s = 0; s < n; ++s)
        for (int e = 0; e < kGuestEventCount; ++e)
            if (rng.next_below(100) < 70)
                a.add_transition(s, static_cast<GuestEvent>(e),
                                 static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n))));
    return a;
}

// Replays events through the automaton; true when every step is defined.
inline bool replay_accepts(const SecurityAutomaton& a, const std::vector<GuestEvent>& events,
                           std::optional<int> start = std::nullopt) {
    int s = start.value_or(a.initial());
    for (GuestEvent e : events) {
        auto next = a.step(s, e);
        if (!next) return false;
        s = *next;
    }
    return true;
}

inline BranchOracle oracle_from_mask(std::uint64_t mask, std::size_t bits) {
    BranchOracle o;
    o.bits.resize(bits);
    for (std::size_t i = 0; i < bits; ++i) o.bits[i] = (mask >> i) & 1;
    return o;
}

// --------------------------------------------------------------------------
// Delegation trees built through the coordinator, with the shape recorded
// on the side so revocation can be checked against plain set arithmetic.
// --------------------------------------------------------------------------

struct DelegationTree {
    Coordinator coord;
    CapabilityToken root;
    std::vector<CapabilityToken> tokens;  // tokens[0] is the root
    std::map<TokenId, std::optional<TokenId>> parent_of;
    std::map<TokenId, std::vector<TokenId>> children_of;
    std::map<TokenId, int> depth_of;

    std::set<TokenId> subtree_of(TokenId top) const {
        std::set<TokenId> out;
        std::vector<TokenId> stack{top};
        while (!stack.empty()) {
            TokenId cur = stack.back();
            stack.pop_back();
            out.insert(cur);
            auto it = children_of.find(cur);
            if (it != children_of.end())
                for (TokenId c : it->second) stack.push_back(c);
        }
        return out;
    }
};

inline CapSet random_subset(Rng& rng, CapSet parent) {
    CapSet out;
    for (Capability c : parent.sorted())
        if (rng.next_below(100) < 70) out.insert(c);
    return out;
}

inline DelegationTree build_delegation_tree(std::uint64_t seed, int max_depth,
                                            int max_branching) {
    Rng rng = substream(seed, 0x74726565u);
    DelegationTree t{Coordinator::from_seed(seed), {}, {}, {}, {}, {}};
    auto decision = t.coord.subscribe(NodeId{1}, CapSet::all(), AdmissionRule{});
    t.root = std::get<SubscriptionAccepted>(decision).root_token;
    t.tokens.push_back(t.root);
    t.parent_of[t.root.token_id] = std::nullopt;
    t.depth_of[t.root.token_id] = 0;

    int extra = 4 + static_cast<int>(rng.next_below(22));
    std::uint64_t mission_counter = 1;
    for (int i = 0; i < extra; ++i) {
        std::vector<std::size_t> candidates;
        for (std::size_t k = 0; k < t.tokens.size(); ++k) {
            const CapabilityToken& cand = t.tokens[k];
            if (t.depth_of.at(cand.token_id) >= max_depth) continue;
            auto it = t.children_of.find(cand.token_id);
            if (it != t.children_of.end() &&
                static_cast<int>(it->second.size()) >= max_branching)
                continue;
            candidates.push_back(k);
        }
        if (candidates.empty()) break;
        const CapabilityToken parent =
            t.tokens[candidates[rng.next_below(candidates.size())]];
        CapabilityToken child = t.coord.issue_delegate(
            parent, MissionId{mission_counter++}, random_subset(rng, parent.caps));
        t.tokens.push_back(child);
        t.parent_of[child.token_id] = parent.token_id;
        t.children_of[parent.token_id].push_back(child.token_id);
        t.depth_of[child.token_id] = t.depth_of.at(parent.token_id) + 1;
    }
    return t;
}

// --------------------------------------------------------------------------
// Synthetic churn scenarios: 20 providers with scripted on/off intervals
// derived from exponential draws, every on-interval floored at twice the
// longest effective task duration, one always-on owner, 50 jobs x 4 tasks.
// --------------------------------------------------------------------------

struct ChurnCorpusSpec {
    std::uint64_t seed{0};
    int providers{20};
    int jobs{50};
    int tasks_per_job{4};
    bool compromised{false};  // every 5th provider joins with a bad credential
    SimTime horizon{6000};
};

inline std::string make_churn_scenario(const ChurnCorpusSpec& c) {
    // busy 1/20: effective(d) = ceil(20 d / 19); d <= 8 gives at most 9.
    const SimTime max_effective = 9;
    const SimTime on_floor = 2 * max_effective;
    const NodeId owner{static_cast<std::uint64_t>(c.providers) + 1};

    std::ostringstream out;
    out << "[sim]\n";
    out << "seed = " << c.seed << "\n";
    out << "horizon = " << c.horizon << "\n";
    out << "busy_fraction = 0.05\n";
    out << "retry_budget = 12\n";
    out << "cooldown = 10\n";
    out << "mechanism = monitor\n";
    out << "active_policy = nsar\n";
    out << "\n[policy]\n";
    out << "policy nsar\n";
    out << "states S0 S1\n";
    out << "initial S0\n";
    out << "on S0 read -> S1\n";
    out << "on S1 read -> S1\n";
    out << "on S0 send -> S0\n";
    out << "on S0 write -> S0\n";
    out << "on S1 write -> S1\n";
    out << "on S0 compute -> S0\n";
    out << "on S1 compute -> S1\n";
    out << "\n[nodes]\n";

    for (int i = 1; i <= c.providers; ++i) {
        Rng churn = substream(c.seed, 0x636f7270u, static_cast<std::uint64_t>(i));
        bool hostile = c.compromised && (i % 5 == 0);
        out << "node " << i << (hostile ? " compromised" : " honest") << " script";
        SimTime t = static_cast<SimTime>(churn.next_below(40));
        while (t < c.horizon) {
            SimTime on = std::max<SimTime>(on_floor, churn.next_exponential(90));
            out << " connect@" << t;
            if (t + on >= c.horizon) break;
            out << " disconnect@" << (t + on);
            t += on + churn.next_exponential(25);
        }
        out << "\n";
    }
    out << "node " << owner.value << " honest always-on\n";

    Rng work = substream(c.seed, 0x776f726bu);
    out << "\n[jobs]\n";
    for (int j = 1; j <= c.jobs; ++j) {
        out << "job " << j << " owner " << owner.value << "\n";
        for (int k = 0; k < c.tasks_per_job; ++k) {
            SimTime d = 3 + static_cast<SimTime>(work.next_below(6));
            out << "task duration " << d << "\n";
            // Safe under the policy above: any send happens before the
            // first read.
            if (work.next_below(100) < 30)
                out << "send " << work.next_below(8) << "\n";
            int body = 2 + static_cast<int>(work.next_below(3));
            for (int b = 0; b < body; ++b) {
                switch (work.next_below(3)) {
                    case 0: out << "read " << work.next_below(16) << "\n"; break;
                    case 1: out << "write " << work.next_below(16) << "\n"; break;
                    default: out << "compute " << (1 + work.next_below(4)) << "\n"; break;
                }
            }
            out << "endtask\n";
        }
        out << "endjob\n";
    }
    return out.str();
}

}  // namespace vgrid_test

#endif
