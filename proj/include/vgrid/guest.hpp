#ifndef VGRID_GUEST_HPP
#define VGRID_GUEST_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vgrid/caps.hpp"
#include "vgrid/ids.hpp"

namespace vgrid {

// ---------------------------------------------------------------------------
// Events and instructions
// ---------------------------------------------------------------------------

// The security-relevant alphabet shared with the policy automata. Branch,
// Halt and inlined guards emit nothing.
enum class GuestEvent : std::uint8_t { Read = 0, Write = 1, Send = 2, Compute = 3 };

inline constexpr int kGuestEventCount = 4;

inline const char* guest_event_name(GuestEvent e) {
    switch (e) {
        case GuestEvent::Read: return "read";
        case GuestEvent::Write: return "write";
        case GuestEvent::Send: return "send";
        case GuestEvent::Compute: return "compute";
    }
    return "?";
}

inline std::optional<GuestEvent> guest_event_from_name(const std::string& s) {
    for (int i = 0; i < kGuestEventCount; ++i) {
        auto e = static_cast<GuestEvent>(i);
        if (s == guest_event_name(e)) return e;
    }
    return std::nullopt;
}

inline constexpr int kRegisterCount = 16;
inline constexpr int kRegionCount = 16;
// Registers reserved for inlined guard state; rewrite refuses programs
// that branch on them.
inline constexpr int kGuardStateRegister = 14;
inline constexpr int kGuardHaltRegister = 15;

struct Instruction;
using Block = std::vector<Instruction>;

struct ReadInstr {
    int region{0};
};
struct WriteInstr {
    int region{0};
};
struct ComputeInstr {
    std::int64_t units{1};
};
struct SendInstr {
    NodeId target;
};
struct BranchInstr {
    int condition_register{0};
    Block then_block;
    Block else_block;
};
struct HaltInstr {};
// Inserted by the rewriter, never produced by the parser. next_state[s] is
// the state index reached from s on `event`, or -1 when the transition is
// undefined and the guard must halt the program.
struct GuardInstr {
    GuestEvent event{GuestEvent::Read};
    std::vector<int> next_state;
};

struct Instruction {
    std::variant<ReadInstr, WriteInstr, ComputeInstr, SendInstr, BranchInstr, HaltInstr,
                 GuardInstr>
        op;
};

struct GuestProgram {
    Block body;
    CapSet declared_caps;
};

inline constexpr std::size_t kMaxInstructions = 10000;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class GuestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public GuestError {
  public:
    SyntaxError(int line, const std::string& message)
        : GuestError("line " + std::to_string(line) + ": " + message), line_(line) {}

    int line() const { return line_; }

  private:
    int line_;
};

class LimitExceeded : public GuestError {
  public:
    using GuestError::GuestError;
};

class OracleExhausted : public GuestError {
  public:
    using GuestError::GuestError;
};

class TooManyBranches : public GuestError {
  public:
    using GuestError::GuestError;
};

// ---------------------------------------------------------------------------
// Structural helpers
// ---------------------------------------------------------------------------

inline std::size_t instruction_count(const Block& block) {
    std::size_t n = 0;
    for (const auto& ins : block) {
        n += 1;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op))
            n += instruction_count(br->then_block) + instruction_count(br->else_block);
    }
    return n;
}

inline std::size_t instruction_count(const GuestProgram& p) {
    return instruction_count(p.body);
}

inline std::size_t branch_count(const Block& block) {
    std::size_t n = 0;
    for (const auto& ins : block)
        if (const auto* br = std::get_if<BranchInstr>(&ins.op))
            n += 1 + branch_count(br->then_block) + branch_count(br->else_block);
    return n;
}

inline std::size_t branch_count(const GuestProgram& p) { return branch_count(p.body); }

inline std::optional<GuestEvent> emitted_event(const Instruction& ins) {
    if (std::holds_alternative<ReadInstr>(ins.op)) return GuestEvent::Read;
    if (std::holds_alternative<WriteInstr>(ins.op)) return GuestEvent::Write;
    if (std::holds_alternative<SendInstr>(ins.op)) return GuestEvent::Send;
    if (std::holds_alternative<ComputeInstr>(ins.op)) return GuestEvent::Compute;
    return std::nullopt;
}

inline Capability implied_capability(GuestEvent e) {
    switch (e) {
        case GuestEvent::Read: return Capability::ReadHostData;
        case GuestEvent::Write: return Capability::WriteHostData;
        case GuestEvent::Send: return Capability::SendMessage;
        case GuestEvent::Compute: return Capability::Compute;
    }
    return Capability::Compute;
}

inline void collect_required_caps(const Block& block, CapSet& caps) {
    for (const auto& ins : block) {
        if (auto ev = emitted_event(ins)) caps.insert(implied_capability(*ev));
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            collect_required_caps(br->then_block, caps);
            collect_required_caps(br->else_block, caps);
        }
    }
}

// Union of implied capabilities over every instruction, both branch arms
// included.
inline CapSet required_caps(const GuestProgram& p) {
    CapSet caps;
    collect_required_caps(p.body, caps);
    return caps;
}

inline bool uses_reserved_registers(const Block& block) {
    for (const auto& ins : block) {
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            if (br->condition_register == kGuardStateRegister ||
                br->condition_register == kGuardHaltRegister)
                return true;
            if (uses_reserved_registers(br->then_block) ||
                uses_reserved_registers(br->else_block))
                return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace guest_detail {

struct Token {
    std::string text;
    int line{0};
};

inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> tokens;
    int line = 1;
    std::string cur;
    int cur_line = 1;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back({cur, cur_line});
            cur.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '#') {
            flush();
            while (i < text.size() && text[i] != '\n') ++i;
            ++line;
            continue;
        }
        if (c == '\n') {
            flush();
            ++line;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == ';') {
            flush();
            continue;
        }
        if (c == '{' || c == '}') {
            flush();
            tokens.push_back({std::string(1, c), line});
            continue;
        }
        if (cur.empty()) cur_line = line;
        cur.push_back(c);
    }
    flush();
    return tokens;
}

class Parser {
  public:
    explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    Block parse_top() {
        Block body = parse_block_items(/*until_brace=*/false);
        if (pos_ != tokens_.size())
            throw SyntaxError(tokens_[pos_].line, "unexpected '" + tokens_[pos_].text + "'");
        return body;
    }

  private:
    Block parse_block_items(bool until_brace) {
        Block block;
        while (pos_ < tokens_.size()) {
            if (tokens_[pos_].text == "}") {
                if (until_brace) return block;
                throw SyntaxError(tokens_[pos_].line, "unmatched '}'");
            }
            block.push_back(parse_instruction());
        }
        if (until_brace)
            throw SyntaxError(last_line(), "missing '}'");
        return block;
    }

    Instruction parse_instruction() {
        Token t = next("instruction");
        if (t.text == "read") return {ReadInstr{parse_region(t.line)}};
        if (t.text == "write") return {WriteInstr{parse_region(t.line)}};
        if (t.text == "compute") return {ComputeInstr{parse_units(t.line)}};
        if (t.text == "send") return {SendInstr{NodeId{parse_u64(t.line, "node id")}}};
        if (t.text == "halt") return {HaltInstr{}};
        if (t.text == "branch") return {parse_branch(t.line)};
        throw SyntaxError(t.line, "unknown instruction '" + t.text + "'");
    }

    BranchInstr parse_branch(int line) {
        Token reg = next("register");
        if (reg.text.size() < 2 || reg.text[0] != 'r')
            throw SyntaxError(reg.line, "expected register (r<k>), got '" + reg.text + "'");
        std::uint64_t k = parse_number(reg.text.substr(1), reg.line, "register");
        if (k >= kRegisterCount)
            throw SyntaxError(reg.line, "register index must be < 16");
        BranchInstr br;
        br.condition_register = static_cast<int>(k);
        expect("{", line);
        br.then_block = parse_block_items(/*until_brace=*/true);
        expect("}", line);
        expect("{", line);
        br.else_block = parse_block_items(/*until_brace=*/true);
        expect("}", line);
        return br;
    }

    int parse_region(int line) {
        std::uint64_t r = parse_u64(line, "region");
        if (r >= kRegionCount) throw SyntaxError(line, "region index must be < 16");
        return static_cast<int>(r);
    }

    std::int64_t parse_units(int line) {
        std::uint64_t u = parse_u64(line, "units");
        if (u == 0) throw SyntaxError(line, "compute units must be positive");
        return static_cast<std::int64_t>(u);
    }

    std::uint64_t parse_u64(int line, const char* what) {
        Token t = next(what);
        return parse_number(t.text, t.line, what);
    }

    std::uint64_t parse_number(const std::string& s, int line, const char* what) {
        if (s.empty()) throw SyntaxError(line, std::string("expected ") + what);
        std::uint64_t v = 0;
        for (char c : s) {
            if (c < '0' || c > '9')
                throw SyntaxError(line, std::string("bad ") + what + " '" + s + "'");
            v = v * 10 + static_cast<std::uint64_t>(c - '0');
        }
        return v;
    }

    Token next(const char* what) {
        if (pos_ >= tokens_.size())
            throw SyntaxError(last_line(), std::string("expected ") + what);
        return tokens_[pos_++];
    }

    void expect(const std::string& text, int line) {
        if (pos_ >= tokens_.size() || tokens_[pos_].text != text)
            throw SyntaxError(pos_ < tokens_.size() ? tokens_[pos_].line : line,
                              "expected '" + text + "'");
        ++pos_;
    }

    int last_line() const { return tokens_.empty() ? 1 : tokens_.back().line; }

    std::vector<Token> tokens_;
    std::size_t pos_{0};
};

}  // namespace guest_detail

inline GuestProgram parse_program(const std::string& text) {
    guest_detail::Parser parser(guest_detail::tokenize(text));
    GuestProgram p;
    p.body = parser.parse_top();
    if (instruction_count(p) > kMaxInstructions)
        throw LimitExceeded("program exceeds " + std::to_string(kMaxInstructions) +
                            " instructions");
    p.declared_caps = required_caps(p);
    return p;
}

namespace guest_detail {

inline void print_block(const Block& block, int depth, std::string& out) {
    std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
    for (const auto& ins : block) {
        if (const auto* r = std::get_if<ReadInstr>(&ins.op)) {
            out += indent + "read " + std::to_string(r->region) + "\n";
        } else if (const auto* w = std::get_if<WriteInstr>(&ins.op)) {
            out += indent + "write " + std::to_string(w->region) + "\n";
        } else if (const auto* c = std::get_if<ComputeInstr>(&ins.op)) {
            out += indent + "compute " + std::to_string(c->units) + "\n";
        } else if (const auto* s = std::get_if<SendInstr>(&ins.op)) {
            out += indent + "send " + to_string(s->target) + "\n";
        } else if (std::holds_alternative<HaltInstr>(ins.op)) {
            out += indent + "halt\n";
        } else if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            out += indent + "branch r" + std::to_string(br->condition_register) + " {\n";
            print_block(br->then_block, depth + 1, out);
            out += indent + "} {\n";
            print_block(br->else_block, depth + 1, out);
            out += indent + "}\n";
        } else if (const auto* g = std::get_if<GuardInstr>(&ins.op)) {
            // Internal form; not accepted by the parser.
            out += indent + "guard " + guest_event_name(g->event);
            for (std::size_t i = 0; i < g->next_state.size(); ++i)
                out += " " + std::to_string(i) + "->" +
                       (g->next_state[i] < 0 ? std::string("!")
                                             : std::to_string(g->next_state[i]));
            out += "\n";
        }
    }
}

}  // namespace guest_detail

inline std::string print_program(const GuestProgram& p) {
    std::string out;
    guest_detail::print_block(p.body, 0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

// Replayable branch decisions: one boolean per Branch encountered, in
// execution order. Value type so monitor/rewrite comparisons can rerun the
// identical sequence.
struct BranchOracle {
    std::vector<bool> bits;
    std::size_t pos{0};

    bool next() {
        if (pos >= bits.size()) throw OracleExhausted("branch oracle exhausted");
        return bits[pos++];
    }
};

enum class Termination : std::uint8_t { Completed, Truncated, GuardHalt };

struct Trace {
    std::vector<GuestEvent> events;
    Termination terminated_by{Termination::Completed};
    std::size_t truncated_at{0};   // index of the refused event when Truncated
    std::size_t skipped_guards{0}; // guards that halted the program

    friend bool operator==(const Trace&, const Trace&) = default;
};

inline std::string trace_events_string(const std::vector<GuestEvent>& events) {
    if (events.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i) out += ',';
        out += guest_event_name(events[i]);
    }
    return out;
}

namespace guest_detail {

struct ExecState {
    BranchOracle* oracle{nullptr};
    std::vector<std::int64_t> regs = std::vector<std::int64_t>(kRegisterCount, 0);
    Trace trace;
    bool halted{false};
};

inline void exec_block(const Block& block, ExecState& st) {
    for (const auto& ins : block) {
        if (st.halted) return;
        if (const auto* br = std::get_if<BranchInstr>(&ins.op)) {
            // Outcomes come from the oracle, never from host state; the
            // register is documentation of intent only.
            bool taken = st.oracle->next();
            exec_block(taken ? br->then_block : br->else_block, st);
            continue;
        }
        if (std::holds_alternative<HaltInstr>(ins.op)) {
            st.halted = true;
            return;
        }
        if (const auto* g = std::get_if<GuardInstr>(&ins.op)) {
            auto state = static_cast<std::size_t>(st.regs[kGuardStateRegister]);
            int next = state < g->next_state.size() ? g->next_state[state] : -1;
            if (next < 0) {
                st.regs[kGuardHaltRegister] = 1;
                st.trace.skipped_guards += 1;
                st.trace.terminated_by = Termination::GuardHalt;
                st.halted = true;
                return;
            }
            st.regs[kGuardStateRegister] = next;
            continue;
        }
        st.trace.events.push_back(*emitted_event(ins));
    }
}

}  // namespace guest_detail

// Runs the program with no monitor attached, emitting every event on the
// realized path. start_state seeds the reserved guard register, which only
// matters for rewritten programs.
inline Trace execute_unmonitored(const GuestProgram& p, BranchOracle oracle,
                                 int start_state = 0) {
    guest_detail::ExecState st;
    st.oracle = &oracle;
    st.regs[kGuardStateRegister] = start_state;
    guest_detail::exec_block(p.body, st);
    return std::move(st.trace);
}

// ---------------------------------------------------------------------------
// Path enumeration
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxEnumerableBranches = 20;

// The exact set of event sequences over all branch outcomes, deduplicated.
// Bounded by kMaxEnumerableBranches; enumeration walks every oracle
// assignment, so at most 2^20 short runs.
inline std::set<std::vector<GuestEvent>> enumerate_paths(const GuestProgram& p) {
    if (branch_count(p) > kMaxEnumerableBranches)
        throw TooManyBranches("program has more than " +
                              std::to_string(kMaxEnumerableBranches) + " branches");
    std::set<std::vector<GuestEvent>> out;
    std::size_t branches = branch_count(p);
    std::uint64_t combos = 1ull << branches;
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
        BranchOracle oracle;
        oracle.bits.resize(branches);
        for (std::size_t b = 0; b < branches; ++b) oracle.bits[b] = (mask >> b) & 1;
        out.insert(execute_unmonitored(p, oracle).events);
    }
    return out;
}

}  // namespace vgrid

#endif
