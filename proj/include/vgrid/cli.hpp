#ifndef VGRID_CLI_HPP
#define VGRID_CLI_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vgrid/agent.hpp"
#include "vgrid/enforce.hpp"
#include "vgrid/guest.hpp"
#include "vgrid/rng.hpp"
#include "vgrid/scenario.hpp"
#include "vgrid/sim.hpp"

namespace vgrid {

// One exit code per failure class; diagnostics go to the error stream, data
// to files or the output stream.
inline constexpr int kExitOk = 0;
inline constexpr int kExitLoadError = 1;
inline constexpr int kExitGoldenMismatch = 2;
inline constexpr int kExitInvariantBreach = 3;

namespace cli_detail {

inline std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline bool write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return static_cast<bool>(out);
}

inline std::string kv_line(std::vector<std::pair<std::string, std::string>> kvs) {
    std::sort(kvs.begin(), kvs.end());
    std::string out;
    for (std::size_t i = 0; i < kvs.size(); ++i) {
        if (i) out += ' ';
        out += kvs[i].first;
        out += '=';
        out += kvs[i].second;
    }
    return out;
}

inline void report_scenario_error(std::ostream& err, const std::string& path,
                                  const ScenarioError& e) {
    if (e.line() == 0)
        err << "error: cannot open " << path << "\n";
    else
        err << "error: " << path << ": " << e.what() << "\n";
}

// 1-based line number where the two texts first differ; 0 when identical.
inline std::size_t first_divergent_line(const std::string& got, const std::string& want) {
    if (got == want) return 0;
    std::size_t line = 1;
    std::size_t i = 0;
    std::size_t n = std::min(got.size(), want.size());
    while (i < n && got[i] == want[i]) {
        if (got[i] == '\n') ++line;
        ++i;
    }
    return line;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunOptions {
    std::string scenario_path;
    std::optional<std::uint64_t> seed;          // overrides the file's seed
    std::optional<std::string> trace_out;       // stdout when absent
    std::optional<std::string> metrics_out;     // stdout when absent
    std::optional<Mechanism> mechanism;         // overrides the file's mechanism
};

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
    Scenario scenario;
    try {
        scenario = load_scenario_file(opt.scenario_path);
    } catch (const ScenarioError& e) {
        cli_detail::report_scenario_error(err, opt.scenario_path, e);
        return kExitLoadError;
    }
    if (opt.seed) scenario.seed = *opt.seed;
    if (opt.mechanism) {
        scenario.mechanism = *opt.mechanism;
        if (scenario.mechanism == Mechanism::Rewrite)
            for (const auto& job : scenario.jobs)
                for (const auto& task : job.tasks)
                    if (uses_reserved_registers(task.program.body)) {
                        err << "error: " << opt.scenario_path << ": task "
                            << to_string(task.id)
                            << " branches on a reserved register\n";
                        return kExitLoadError;
                    }
    }

    RunResult result;
    try {
        result = run_scenario(std::move(scenario));
    } catch (const InvariantBreach& e) {
        err << "invariant breach: " << e.what() << "\n";
        return kExitInvariantBreach;
    }

    std::string metrics = result.metrics.to_text();
    if (opt.trace_out) {
        if (!cli_detail::write_file(*opt.trace_out, result.trace)) {
            err << "error: cannot write " << *opt.trace_out << "\n";
            return kExitLoadError;
        }
    } else {
        out << result.trace;
    }
    if (opt.metrics_out) {
        if (!cli_detail::write_file(*opt.metrics_out, metrics)) {
            err << "error: cannot write " << *opt.metrics_out << "\n";
            return kExitLoadError;
        }
    } else {
        out << metrics;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyOptions {
    std::string scenario_path;
    std::string golden_path;
};

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
    (void)out;
    Scenario scenario;
    try {
        scenario = load_scenario_file(opt.scenario_path);
    } catch (const ScenarioError& e) {
        cli_detail::report_scenario_error(err, opt.scenario_path, e);
        return kExitLoadError;
    }
    auto golden = cli_detail::read_file(opt.golden_path);
    if (!golden) {
        err << "error: cannot open " << opt.golden_path << "\n";
        return kExitLoadError;
    }

    RunResult result;
    try {
        result = run_scenario(std::move(scenario));
    } catch (const InvariantBreach& e) {
        err << "invariant breach: " << e.what() << "\n";
        return kExitInvariantBreach;
    }

    std::size_t line = cli_detail::first_divergent_line(result.trace, *golden);
    if (line == 0) return kExitOk;
    err << "golden mismatch: " << opt.golden_path << ": first divergence at line "
        << line << "\n";
    return kExitGoldenMismatch;
}

// ---------------------------------------------------------------------------
// check-policy
// ---------------------------------------------------------------------------

struct CheckPolicyOptions {
    std::string policy_path;
    std::string program_path;
    Mechanism mode{Mechanism::StaticThenRun};
};

inline int cmd_check_policy(const CheckPolicyOptions& opt, std::ostream& out,
                            std::ostream& err) {
    auto policy_text = cli_detail::read_file(opt.policy_path);
    if (!policy_text) {
        err << "error: cannot open " << opt.policy_path << "\n";
        return kExitLoadError;
    }
    SecurityAutomaton policy;
    try {
        policy = parse_policy(*policy_text);
    } catch (const PolicyParseError& e) {
        err << "error: " << opt.policy_path << ": " << e.what() << "\n";
        return kExitLoadError;
    }

    auto program_text = cli_detail::read_file(opt.program_path);
    if (!program_text) {
        err << "error: cannot open " << opt.program_path << "\n";
        return kExitLoadError;
    }
    GuestProgram program;
    try {
        program = parse_program(*program_text);
    } catch (const GuestError& e) {
        err << "error: " << opt.program_path << ": " << e.what() << "\n";
        return kExitLoadError;
    }

    // Fixed oracle stream so the tool's output is reproducible.
    BranchOracle oracle;
    oracle.bits.resize(branch_count(program));
    Rng rng = substream(0, rng_purpose::kBranch, 0);
    for (std::size_t i = 0; i < oracle.bits.size(); ++i) oracle.bits[i] = rng.next_bool();

    using cli_detail::kv_line;
    switch (opt.mode) {
        case Mechanism::StaticThenRun: {
            Verdict v = static_analyze(policy, program);
            if (const auto* rej = std::get_if<RejectedStatically>(&v)) {
                out << kv_line({{"verdict", "rejected_static"},
                                {"witness", trace_events_string(rej->witness.events)}})
                    << "\n";
            } else {
                out << kv_line({{"verdict", "accepted_static"}}) << "\n";
            }
            return kExitOk;
        }
        case Mechanism::Monitor: {
            Verdict v = run_monitor(policy, program, std::move(oracle));
            if (const auto* ok = std::get_if<MonitoredOk>(&v)) {
                out << kv_line({{"events", trace_events_string(ok->trace.events)},
                                {"verdict", "ok"}})
                    << "\n";
            } else {
                const auto& tr = std::get<MonitoredTruncated>(v);
                out << kv_line({{"events", trace_events_string(tr.trace.events)},
                                {"index", std::to_string(tr.violating_index)},
                                {"verdict", "truncated"}})
                    << "\n";
            }
            return kExitOk;
        }
        case Mechanism::Combined: {
            CombinedResult res = run_combined(policy, program, std::move(oracle));
            std::string guards = std::to_string(res.guard_count);
            if (const auto* ok = std::get_if<MonitoredOk>(&res.verdict)) {
                out << kv_line({{"events", trace_events_string(ok->trace.events)},
                                {"guards", guards},
                                {"verdict", "ok"}})
                    << "\n";
            } else {
                const auto& tr = std::get<MonitoredTruncated>(res.verdict);
                out << kv_line({{"events", trace_events_string(tr.trace.events)},
                                {"guards", guards},
                                {"index", std::to_string(tr.violating_index)},
                                {"verdict", "truncated"}})
                    << "\n";
            }
            return kExitOk;
        }
        case Mechanism::Rewrite: {
            GuestProgram guarded;
            try {
                guarded = rewrite_program(policy, program);
            } catch (const ReservedRegisterError& e) {
                err << "error: " << opt.program_path << ": " << e.what() << "\n";
                return kExitLoadError;
            }
            std::size_t guards = instruction_count(guarded) - instruction_count(program);
            out << kv_line({{"guards", std::to_string(guards)},
                            {"verdict", "rewritten"}})
                << "\n";
            return kExitOk;
        }
    }
    err << "error: unknown mode\n";
    return kExitLoadError;
}

}  // namespace vgrid

#endif
