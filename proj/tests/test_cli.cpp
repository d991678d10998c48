#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <vgrid/cli.hpp>

using namespace vgrid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vgrid_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }

    fs::path file(const std::string& name, const std::string& content) const {
        fs::path p = path / name;
        std::ofstream out(p);
        out << content;
        return p;
    }
};

const char* kScenario = R"([sim]
horizon = 60
busy_fraction = 0

[policy]
policy nsar
states S0 S1
initial S0
on S0 read -> S1
on S1 read -> S1
on S0 send -> S0
on S0 write -> S0
on S1 write -> S1
on S0 compute -> S0
on S1 compute -> S1

[nodes]
node 1 honest always-on
node 2 honest always-on

[jobs]
job 1 owner 1
task duration 4
read 0
send 2
endtask
endjob
)";

const char* kNsarPolicy = R"(policy nsar
states S0 S1
initial S0
on S0 read -> S1
on S1 read -> S1
on S0 send -> S0
on S0 write -> S0
on S1 write -> S1
on S0 compute -> S0
on S1 compute -> S1
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_binary(const std::string& args, const fs::path& out_file) {
    std::string cmd = std::string(VGRID_BIN) + " " + args + " >" + out_file.string() +
                      " 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("run writes trace and metrics files", "[cli]") {
    TempDir tmp;
    fs::path scn = tmp.file("a.scn", kScenario);
    RunOptions opt;
    opt.scenario_path = scn.string();
    opt.trace_out = (tmp.path / "t.trace").string();
    opt.metrics_out = (tmp.path / "m.txt").string();
    std::ostringstream out, err;
    REQUIRE(cmd_run(opt, out, err) == kExitOk);
    REQUIRE(out.str().empty());
    std::string trace = slurp(tmp.path / "t.trace");
    std::string metrics = slurp(tmp.path / "m.txt");
    REQUIRE(trace.find("violation") != std::string::npos);
    REQUIRE(metrics.find("violations_blocked=1") != std::string::npos);
    REQUIRE(metrics.find("tasks_dispatched=1") != std::string::npos);
}

TEST_CASE("run falls back to stdout when no files are given", "[cli]") {
    TempDir tmp;
    fs::path scn = tmp.file("a.scn", kScenario);
    RunOptions opt;
    opt.scenario_path = scn.string();
    std::ostringstream out, err;
    REQUIRE(cmd_run(opt, out, err) == kExitOk);
    REQUIRE(out.str().find("\tconnect\t") != std::string::npos);
    REQUIRE(out.str().find("violations_blocked=1") != std::string::npos);
}

TEST_CASE("a seed override changes the run without touching the file", "[cli]") {
    TempDir tmp;
    // The branch substream keys off the scenario seed, so two seeds pick
    // different arms of this branchy task.
    std::string branchy = std::string(kScenario);
    branchy.replace(branchy.find("read 0\nsend 2\n"), 14,
                    "branch r1 {\nread 1\n} {\nwrite 1\n}\n");
    fs::path scn = tmp.file("b.scn", branchy);

    auto trace_for = [&](std::optional<std::uint64_t> seed) {
        RunOptions opt;
        opt.scenario_path = scn.string();
        opt.seed = seed;
        std::ostringstream out, err;
        REQUIRE(cmd_run(opt, out, err) == kExitOk);
        return out.str();
    };
    std::string base = trace_for(std::nullopt);
    REQUIRE(base == trace_for(std::nullopt));
    bool any_differs = false;
    for (std::uint64_t s : {1ull, 2ull, 3ull, 4ull, 5ull})
        if (trace_for(s) != base) any_differs = true;
    REQUIRE(any_differs);
}

TEST_CASE("a mechanism override revalidates reserved registers", "[cli]") {
    TempDir tmp;
    std::string reserved = std::string(kScenario);
    reserved.replace(reserved.find("read 0\nsend 2\n"), 14,
                     "branch r14 {\nhalt\n} {\nhalt\n}\n");
    fs::path scn = tmp.file("r.scn", reserved);

    RunOptions monitor_ok;
    monitor_ok.scenario_path = scn.string();
    std::ostringstream out1, err1;
    REQUIRE(cmd_run(monitor_ok, out1, err1) == kExitOk);

    RunOptions rw = monitor_ok;
    rw.mechanism = Mechanism::Rewrite;
    std::ostringstream out2, err2;
    REQUIRE(cmd_run(rw, out2, err2) == kExitLoadError);
    REQUIRE(err2.str().find("error:") != std::string::npos);
}

TEST_CASE("missing inputs exit with a load error", "[cli]") {
    RunOptions opt;
    opt.scenario_path = "/no/such/file.scn";
    std::ostringstream out, err;
    REQUIRE(cmd_run(opt, out, err) == kExitLoadError);
    REQUIRE(err.str().find("error: cannot open /no/such/file.scn") != std::string::npos);
}

TEST_CASE("verify accepts its own output and flags perturbations", "[cli]") {
    TempDir tmp;
    fs::path scn = tmp.file("a.scn", kScenario);
    RunOptions ropt;
    ropt.scenario_path = scn.string();
    ropt.trace_out = (tmp.path / "golden.trace").string();
    std::ostringstream out, err;
    REQUIRE(cmd_run(ropt, out, err) == kExitOk);

    VerifyOptions vopt;
    vopt.scenario_path = scn.string();
    vopt.golden_path = (tmp.path / "golden.trace").string();
    std::ostringstream vout, verr;
    REQUIRE(cmd_verify(vopt, vout, verr) == kExitOk);

    std::string golden = slurp(tmp.path / "golden.trace");
    auto third_line_end = golden.find('\n', golden.find('\n', golden.find('\n') + 1) + 1);
    std::string tweaked = golden;
    tweaked.insert(third_line_end, "X");
    tmp.file("tweaked.trace", tweaked);
    VerifyOptions bad = vopt;
    bad.golden_path = (tmp.path / "tweaked.trace").string();
    std::ostringstream bout, berr;
    REQUIRE(cmd_verify(bad, bout, berr) == kExitGoldenMismatch);
    REQUIRE(berr.str().find("first divergence at line 3") != std::string::npos);

    VerifyOptions gone = vopt;
    gone.golden_path = (tmp.path / "missing.trace").string();
    std::ostringstream gout, gerr;
    REQUIRE(cmd_verify(gone, gout, gerr) == kExitLoadError);
}

TEST_CASE("check-policy prints one sorted verdict line per mode", "[cli]") {
    TempDir tmp;
    fs::path pol = tmp.file("nsar.policy", kNsarPolicy);
    fs::path safe = tmp.file("safe.gst", "send 2\nread 0\n");
    fs::path leak = tmp.file("leak.gst", "read 0\nsend 2\n");

    auto check = [&](const fs::path& prog, const std::string& mode) {
        CheckPolicyOptions opt;
        opt.policy_path = pol.string();
        opt.program_path = prog.string();
        opt.mode = *mechanism_from_name(mode);
        std::ostringstream out, err;
        int rc = cmd_check_policy(opt, out, err);
        return std::make_pair(rc, out.str());
    };

    REQUIRE(check(safe, "static") ==
            std::make_pair(kExitOk, std::string("verdict=accepted_static\n")));
    REQUIRE(check(leak, "static") ==
            std::make_pair(kExitOk,
                           std::string("verdict=rejected_static witness=read,send\n")));
    REQUIRE(check(leak, "monitor") ==
            std::make_pair(kExitOk, std::string("events=read index=1 verdict=truncated\n")));
    REQUIRE(check(safe, "monitor") ==
            std::make_pair(kExitOk, std::string("events=send,read verdict=ok\n")));
    REQUIRE(check(leak, "combined") ==
            std::make_pair(kExitOk,
                           std::string("events=read guards=1 index=1 verdict=truncated\n")));
    REQUIRE(check(leak, "rewrite") ==
            std::make_pair(kExitOk, std::string("guards=2 verdict=rewritten\n")));

    fs::path bad = tmp.file("bad.gst", "fly 1\n");
    REQUIRE(check(bad, "monitor").first == kExitLoadError);

    fs::path badpol = tmp.file("bad.policy", "states S0\n");
    CheckPolicyOptions opt;
    opt.policy_path = badpol.string();
    opt.program_path = safe.string();
    opt.mode = Mechanism::StaticThenRun;
    std::ostringstream out, err;
    REQUIRE(cmd_check_policy(opt, out, err) == kExitLoadError);
}

TEST_CASE("the installed binary wires arguments through", "[cli]") {
    TempDir tmp;
    fs::path scn = tmp.file("a.scn", kScenario);
    fs::path log = tmp.path / "out.txt";

    REQUIRE(run_binary("run --scenario " + scn.string() + " --trace-out " +
                           (tmp.path / "t.trace").string() + " --metrics-out " +
                           (tmp.path / "m.txt").string(),
                       log) == 0);
    REQUIRE(run_binary("verify --scenario " + scn.string() + " --golden " +
                           (tmp.path / "t.trace").string(),
                       log) == 0);

    REQUIRE(run_binary("run --scenario /no/such.scn", log) == 1);
    REQUIRE(run_binary("run --frobnicate", log) == 1);
    std::string usage = slurp(log);
    REQUIRE(usage.find("Usage") != std::string::npos);

    REQUIRE(run_binary("--help", log) == 0);
}
