#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vgrid/cli.hpp"

namespace {

std::optional<vgrid::Mechanism> parse_mechanism(const std::string& name) {
    return vgrid::mechanism_from_name(name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"volunteer grid trust simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string golden_path;
    std::string trace_out;
    std::string metrics_out;
    std::string mechanism_name;
    std::string policy_path;
    std::string program_path;
    std::string mode_name;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "run a scenario and emit trace + metrics");
    run->add_option("--scenario", scenario_path, "scenario file")->required();
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--trace-out", trace_out, "trace output path (stdout when absent)");
    run->add_option("--metrics-out", metrics_out,
                    "metrics output path (stdout when absent)");
    run->add_option("--mechanism", mechanism_name, "override the enforcement mechanism")
        ->check(CLI::IsMember({"monitor", "static", "rewrite", "combined"}));

    auto* verify = app.add_subcommand("verify", "re-run and compare against a golden trace");
    verify->add_option("--scenario", scenario_path, "scenario file")->required();
    verify->add_option("--golden", golden_path, "golden trace file")->required();

    auto* check = app.add_subcommand("check-policy", "run one enforcement mode standalone");
    check->add_option("--policy", policy_path, "policy file")->required();
    check->add_option("--program", program_path, "guest program file")->required();
    check->add_option("--mode", mode_name, "enforcement mode")
        ->required()
        ->check(CLI::IsMember({"monitor", "static", "rewrite", "combined"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return vgrid::kExitLoadError;
    }

    if (run->parsed()) {
        vgrid::RunOptions opt;
        opt.scenario_path = scenario_path;
        if (run->count("--seed")) opt.seed = seed;
        if (run->count("--trace-out")) opt.trace_out = trace_out;
        if (run->count("--metrics-out")) opt.metrics_out = metrics_out;
        if (run->count("--mechanism")) opt.mechanism = parse_mechanism(mechanism_name);
        return vgrid::cmd_run(opt, std::cout, std::cerr);
    }
    if (verify->parsed()) {
        vgrid::VerifyOptions opt;
        opt.scenario_path = scenario_path;
        opt.golden_path = golden_path;
        return vgrid::cmd_verify(opt, std::cout, std::cerr);
    }
    vgrid::CheckPolicyOptions opt;
    opt.policy_path = policy_path;
    opt.program_path = program_path;
    opt.mode = *parse_mechanism(mode_name);
    return vgrid::cmd_check_policy(opt, std::cout, std::cerr);
}
