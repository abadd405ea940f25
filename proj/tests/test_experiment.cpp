#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hfsl/experiment.hpp"

using hfsl::ExperimentArgs;
using hfsl::ObjectiveValue;
using hfsl::PlanEntry;
using hfsl::Solution;

namespace {

std::string scenario_path(const char* name) {
    return std::string(HFSL_SCENARIO_DIR) + "/" + name;
}

std::string fresh_dir(const char* leaf) {
    const auto dir = std::filesystem::temp_directory_path() / "hfsl_experiment_tests" / leaf;
    std::filesystem::remove_all(dir);
    return dir.string();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

Solution make_solution(double v1, double v2, int s, int h) {
    Solution sol;
    sol.value = {v1, v2};
    sol.plan.workers = {PlanEntry{s, h, 1e9, 5e5}, PlanEntry{s, h + 1, 2e9, 4e5}};
    return sol;
}

ExperimentArgs tiny_args(const char* scenario, const char* out_leaf) {
    ExperimentArgs args;
    args.scenario_path = scenario_path(scenario);
    args.seeds = {4};
    args.generations = 3;
    args.population = 16;
    args.out_dir = fresh_dir(out_leaf);
    return args;
}

}  // namespace

TEST_CASE("output directory resolution prefers the flag, then the environment") {
    unsetenv("HFSL_OUT_ROOT");
    CHECK(hfsl::resolve_out_dir("given", "optimize") == "given");
    CHECK(hfsl::resolve_out_dir("", "optimize") == "out/optimize");
    setenv("HFSL_OUT_ROOT", "/tmp/elsewhere", 1);
    CHECK(hfsl::resolve_out_dir("", "sweep") == "/tmp/elsewhere/sweep");
    CHECK(hfsl::resolve_out_dir("flag wins", "sweep") == "flag wins");
    unsetenv("HFSL_OUT_ROOT");
}

TEST_CASE("front file keeps one sorted row set per nondominated solution") {
    std::vector<Solution> pop;
    pop.push_back(make_solution(2.0, 2.0, 3, 5));
    pop.push_back(make_solution(1.0, 3.0, 1, 4));
    pop.push_back(make_solution(2.5, 2.5, 2, 6));  // dominated by (2, 2)
    pop.push_back(make_solution(3.0, 1.0, 4, 7));
    pop.push_back(make_solution(1.0, 3.0, 9, 10));  // duplicate value, later index

    const std::string dir = fresh_dir("front");
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/front.csv";
    hfsl::write_front_csv(path, pop);

    const std::vector<std::string> lines = read_lines(path);
    REQUIRE(lines.size() == 8);  // comment + header + 3 solutions x 2 workers
    CHECK(lines[0] == "# manifest: manifest.json");
    CHECK(lines[1] == "solution,v1_seconds,v2_joules,worker,s,h,fe_hz,b_hz");

    // sorted by objectives, duplicate collapsed onto its first-seen plan
    CHECK(lines[2].rfind("1,1,3,1,1,4,", 0) == 0);
    CHECK(lines[3].rfind("1,1,3,2,1,5,", 0) == 0);
    CHECK(lines[4].rfind("2,2,2,1,3,5,", 0) == 0);
    CHECK(lines[6].rfind("3,3,1,1,4,7,", 0) == 0);
}

TEST_CASE("optimize writes fronts, traces, and a faithful manifest") {
    ExperimentArgs args = tiny_args("desk_k8.json", "optimize");
    args.algo = "nsga3";
    const hfsl::OptimizeOutcome out = hfsl::cmd_optimize(args);

    REQUIRE(out.seeds.size() == 1);
    CHECK(out.seeds[0].front_size > 0);
    CHECK(out.seeds[0].final_hypervolume > 0.0);
    for (const std::string& f : out.files) CHECK(std::filesystem::exists(f));

    const std::vector<std::string> trace = read_lines(args.out_dir + "/trace_seed4.csv");
    CHECK(trace.size() == 2 + 3);  // comment + header + one row per generation

    const nlohmann::json m = nlohmann::json::parse(
        std::ifstream(args.out_dir + "/manifest.json"));
    CHECK(m["algorithm"] == "nsga3");
    CHECK(m["seeds"] == std::vector<std::uint64_t>{4});
    CHECK(m["generations"] == 3);
    CHECK(m["tool_version"] == hfsl::kToolVersion);
    CHECK(m["scenario_hash"] == hfsl::fnv1a64_hex(hfsl::read_file(args.scenario_path)));
    CHECK(m["command"].get<std::string>().rfind("optimize --scenario ", 0) == 0);
}

TEST_CASE("optimize reruns are byte-identical") {
    ExperimentArgs args = tiny_args("desk_k8.json", "rerun_a");
    hfsl::cmd_optimize(args);
    ExperimentArgs again = args;
    again.out_dir = fresh_dir("rerun_b");
    hfsl::cmd_optimize(again);

    for (const char* name : {"front_seed4.csv", "trace_seed4.csv"})
        CHECK(hfsl::read_file(args.out_dir + "/" + name) ==
              hfsl::read_file(again.out_dir + "/" + name));
}

TEST_CASE("compare reports both algorithms against one stretched reference") {
    ExperimentArgs args = tiny_args("desk_k8.json", "compare");
    args.seeds = {1, 2};
    const hfsl::CompareOutcome out = hfsl::cmd_compare(args);

    REQUIRE(out.rows.size() == 4);  // 2 algorithms x 2 seeds
    for (const hfsl::SeedSummary& row : out.rows) CHECK(row.final_hypervolume > 0.0);

    const hfsl::Scenario sc = hfsl::load_scenario(args.scenario_path);
    const hfsl::ChannelDraws draws = hfsl::sample_channels(sc, sc.system.rng_seed);
    const ObjectiveValue fl =
        hfsl::CostModel(sc).evaluate(hfsl::fl_baseline_plan(sc), draws);
    CHECK(out.fl_point.v1 == fl.v1);
    CHECK(out.fl_point.v2 == fl.v2);

    const std::vector<std::string> summary = read_lines(args.out_dir + "/summary.csv");
    CHECK(summary.size() == 2 + 4);
    CHECK(std::filesystem::exists(args.out_dir + "/fl_baseline.csv"));
    CHECK(std::filesystem::exists(args.out_dir + "/front_pred-gan_seed1.csv"));
    CHECK(std::filesystem::exists(args.out_dir + "/trace_nsga3_seed2.csv"));
}

TEST_CASE("the no-split baseline plan is feasible and never splits") {
    const hfsl::Scenario sc = hfsl::load_scenario(scenario_path("desk_k8.json"));
    const hfsl::SplitPlan plan = hfsl::fl_baseline_plan(sc);
    REQUIRE(static_cast<int>(plan.workers.size()) == sc.system.workers);
    hfsl::CostModel(sc).validate(plan);
    double bw = 0.0;
    for (const PlanEntry& e : plan.workers) {
        CHECK_FALSE(e.is_split());
        CHECK(e.server_freq_hz == 0.0);
        bw += e.bandwidth_hz;
    }
    CHECK_THAT(bw, Catch::Matchers::WithinRel(sc.system.bandwidth_max_hz, 1e-12));
}

TEST_CASE("convergence run passes its own checks and labels files by seed") {
    ExperimentArgs args;
    args.scenario_path = scenario_path("convergence_default.json");
    args.seeds = {1, 2};
    args.out_dir = fresh_dir("convergence");
    const hfsl::ConvergenceOutcome out = hfsl::cmd_convergence(args);

    CHECK(out.ran);
    CHECK(out.ok());
    CHECK(out.rate_fitted);
    CHECK(out.worst_lemma_slack > 0.0);

    const std::string a = hfsl::read_file(args.out_dir + "/convergence_seed1.csv");
    const std::string b = hfsl::read_file(args.out_dir + "/convergence_seed2.csv");
    CHECK(a == b);  // the lab is deterministic; seeds only label files

    const std::vector<std::string> lines = read_lines(args.out_dir + "/convergence_seed1.csv");
    const hfsl::SyntheticTask task = hfsl::load_task(args.scenario_path);
    CHECK(static_cast<int>(lines.size()) == 2 + 1 + task.rounds);  // comment + header + t=0 + rounds
}

TEST_CASE("zero requested rounds produce an empty report and a success") {
    ExperimentArgs args;
    args.scenario_path = scenario_path("convergence_default.json");
    args.out_dir = fresh_dir("convergence_zero");
    args.rounds_override = 0;
    const hfsl::ConvergenceOutcome out = hfsl::cmd_convergence(args);

    CHECK_FALSE(out.ran);
    CHECK(out.ok());
    const std::vector<std::string> lines = read_lines(args.out_dir + "/convergence_seed1.csv");
    CHECK(lines.size() == 2);  // comment + header only
}

TEST_CASE("sweep rejects bad parameters and accepts the supported pair") {
    ExperimentArgs args = tiny_args("desk_k8.json", "sweep_bad");
    args.parameter = "latency";
    args.values = {1e6};
    CHECK_THROWS_AS(hfsl::cmd_sweep(args), hfsl::UsageError);

    args.parameter = "B_max";
    args.values = {};
    CHECK_THROWS_AS(hfsl::cmd_sweep(args), hfsl::UsageError);

    args.values = {1e6, -2e6};
    CHECK_THROWS_AS(hfsl::cmd_sweep(args), hfsl::UsageError);
}

TEST_CASE("sweep emits one statistics row per value and seed") {
    ExperimentArgs args = tiny_args("desk_k8.json", "sweep");
    args.seeds = {1, 2};
    args.parameter = "fE_max";
    args.values = {2e9, 4e9};
    const hfsl::SweepOutcome out = hfsl::cmd_sweep(args);

    REQUIRE(out.rows.size() == 4);
    for (const hfsl::SweepRow& row : out.rows) {
        CHECK(row.front_size > 0);
        CHECK(row.mean_offloaded_flops >= 0.0);
        CHECK(row.mean_offloaded_layers >= 0.0);
        CHECK(row.mean_offloaded_layers < 12.0);
    }
    CHECK(out.rows[0].value == 2e9);
    CHECK(out.rows[3].value == 4e9);
    CHECK(std::filesystem::exists(args.out_dir + "/front_v1_seed1.csv"));
    CHECK(std::filesystem::exists(args.out_dir + "/front_v2_seed2.csv"));
    CHECK(std::filesystem::exists(args.out_dir + "/sweep_stats.csv"));
}
