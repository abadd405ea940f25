#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hfsl/experiment.hpp"

namespace {

struct CliState {
    hfsl::ExperimentArgs args;
    std::vector<double> ref{36000.0, 10000.0};
    std::string noise = "as-written";
    std::string out_flag;
};

void add_common_flags(CLI::App* cmd, CliState& st, bool with_optimizer_flags) {
    cmd->add_option("--scenario", st.args.scenario_path, "input JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seeds,--seed", st.args.seeds, "run seeds")->check(CLI::PositiveNumber);
    cmd->add_option("--out", st.out_flag,
                    "output directory (default: $HFSL_OUT_ROOT/<command> or out/<command>)");
    if (with_optimizer_flags) {
        cmd->add_option("--gens", st.args.generations, "generations per run")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--pop", st.args.population, "population size")
            ->check(CLI::Range(2, 1000000));
        cmd->add_option("--ref-point", st.ref, "hypervolume reference point: seconds joules")
            ->expected(2);
        cmd->add_option("--gan-noise-mode", st.noise, "generator noise covariance source")
            ->check(CLI::IsMember({"as-written", "symmetric"}));
    }
}

void finalize(CliState& st, const std::string& cmd_name) {
    st.args.ref_point = {st.ref[0], st.ref[1]};
    st.args.noise_mode =
        st.noise == "symmetric" ? hfsl::NoiseMode::symmetric : hfsl::NoiseMode::as_written;
    st.args.out_dir = hfsl::resolve_out_dir(st.out_flag, cmd_name);
}

int run_optimize(CliState& st) {
    finalize(st, "optimize");
    const hfsl::OptimizeOutcome out = hfsl::cmd_optimize(st.args);
    for (const hfsl::SeedSummary& s : out.seeds)
        std::printf("%s seed %llu: front size %d, final hypervolume %.6g\n", s.algorithm.c_str(),
                    static_cast<unsigned long long>(s.seed), s.front_size, s.final_hypervolume);
    std::printf("wrote %zu files to %s\n", out.files.size(), st.args.out_dir.c_str());
    return 0;
}

int run_compare(CliState& st) {
    finalize(st, "compare");
    const hfsl::CompareOutcome out = hfsl::cmd_compare(st.args);
    for (const hfsl::SeedSummary& r : out.rows)
        std::printf("%s seed %llu: front size %d, final hypervolume %.6g%s\n", r.algorithm.c_str(),
                    static_cast<unsigned long long>(r.seed), r.front_size, r.final_hypervolume,
                    r.fl_dominated ? ", dominates FL baseline" : "");
    std::printf("reference point (%.6g, %.6g) covers all observed fronts\n", out.rescaled_ref.v1,
                out.rescaled_ref.v2);
    std::printf("median final hypervolume: pred-gan %.6g, nsga3 %.6g\n", out.median_hv_pred_gan,
                out.median_hv_nsga3);
    std::printf("FL baseline (%.6g s, %.6g J) dominated in %d of %zu pred-gan seeds\n",
                out.fl_point.v1, out.fl_point.v2, out.fl_dominated_seeds, st.args.seeds.size());
    std::printf("wrote %zu files to %s\n", out.files.size(), st.args.out_dir.c_str());
    return 0;
}

int run_convergence(CliState& st) {
    finalize(st, "convergence");
    const hfsl::ConvergenceOutcome out = hfsl::cmd_convergence(st.args);
    if (!out.ran) {
        std::printf("no rounds requested; empty report\n");
    } else {
        std::printf("lemma1: %s (worst slack %.6g)\n", out.lemma_ok ? "pass" : "fail",
                    out.worst_lemma_slack);
        std::printf("theorem1: %s (worst margin %.6g)\n", out.theorem_ok ? "pass" : "fail",
                    out.worst_theorem_margin);
        if (out.rate_fitted)
            std::printf("rate_match: %s (relative difference %.6g)\n", out.rate_ok ? "pass" : "fail",
                        out.rate_rel_diff);
    }
    std::printf("wrote %zu files to %s\n", out.files.size(), st.args.out_dir.c_str());
    return out.ok() ? 0 : 4;
}

int run_sweep(CliState& st) {
    finalize(st, "sweep");
    const hfsl::SweepOutcome out = hfsl::cmd_sweep(st.args);
    for (const hfsl::SweepRow& r : out.rows)
        std::printf("%s=%.6g seed %llu: front size %d, mean offloaded %.6g FLOPs, %.6g layers\n",
                    st.args.parameter.c_str(), r.value, static_cast<unsigned long long>(r.seed),
                    r.front_size, r.mean_offloaded_flops, r.mean_offloaded_layers);
    std::printf("wrote %zu files to %s\n", out.files.size(), st.args.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid federated split learning: cost model, optimizers, convergence lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hfsl::kToolVersion));

    CliState st;

    CLI::App* optimize =
        app.add_subcommand("optimize", "run one optimizer over seeds, write fronts and traces");
    add_common_flags(optimize, st, true);
    optimize->add_option("--algo", st.args.algo, "optimizer")
        ->check(CLI::IsMember({"pred-gan", "nsga3"}));

    CLI::App* compare = app.add_subcommand(
        "compare", "run both optimizers over the same seeds, write summary and FL baseline");
    add_common_flags(compare, st, true);

    CLI::App* convergence = app.add_subcommand(
        "convergence", "run the delayed-gradient lab on a task file, check the bounds");
    add_common_flags(convergence, st, false);
    convergence->add_option("--rounds", st.args.rounds_override, "override the task's round count")
        ->check(CLI::NonNegativeNumber);

    CLI::App* sweep = app.add_subcommand(
        "sweep", "re-optimize under a range of one system parameter, write offload statistics");
    add_common_flags(sweep, st, true);
    sweep->add_option("--algo", st.args.algo, "optimizer")
        ->check(CLI::IsMember({"pred-gan", "nsga3"}));
    sweep->add_option("--param", st.args.parameter, "system parameter to vary")
        ->required()
        ->check(CLI::IsMember({"B_max", "fE_max"}));
    sweep->add_option("--values", st.args.values, "parameter values, one run set per value")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(optimize)) return run_optimize(st);
        if (app.got_subcommand(compare)) return run_compare(st);
        if (app.got_subcommand(convergence)) return run_convergence(st);
        return run_sweep(st);
    } catch (const hfsl::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const hfsl::FeasibilityError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const hfsl::ScenarioError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
