#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hfsl/common.hpp"
#include "hfsl/convergence_lab.hpp"
#include "hfsl/cost_model.hpp"
#include "hfsl/moea.hpp"
#include "hfsl/pred_gan.hpp"
#include "hfsl/scenario.hpp"

namespace hfsl {

/// Bad flag combinations detected past the parser; mapped to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Arguments and manifests
// ---------------------------------------------------------------------------

struct ExperimentArgs {
    std::string scenario_path;
    std::string algo = "pred-gan";  // or "nsga3"
    std::vector<std::uint64_t> seeds{1};
    int generations = 100;
    int population = 100;
    ObjectiveValue ref_point{36000.0, 10000.0};
    NoiseMode noise_mode = NoiseMode::as_written;
    std::string out_dir;
    // sweep only
    std::string parameter;  // "B_max" or "fE_max"
    std::vector<double> values;
    // convergence only: replaces the task's round count when >= 0
    int rounds_override = -1;
};

inline const char* noise_mode_name(NoiseMode m) {
    return m == NoiseMode::as_written ? "as-written" : "symmetric";
}

/// Everything needed to reproduce a run. Re-invoking the same command with
/// the same inputs rewrites every CSV byte for byte.
struct RunManifest {
    std::string command;
    std::string scenario_path;
    std::string scenario_hash;
    std::string algorithm;
    std::vector<std::uint64_t> seeds;
    int generations = 0;
    int population = 0;
    ObjectiveValue ref_point{0.0, 0.0};
    std::string noise_mode;
    std::string parameter;
    std::vector<double> values;
    std::string out_dir;
    std::string tool_version = kToolVersion;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["scenario"] = scenario_path;
        j["scenario_hash"] = scenario_hash;
        j["algorithm"] = algorithm;
        j["seeds"] = seeds;
        j["generations"] = generations;
        j["population"] = population;
        j["ref_point"] = {ref_point.v1, ref_point.v2};
        j["noise_mode"] = noise_mode;
        if (!parameter.empty()) {
            j["parameter"] = parameter;
            j["values"] = values;
        }
        j["out_dir"] = out_dir;
        j["tool_version"] = tool_version;
        return j;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for writing: " + path);
        f << to_json().dump(2) << '\n';
    }
};

inline RunManifest make_manifest(const std::string& cmd, const ExperimentArgs& args) {
    RunManifest m;
    m.scenario_path = args.scenario_path;
    m.scenario_hash = fnv1a64_hex(read_file(args.scenario_path));
    m.algorithm = args.algo;
    m.seeds = args.seeds;
    m.generations = args.generations;
    m.population = args.population;
    m.ref_point = args.ref_point;
    m.noise_mode = noise_mode_name(args.noise_mode);
    m.parameter = args.parameter;
    m.values = args.values;
    m.out_dir = args.out_dir;

    std::ostringstream c;
    c << cmd << " --scenario " << args.scenario_path;
    if (cmd == "optimize" || cmd == "sweep") c << " --algo " << args.algo;
    c << " --seeds";
    for (std::uint64_t s : args.seeds) c << ' ' << s;
    if (cmd != "convergence") {
        c << " --gens " << args.generations << " --pop " << args.population << " --ref-point "
          << fmt_double(args.ref_point.v1) << ' ' << fmt_double(args.ref_point.v2)
          << " --gan-noise-mode " << m.noise_mode;
    }
    if (!args.parameter.empty()) {
        c << " --param " << args.parameter << " --values";
        for (double v : args.values) c << ' ' << fmt_double(v);
    }
    if (args.rounds_override >= 0) c << " --rounds " << args.rounds_override;
    c << " --out " << args.out_dir;
    m.command = c.str();
    return m;
}

/// Output directory resolution: explicit flag, then $HFSL_OUT_ROOT/<cmd>,
/// then ./out/<cmd>.
inline std::string resolve_out_dir(const std::string& flag, const std::string& cmd) {
    if (!flag.empty()) return flag;
    if (const char* root = std::getenv("HFSL_OUT_ROOT")) return std::string(root) + "/" + cmd;
    return "out/" + cmd;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

/// Every data file opens with a comment line pointing at the manifest that
/// reproduces it.
inline std::string with_manifest_line(const std::string& header) {
    return "# manifest: manifest.json\n" + header;
}

/// Final-front file in long format: one row per (solution, worker), so the
/// schema is the same for every worker count. Solutions are numbered after
/// sorting by objective value; exact duplicates keep the first plan.
inline void write_front_csv(const std::string& path, const std::vector<Solution>& population) {
    CsvWriter csv(with_manifest_line("solution,v1_seconds,v2_joules,worker,s,h,fe_hz,b_hz"));

    std::vector<ObjectiveValue> vals;
    for (const Solution& s : population) vals.push_back(s.value);
    std::vector<int> idx = nondominated_indices(vals);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (vals[a].v1 != vals[b].v1) return vals[a].v1 < vals[b].v1;
        if (vals[a].v2 != vals[b].v2) return vals[a].v2 < vals[b].v2;
        return a < b;
    });
    int row = 0;
    bool have_prev = false;
    ObjectiveValue prev{0.0, 0.0};
    for (int i : idx) {
        if (have_prev && vals[i].v1 == prev.v1 && vals[i].v2 == prev.v2) continue;
        prev = vals[i];
        have_prev = true;
        ++row;
        for (std::size_t k = 0; k < population[i].plan.workers.size(); ++k) {
            const PlanEntry& e = population[i].plan.workers[k];
            csv.field(row)
                .field(vals[i].v1)
                .field(vals[i].v2)
                .field(static_cast<int>(k) + 1)
                .field(e.s_cut)
                .field(e.h_cut)
                .field(e.server_freq_hz)
                .field(e.bandwidth_hz);
            csv.endrow();
        }
    }
    csv.save(path);
}

inline void write_trace_csv(const std::string& path, const std::vector<GenerationTrace>& trace) {
    CsvWriter csv(with_manifest_line("generation,hypervolume,z_pairs,disc_loss,gen_loss,branch"));
    for (const GenerationTrace& tr : trace) {
        csv.field(tr.generation)
            .field(tr.hypervolume)
            .field(tr.z_pairs)
            .field(tr.disc_loss)
            .field(tr.gen_loss)
            .field(tr.branch);
        csv.endrow();
    }
    csv.save(path);
}

// ---------------------------------------------------------------------------
// Shared run plumbing
// ---------------------------------------------------------------------------

inline OptimizerConfig optimizer_config(const ExperimentArgs& args, const std::string& algo) {
    OptimizerConfig cfg;
    cfg.population = args.population;
    cfg.generations = args.generations;
    cfg.use_gan = algo == "pred-gan";
    cfg.noise_mode = args.noise_mode;
    cfg.ref_point = args.ref_point;
    return cfg;
}

/// Seeds fan out onto separate threads; every run is self-contained (own
/// random streams, shared inputs const), so the results are identical to a
/// serial loop.
inline std::vector<RunResult> run_seeds(const Scenario& sc, const ChannelDraws& draws,
                                        const OptimizerConfig& cfg,
                                        const std::vector<std::uint64_t>& seeds) {
    std::vector<std::future<RunResult>> futs;
    futs.reserve(seeds.size());
    for (std::uint64_t seed : seeds)
        futs.push_back(std::async(std::launch::async,
                                  [&, seed] { return run_optimizer(sc, draws, cfg, seed); }));
    std::vector<RunResult> out;
    out.reserve(seeds.size());
    for (auto& f : futs) out.push_back(f.get());
    return out;
}

inline std::vector<ObjectiveValue> final_front(const RunResult& res) {
    std::vector<ObjectiveValue> vals;
    for (const Solution& s : res.population) vals.push_back(s.value);
    return pareto_front(vals);
}

/// Whole-model baseline: nobody splits, the bandwidth is shared equally,
/// and no server frequency is claimed.
inline SplitPlan fl_baseline_plan(const Scenario& sc) {
    SplitPlan plan;
    for (int k = 0; k < sc.system.workers; ++k)
        plan.workers.push_back(
            {1, 1, 0.0, sc.system.bandwidth_max_hz / sc.system.workers});
    return plan;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

struct SeedSummary {
    std::uint64_t seed = 0;
    std::string algorithm;
    double final_hypervolume = 0.0;  // at the configured reference point
    int front_size = 0;
    bool fl_dominated = false;
};

struct OptimizeOutcome {
    std::vector<SeedSummary> seeds;
    std::vector<std::string> files;
};

inline OptimizeOutcome cmd_optimize(const ExperimentArgs& args) {
    const Scenario sc = load_scenario(args.scenario_path);
    const ChannelDraws draws = sample_channels(sc, sc.system.rng_seed);
    std::filesystem::create_directories(args.out_dir);

    const OptimizerConfig cfg = optimizer_config(args, args.algo);
    const std::vector<RunResult> runs = run_seeds(sc, draws, cfg, args.seeds);

    OptimizeOutcome out;
    for (std::size_t i = 0; i < args.seeds.size(); ++i) {
        const std::string tag = "_seed" + std::to_string(args.seeds[i]);
        const std::string front_path = args.out_dir + "/front" + tag + ".csv";
        const std::string trace_path = args.out_dir + "/trace" + tag + ".csv";
        write_front_csv(front_path, runs[i].population);
        write_trace_csv(trace_path, runs[i].trace);
        out.files.push_back(front_path);
        out.files.push_back(trace_path);

        SeedSummary s;
        s.seed = args.seeds[i];
        s.algorithm = args.algo;
        s.final_hypervolume = runs[i].trace.back().hypervolume;
        s.front_size = static_cast<int>(runs[i].trace.back().front.size());
        out.seeds.push_back(s);
    }
    const RunManifest manifest = make_manifest("optimize", args);
    manifest.save(args.out_dir + "/manifest.json");
    out.files.push_back(args.out_dir + "/manifest.json");
    return out;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareOutcome {
    std::vector<SeedSummary> rows;  // both algorithms, hypervolume at the rescaled point
    ObjectiveValue rescaled_ref{0.0, 0.0};
    ObjectiveValue fl_point{0.0, 0.0};
    double median_hv_pred_gan = 0.0;
    double median_hv_nsga3 = 0.0;
    int fl_dominated_seeds = 0;  // pred-gan fronts weakly dominating the baseline
    std::vector<std::string> files;
};

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline CompareOutcome cmd_compare(const ExperimentArgs& args) {
    const Scenario sc = load_scenario(args.scenario_path);
    const ChannelDraws draws = sample_channels(sc, sc.system.rng_seed);
    std::filesystem::create_directories(args.out_dir);

    const std::vector<std::string> algos{"pred-gan", "nsga3"};
    std::vector<std::vector<RunResult>> runs;
    for (const std::string& algo : algos)
        runs.push_back(run_seeds(sc, draws, optimizer_config(args, algo), args.seeds));

    CompareOutcome out;

    // common reference point stretched past every observed front
    double max1 = 0.0, max2 = 0.0;
    for (const auto& algo_runs : runs)
        for (const RunResult& r : algo_runs)
            for (const ObjectiveValue& v : final_front(r)) {
                max1 = std::max(max1, v.v1);
                max2 = std::max(max2, v.v2);
            }
    out.rescaled_ref = {1.05 * max1, 1.05 * max2};

    const CostModel model(sc);
    const SplitPlan fl_plan = fl_baseline_plan(sc);
    out.fl_point = model.evaluate(fl_plan, draws);

    CsvWriter summary(
        with_manifest_line("algorithm,seed,final_hypervolume,ref_v1,ref_v2,fl_dominated"));
    std::vector<double> hv_pg, hv_n3;
    for (std::size_t a = 0; a < algos.size(); ++a) {
        for (std::size_t i = 0; i < args.seeds.size(); ++i) {
            const RunResult& r = runs[a][i];
            const std::string tag = algos[a] + "_seed" + std::to_string(args.seeds[i]);
            write_front_csv(args.out_dir + "/front_" + tag + ".csv", r.population);
            write_trace_csv(args.out_dir + "/trace_" + tag + ".csv", r.trace);
            out.files.push_back(args.out_dir + "/front_" + tag + ".csv");
            out.files.push_back(args.out_dir + "/trace_" + tag + ".csv");

            const std::vector<ObjectiveValue> front = final_front(r);
            SeedSummary row;
            row.seed = args.seeds[i];
            row.algorithm = algos[a];
            row.final_hypervolume = hypervolume(front, out.rescaled_ref);
            row.front_size = static_cast<int>(front.size());
            for (const ObjectiveValue& v : front)
                if (v.v1 <= out.fl_point.v1 && v.v2 <= out.fl_point.v2) row.fl_dominated = true;
            (algos[a] == "pred-gan" ? hv_pg : hv_n3).push_back(row.final_hypervolume);
            if (algos[a] == "pred-gan" && row.fl_dominated) ++out.fl_dominated_seeds;
            out.rows.push_back(row);

            summary.field(row.algorithm)
                .field(row.seed)
                .field(row.final_hypervolume)
                .field(out.rescaled_ref.v1)
                .field(out.rescaled_ref.v2)
                .field(row.fl_dominated ? 1 : 0);
            summary.endrow();
        }
    }
    out.median_hv_pred_gan = median_of(hv_pg);
    out.median_hv_nsga3 = median_of(hv_n3);

    summary.save(args.out_dir + "/summary.csv");
    out.files.push_back(args.out_dir + "/summary.csv");

    CsvWriter fl(with_manifest_line("v1_seconds,v2_joules"));
    fl.field(out.fl_point.v1).field(out.fl_point.v2);
    fl.endrow();
    fl.save(args.out_dir + "/fl_baseline.csv");
    out.files.push_back(args.out_dir + "/fl_baseline.csv");

    ExperimentArgs stamped = args;
    stamped.algo = "both";
    const RunManifest manifest = make_manifest("compare", stamped);
    manifest.save(args.out_dir + "/manifest.json");
    out.files.push_back(args.out_dir + "/manifest.json");
    return out;
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

struct ConvergenceOutcome {
    bool ran = false;  // false when zero rounds were requested
    bool lemma_ok = true;
    bool theorem_ok = true;
    bool rate_ok = true;
    bool rate_fitted = false;
    double worst_lemma_slack = 0.0;
    double worst_theorem_margin = 0.0;
    double rate_rel_diff = 0.0;
    std::vector<std::string> files;

    bool ok() const { return lemma_ok && theorem_ok && (!rate_fitted || rate_ok); }
};

inline ConvergenceOutcome cmd_convergence(const ExperimentArgs& args) {
    SyntheticTask task = load_task(args.scenario_path);
    if (args.rounds_override >= 0) task.rounds = args.rounds_override;
    std::filesystem::create_directories(args.out_dir);

    ConvergenceOutcome out;
    CsvWriter csv(with_manifest_line("t,gap,bound,worst_lemma_slack"));

    if (task.rounds > 0) {
        const LabRun run = run_lab(task);
        const Lemma1Report lem = check_lemma1(task, run);
        const TheoremReport th = check_theorem1(task, run);

        csv.field(0).field(run.gap0).field(th.bounds[0]).field(std::string());
        csv.endrow();
        for (std::size_t t = 0; t < run.rounds.size(); ++t) {
            csv.field(t + 1)
                .field(run.rounds[t].gap_end)
                .field(th.bounds[t + 1])
                .field(lem.per_round_worst[t]);
            csv.endrow();
        }

        out.ran = true;
        out.lemma_ok = lem.ok;
        out.theorem_ok = th.ok;
        out.worst_lemma_slack = lem.worst_slack;
        out.worst_theorem_margin = th.worst_margin;
        if (task.rounds >= 2 && task.fit_rounds <= task.rounds) {
            const RateMatch rm = compare_rates(task);
            out.rate_fitted = true;
            out.rate_rel_diff = rm.rel_diff;
            out.rate_ok = rm.rel_diff < 0.10;
        }
    }

    // the lab has no random element, so seeds only label the files
    for (std::uint64_t seed : args.seeds) {
        const std::string path =
            args.out_dir + "/convergence_seed" + std::to_string(seed) + ".csv";
        csv.save(path);
        out.files.push_back(path);
    }

    CsvWriter summary(with_manifest_line("property,result,detail"));
    auto row = [&](const char* name, bool ok, double detail) {
        summary.field(std::string(name))
            .field(std::string(ok ? "pass" : "fail"))
            .field(detail);
        summary.endrow();
    };
    if (out.ran) {
        row("lemma1", out.lemma_ok, out.worst_lemma_slack);
        row("theorem1", out.theorem_ok, out.worst_theorem_margin);
        if (out.rate_fitted) row("rate_match", out.rate_ok, out.rate_rel_diff);
    }
    summary.save(args.out_dir + "/summary.csv");
    out.files.push_back(args.out_dir + "/summary.csv");

    ExperimentArgs stamped = args;
    stamped.algo = "-";
    const RunManifest manifest = make_manifest("convergence", stamped);
    manifest.save(args.out_dir + "/manifest.json");
    out.files.push_back(args.out_dir + "/manifest.json");
    return out;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    double value = 0.0;
    std::uint64_t seed = 0;
    int front_size = 0;
    double mean_offloaded_flops = 0.0;   // per datum, averaged over workers and front plans
    double mean_offloaded_layers = 0.0;
};

struct SweepOutcome {
    std::vector<SweepRow> rows;
    std::vector<std::string> files;
};

inline SweepOutcome cmd_sweep(const ExperimentArgs& args) {
    if (args.parameter != "B_max" && args.parameter != "fE_max")
        throw UsageError("sweep: --param must be B_max or fE_max");
    if (args.values.empty()) throw UsageError("sweep: --values requires at least one value");
    for (double v : args.values)
        if (v <= 0.0) throw UsageError("sweep: values must be positive");

    const Scenario base = load_scenario(args.scenario_path);
    std::filesystem::create_directories(args.out_dir);

    SweepOutcome out;
    CsvWriter stats(with_manifest_line(
        "parameter,value,seed,front_size,mean_offloaded_flops,mean_offloaded_layers"));
    for (std::size_t vi = 0; vi < args.values.size(); ++vi) {
        Scenario sc = base;
        if (args.parameter == "B_max")
            sc.system.bandwidth_max_hz = args.values[vi];
        else
            sc.system.server_freq_max_hz = args.values[vi];
        sc.validate();
        const ChannelDraws draws = sample_channels(sc, sc.system.rng_seed);
        const CostModel model(sc);

        const std::vector<RunResult> runs =
            run_seeds(sc, draws, optimizer_config(args, args.algo), args.seeds);
        for (std::size_t i = 0; i < args.seeds.size(); ++i) {
            const RunResult& r = runs[i];
            const std::string tag =
                "v" + std::to_string(vi + 1) + "_seed" + std::to_string(args.seeds[i]);
            write_front_csv(args.out_dir + "/front_" + tag + ".csv", r.population);
            out.files.push_back(args.out_dir + "/front_" + tag + ".csv");

            // average offload statistics over the front's plans
            std::vector<ObjectiveValue> vals;
            for (const Solution& s : r.population) vals.push_back(s.value);
            const std::vector<int> idx = nondominated_indices(vals);
            double flops = 0.0, layers = 0.0;
            for (int ix : idx) {
                double pf = 0.0, pl = 0.0;
                for (const PlanEntry& e : r.population[ix].plan.workers) {
                    pf += model.offloaded_flops(e);
                    pl += model.offloaded_layers(e);
                }
                flops += pf / sc.system.workers;
                layers += pl / sc.system.workers;
            }
            SweepRow row;
            row.value = args.values[vi];
            row.seed = args.seeds[i];
            row.front_size = static_cast<int>(idx.size());
            row.mean_offloaded_flops = idx.empty() ? 0.0 : flops / idx.size();
            row.mean_offloaded_layers = idx.empty() ? 0.0 : layers / idx.size();
            out.rows.push_back(row);

            stats.field(args.parameter)
                .field(row.value)
                .field(row.seed)
                .field(row.front_size)
                .field(row.mean_offloaded_flops)
                .field(row.mean_offloaded_layers);
            stats.endrow();
        }
    }
    stats.save(args.out_dir + "/sweep_stats.csv");
    out.files.push_back(args.out_dir + "/sweep_stats.csv");

    const RunManifest manifest = make_manifest("sweep", args);
    manifest.save(args.out_dir + "/manifest.json");
    out.files.push_back(args.out_dir + "/manifest.json");
    return out;
}

}  // namespace hfsl
