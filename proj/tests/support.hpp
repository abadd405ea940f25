#pragma once

// Shared helpers for the test binaries: an independent straight-line
// recomputation of the round cost (kept free of the library's prefix-sum
// machinery on purpose) and random scenario/plan generators.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hfsl/common.hpp"
#include "hfsl/cost_model.hpp"
#include "hfsl/scenario.hpp"

namespace testsupport {

struct OracleRound {
    double t_max = 0;
    double e_sum = 0;
};

// Transcribes the per-round timing/energy algebra term by term with explicit
// layer loops; no shared code with hfsl::CostModel beyond the data types.
inline OracleRound oracle_round(const hfsl::Scenario& sc, const hfsl::SplitPlan& plan,
                                const std::vector<double>& gains) {
    const int K = sc.system.workers;
    const int L = sc.profile.size();
    std::vector<double> total(K), energy(K), par_d(K), par_u(K), up(K), dn(K);

    for (int k = 0; k < K; ++k) {
        const hfsl::WorkerConfig& w = sc.workers[k];
        const hfsl::PlanEntry& e = plan.workers[k];
        const double g2 = gains[k] * gains[k];
        up[k] = e.bandwidth_hz *
                std::log2(1.0 + w.tx_power_w * g2 / (e.bandwidth_hz * sc.system.noise_w_per_hz));
        dn[k] = e.bandwidth_hz * std::log2(1.0 + sc.system.server_tx_power_w * g2 /
                                                     (e.bandwidth_hz * sc.system.noise_w_per_hz));
        const double b = double(w.batch);

        if (e.s_cut < e.h_cut) {
            const double t_uf = b * sc.profile.layers[e.s_cut - 1].fwd_out_bits / up[k];
            const double t_df = b * sc.profile.layers[e.h_cut - 1].fwd_out_bits / dn[k];
            const double t_ub = b * sc.profile.layers[e.h_cut].bwd_out_bits / up[k];
            const double t_db = b * sc.profile.layers[e.s_cut].bwd_out_bits / dn[k];
            double mid_f = 0, mid_b = 0, front = 0, back = 0, par_bits = 0;
            for (int l = 1; l <= L; ++l) {
                const hfsl::Layer& lay = sc.profile.layers[l - 1];
                if (l <= e.s_cut) {
                    front += b * (lay.fwd_flops + lay.bwd_flops);
                    par_bits += lay.param_bits;
                } else if (l <= e.h_cut) {
                    mid_f += lay.fwd_flops;
                    mid_b += lay.bwd_flops;
                } else {
                    back += b * (lay.fwd_flops + lay.bwd_flops);
                    par_bits += lay.param_bits;
                }
            }
            const double srv = e.server_freq_hz * sc.system.server_flops_per_cycle;
            const double t_ef = b * mid_f / srv;
            const double t_eb = b * mid_b / srv;
            const double comm_f = t_uf + t_ef + t_df;
            const double comm_b = t_ub + t_eb + t_db;
            const double cap = w.freq_max_hz * w.flops_per_cycle;
            const double t1 = std::max(comm_f, back / cap);
            const double t2 = std::max(comm_b, back / cap);
            const double t3 = std::max(comm_b, front / cap);
            const double t4 = std::max(comm_f, front / cap);
            const double f1 = back / (t1 * w.flops_per_cycle);
            const double f2 = back / (t2 * w.flops_per_cycle);
            const double f3 = front / (t3 * w.flops_per_cycle);
            const double f4 = front / (t4 * w.flops_per_cycle);
            par_d[k] = par_bits / dn[k];
            par_u[k] = par_bits / up[k];
            const double half_n = w.iterations / 2.0;
            total[k] = half_n * (t1 + t2 + t3 + t4) + par_d[k] + par_u[k];
            const double dyn = w.eff_capacitance *
                               (f1 * f1 * f1 * t1 + f2 * f2 * f2 * t2 + f3 * f3 * f3 * t3 +
                                f4 * f4 * f4 * t4);
            energy[k] = half_n * (dyn + 2.0 * w.tx_power_w * (t_uf + t_ub)) +
                        w.tx_power_w * par_u[k];
        } else {
            double all_flops = 0, all_bits = 0;
            for (int l = 1; l <= L; ++l) {
                all_flops += sc.profile.layers[l - 1].fwd_flops + sc.profile.layers[l - 1].bwd_flops;
                all_bits += sc.profile.layers[l - 1].param_bits;
            }
            par_d[k] = all_bits / dn[k];
            par_u[k] = all_bits / up[k];
            total[k] = double(w.epochs) * double(w.data_size) * all_flops /
                           (w.freq_max_hz * w.flops_per_cycle) +
                       par_d[k] + par_u[k];
        }
    }

    OracleRound r;
    for (int k = 0; k < K; ++k) r.t_max = std::max(r.t_max, total[k]);
    for (int k = 0; k < K; ++k) {
        const hfsl::WorkerConfig& w = sc.workers[k];
        if (plan.workers[k].s_cut >= plan.workers[k].h_cut) {
            double all_flops = 0;
            for (const auto& lay : sc.profile.layers) all_flops += lay.fwd_flops + lay.bwd_flops;
            const double window = r.t_max - par_d[k] - par_u[k];
            const double f = double(w.epochs) * double(w.data_size) * all_flops /
                             (window * w.flops_per_cycle);
            energy[k] = w.eff_capacitance * f * f * f * window + w.tx_power_w * par_u[k];
        }
        r.e_sum += energy[k];
    }
    return r;
}

inline hfsl::ObjectiveValue oracle_objectives(const hfsl::Scenario& sc, const hfsl::SplitPlan& plan,
                                              const hfsl::ChannelDraws& draws) {
    hfsl::ObjectiveValue v;
    for (int t = 0; t < sc.system.rounds; ++t) {
        std::vector<double> g(sc.system.workers);
        for (int k = 0; k < sc.system.workers; ++k) g[k] = draws.at(k, t);
        const OracleRound r = oracle_round(sc, plan, g);
        v.v1 += r.t_max;
        v.v2 += r.e_sum;
    }
    return v;
}

// Small randomized scenario in plausible physical ranges.
inline hfsl::Scenario random_scenario(hfsl::Rng& rng, int max_workers = 3, int max_rounds = 2) {
    hfsl::Scenario sc;
    sc.system.workers = 1 + int(rng.below(std::uint64_t(max_workers)));
    sc.system.bandwidth_max_hz = rng.uniform(1e6, 5e6);
    sc.system.server_freq_max_hz = rng.uniform(2e9, 8e9);
    sc.system.server_flops_per_cycle = 1 + double(rng.below(2));
    sc.system.server_tx_power_w = rng.uniform(0.2, 1.0);
    sc.system.noise_w_per_hz = 1e-17;
    sc.system.carrier_ghz = rng.uniform(1.0, 3.0);
    sc.system.rounds = 1 + int(rng.below(std::uint64_t(max_rounds)));
    sc.system.rng_seed = rng.next_u64();
    for (int k = 0; k < sc.system.workers; ++k) {
        hfsl::WorkerConfig w;
        w.data_size = 100 + long(rng.below(400));
        w.batch = 4 + long(rng.below(16));
        w.epochs = 1 + long(rng.below(3));
        w.freq_max_hz = rng.uniform(0.5e9, 1.5e9);
        w.flops_per_cycle = 1;
        w.eff_capacitance = 2e-28;
        w.tx_power_w = rng.uniform(0.02, 0.1);
        w.distance_m = rng.uniform(2.0, 50.0);
        w.iterations = hfsl::even_iterations(w.epochs, w.data_size, w.batch);
        sc.workers.push_back(w);
    }
    const int L = 3 + int(rng.below(4));
    for (int l = 0; l < L; ++l) {
        hfsl::Layer lay;
        lay.fwd_flops = rng.uniform(1e5, 5e6);
        lay.bwd_flops = rng.uniform(1e5, 1e7);
        lay.fwd_out_bits = rng.uniform(1e3, 1e5);
        lay.bwd_out_bits = rng.uniform(1e3, 1e5);
        lay.param_bits = rng.uniform(1e4, 1e7);
        sc.profile.layers.push_back(lay);
    }
    sc.validate();
    return sc;
}

// Random feasible plan: cuts uniform, budgets fully spent over positive shares.
inline hfsl::SplitPlan random_plan(hfsl::Rng& rng, const hfsl::Scenario& sc) {
    const int K = sc.system.workers;
    const int L = sc.profile.size();
    hfsl::SplitPlan plan;
    plan.workers.resize(K);
    std::vector<double> bw(K), fe(K);
    double bw_sum = 0, fe_sum = 0;
    for (int k = 0; k < K; ++k) {
        int s = 1 + int(rng.below(std::uint64_t(L - 1)));
        int h = 1 + int(rng.below(std::uint64_t(L - 1)));
        if (s > h) std::swap(s, h);
        plan.workers[k].s_cut = s;
        plan.workers[k].h_cut = h;
        bw[k] = 1e-3 + rng.uniform();
        bw_sum += bw[k];
        fe[k] = 1e-3 + rng.uniform();
        if (plan.workers[k].is_split()) fe_sum += fe[k];
    }
    for (int k = 0; k < K; ++k) {
        plan.workers[k].bandwidth_hz = sc.system.bandwidth_max_hz * bw[k] / bw_sum;
        plan.workers[k].server_freq_hz =
            plan.workers[k].is_split() && fe_sum > 0
                ? sc.system.server_freq_max_hz * fe[k] / fe_sum
                : 0.0;
    }
    return plan;
}

}  // namespace testsupport
