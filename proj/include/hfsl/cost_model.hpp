#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hfsl/common.hpp"
#include "hfsl/scenario.hpp"

namespace hfsl {

// ---------------------------------------------------------------------------
// Plans and per-round cost records
// ---------------------------------------------------------------------------

/// Per-worker resource decision. Layers 1..s_cut and h_cut+1..L run on the
/// worker, layers s_cut+1..h_cut on the server; s_cut == h_cut means the
/// worker keeps the whole model.
struct PlanEntry {
    int s_cut = 0;
    int h_cut = 0;
    double server_freq_hz = 0.0;  // server CPU share, meaningful only when split
    double bandwidth_hz = 0.0;

    bool is_split() const { return s_cut < h_cut; }
};

struct SplitPlan {
    std::vector<PlanEntry> workers;
};

struct StageSchedule {
    double t[4] = {0, 0, 0, 0};  // seconds
    double f[4] = {0, 0, 0, 0};  // local CPU cycles/s chosen per stage
};

struct WorkerRoundCost {
    bool is_split = false;
    StageSchedule stages;                              // split workers only
    double t_uf = 0, t_df = 0, t_ub = 0, t_db = 0;     // per-minibatch link times
    double t_ef = 0, t_eb = 0;                         // per-minibatch server compute
    double t_par_d = 0, t_par_u = 0;                   // parameter download/upload
    double total_s = 0;   // whole-round wall time if this worker set the pace
    double f_nsp = 0;     // throttled frequency, non-split workers only
    double energy_j = 0;
};

struct RoundBreakdown {
    std::vector<WorkerRoundCost> workers;
    double t_max = 0;
    double e_sum = 0;
};

struct ObjectiveValue {
    double v1 = 0;  // seconds
    double v2 = 0;  // joules
};

// ---------------------------------------------------------------------------
// Elementary pieces
// ---------------------------------------------------------------------------

/// Transfer time over an AWGN link at Shannon rate; gain is an amplitude and
/// enters as gain^2.
inline double tx_time(double bits, double bandwidth_hz, double power_w, double gain,
                      double n0_w_hz) {
    if (bandwidth_hz <= 0 || power_w <= 0 || gain <= 0 || n0_w_hz <= 0)
        throw std::invalid_argument("tx_time: channel parameters must be positive");
    if (bits < 0) throw std::invalid_argument("tx_time: negative payload");
    if (bits == 0) return 0.0;
    const double rate =
        bandwidth_hz * std::log2(1.0 + power_w * gain * gain / (bandwidth_hz * n0_w_hz));
    return bits / rate;
}

inline double server_compute_time(double flops, double server_freq_hz, double flops_per_cycle) {
    if (server_freq_hz <= 0 || flops_per_cycle <= 0)
        throw std::invalid_argument("server_compute_time: capacity must be positive");
    if (flops < 0) throw std::invalid_argument("server_compute_time: negative load");
    return flops / (server_freq_hz * flops_per_cycle);
}

// ---------------------------------------------------------------------------
// CostModel
// ---------------------------------------------------------------------------

/// Evaluates round timing/energy for split plans against a fixed scenario.
/// Pure given (plan, gains); all layer sums are precomputed as prefix sums,
/// so per-round work is O(1) per worker.
class CostModel {
public:
    explicit CostModel(const Scenario& sc) : sc_(&sc) {
        const int L = sc.profile.size();
        cum_cf_.assign(L + 1, 0.0);
        cum_cb_.assign(L + 1, 0.0);
        cum_g_.assign(L + 1, 0.0);
        for (int l = 1; l <= L; ++l) {
            const Layer& lay = sc.profile.layers[l - 1];
            cum_cf_[l] = cum_cf_[l - 1] + lay.fwd_flops;
            cum_cb_[l] = cum_cb_[l - 1] + lay.bwd_flops;
            cum_g_[l] = cum_g_[l - 1] + lay.param_bits;
        }
    }

    const Scenario& scenario() const { return *sc_; }

    /// Throws FeasibilityError naming the violated constraint.
    void validate(const SplitPlan& plan) const {
        const int K = sc_->system.workers;
        const int L = sc_->profile.size();
        if (static_cast<int>(plan.workers.size()) != K)
            throw FeasibilityError("plan covers " + std::to_string(plan.workers.size()) +
                                   " workers, scenario has " + std::to_string(K));
        double b_sum = 0.0, fe_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            const PlanEntry& e = plan.workers[k];
            const std::string who = "worker " + std::to_string(k + 1);
            if (e.s_cut < 1 || e.h_cut < e.s_cut || e.h_cut > L - 1)
                throw FeasibilityError(who + ": split bounds violated (need 1 <= s <= h <= " +
                                       std::to_string(L - 1) + ", got s=" + std::to_string(e.s_cut) +
                                       " h=" + std::to_string(e.h_cut) + ")");
            if (e.bandwidth_hz <= 0)
                throw FeasibilityError(who + ": bandwidth share must be positive");
            b_sum += e.bandwidth_hz;
            if (e.is_split()) {
                if (e.server_freq_hz <= 0)
                    throw FeasibilityError(who + ": server frequency share must be positive");
                fe_sum += e.server_freq_hz;
            }
        }
        if (b_sum > sc_->system.bandwidth_max_hz * (1.0 + 1e-9))
            throw FeasibilityError("bandwidth budget exceeded: " + fmt_double(b_sum) + " > " +
                                   fmt_double(sc_->system.bandwidth_max_hz));
        if (fe_sum > sc_->system.server_freq_max_hz * (1.0 + 1e-9))
            throw FeasibilityError("server frequency budget exceeded: " + fmt_double(fe_sum) +
                                   " > " + fmt_double(sc_->system.server_freq_max_hz));
    }

    double uplink_rate(int k, double bandwidth_hz, double gain) const {
        const double snr = sc_->workers[k].tx_power_w * gain * gain /
                           (bandwidth_hz * sc_->system.noise_w_per_hz);
        return bandwidth_hz * std::log2(1.0 + snr);
    }
    double downlink_rate(double bandwidth_hz, double gain) const {
        const double snr = sc_->system.server_tx_power_w * gain * gain /
                           (bandwidth_hz * sc_->system.noise_w_per_hz);
        return bandwidth_hz * std::log2(1.0 + snr);
    }

    /// Per-stage wall times and the adaptive local frequencies that exactly
    /// fill each stage with the stage's local compute.
    StageSchedule stage_schedule(int k, const PlanEntry& e, double gain) const {
        if (!e.is_split())
            throw std::invalid_argument("stage_schedule: worker " + std::to_string(k + 1) +
                                        " does not split");
        const WorkerConfig& w = sc_->workers[k];
        const double b = static_cast<double>(w.batch);
        const int L = sc_->profile.size();
        const double r_up = uplink_rate(k, e.bandwidth_hz, gain);
        const double r_dn = downlink_rate(e.bandwidth_hz, gain);

        const double t_uf = b * sc_->profile.layers[e.s_cut - 1].fwd_out_bits / r_up;
        const double t_df = b * sc_->profile.layers[e.h_cut - 1].fwd_out_bits / r_dn;
        const double t_ub = b * sc_->profile.layers[e.h_cut].bwd_out_bits / r_up;
        const double t_db = b * sc_->profile.layers[e.s_cut].bwd_out_bits / r_dn;
        const double srv = e.server_freq_hz * sc_->system.server_flops_per_cycle;
        const double t_ef = b * (cum_cf_[e.h_cut] - cum_cf_[e.s_cut]) / srv;
        const double t_eb = b * (cum_cb_[e.h_cut] - cum_cb_[e.s_cut]) / srv;

        const double comm_f = t_uf + t_ef + t_df;
        const double comm_b = t_ub + t_eb + t_db;
        const double front = b * (cum_cf_[e.s_cut] + cum_cb_[e.s_cut]);
        const double back = b * (cum_cf_[L] - cum_cf_[e.h_cut] + cum_cb_[L] - cum_cb_[e.h_cut]);
        const double cap = w.freq_max_hz * w.flops_per_cycle;

        StageSchedule s;
        // Stages 1 and 2 overlap the link/server path with the tail part of
        // the previous minibatch; stages 3 and 4 with the front part.
        s.t[0] = std::max(comm_f, back / cap);
        s.t[1] = std::max(comm_b, back / cap);
        s.t[2] = std::max(comm_b, front / cap);
        s.t[3] = std::max(comm_f, front / cap);
        const double local[4] = {back, back, front, front};
        for (int i = 0; i < 4; ++i)
            s.f[i] = std::min(local[i] / (s.t[i] * w.flops_per_cycle), w.freq_max_hz);
        return s;
    }

    /// Whole-round cost of a split worker (wall time and its own energy).
    WorkerRoundCost split_round_cost(int k, const PlanEntry& e, double gain) const {
        const WorkerConfig& w = sc_->workers[k];
        const double b = static_cast<double>(w.batch);
        const int L = sc_->profile.size();
        const double r_up = uplink_rate(k, e.bandwidth_hz, gain);
        const double r_dn = downlink_rate(e.bandwidth_hz, gain);

        WorkerRoundCost c;
        c.is_split = true;
        c.stages = stage_schedule(k, e, gain);
        c.t_uf = b * sc_->profile.layers[e.s_cut - 1].fwd_out_bits / r_up;
        c.t_df = b * sc_->profile.layers[e.h_cut - 1].fwd_out_bits / r_dn;
        c.t_ub = b * sc_->profile.layers[e.h_cut].bwd_out_bits / r_up;
        c.t_db = b * sc_->profile.layers[e.s_cut].bwd_out_bits / r_dn;
        const double srv = e.server_freq_hz * sc_->system.server_flops_per_cycle;
        c.t_ef = b * (cum_cf_[e.h_cut] - cum_cf_[e.s_cut]) / srv;
        c.t_eb = b * (cum_cb_[e.h_cut] - cum_cb_[e.s_cut]) / srv;

        const double local_param_bits = cum_g_[e.s_cut] + cum_g_[L] - cum_g_[e.h_cut];
        c.t_par_d = local_param_bits / r_dn;
        c.t_par_u = local_param_bits / r_up;

        const double pairs = static_cast<double>(w.iterations) / 2.0;
        double stage_sum = 0.0, dyn = 0.0;
        for (int i = 0; i < 4; ++i) {
            stage_sum += c.stages.t[i];
            dyn += w.eff_capacitance * c.stages.f[i] * c.stages.f[i] * c.stages.f[i] *
                   c.stages.t[i];
        }
        c.total_s = pairs * stage_sum + c.t_par_d + c.t_par_u;
        c.energy_j = pairs * (dyn + 2.0 * w.tx_power_w * (c.t_uf + c.t_ub)) +
                     w.tx_power_w * c.t_par_u;
        return c;
    }

    /// Fastest-possible whole-round wall time of a non-split worker (runs at
    /// f_max); the energy is filled in later against the round's pace.
    WorkerRoundCost nonsplit_base_cost(int k, const PlanEntry& e, double gain) const {
        const WorkerConfig& w = sc_->workers[k];
        const int L = sc_->profile.size();
        const double r_up = uplink_rate(k, e.bandwidth_hz, gain);
        const double r_dn = downlink_rate(e.bandwidth_hz, gain);

        WorkerRoundCost c;
        c.is_split = false;
        c.t_par_d = cum_g_[L] / r_dn;
        c.t_par_u = cum_g_[L] / r_up;
        const double flops = static_cast<double>(w.epochs) * static_cast<double>(w.data_size) *
                             (cum_cf_[L] + cum_cb_[L]);
        c.total_s = flops / (w.freq_max_hz * w.flops_per_cycle) + c.t_par_d + c.t_par_u;
        return c;
    }

    /// Throttled frequency and energy of a non-split worker stretching its
    /// compute over the round's pace-setting time.
    void finish_nonsplit(int k, double t_max, WorkerRoundCost& c) const {
        const WorkerConfig& w = sc_->workers[k];
        const double window = t_max - c.t_par_d - c.t_par_u;
        if (window <= 0)
            throw FeasibilityError("worker " + std::to_string(k + 1) +
                                   ": round time leaves no compute window");
        const double flops = static_cast<double>(w.epochs) * static_cast<double>(w.data_size) *
                             (cum_cf_[sc_->profile.size()] + cum_cb_[sc_->profile.size()]);
        c.f_nsp = std::min(flops / (window * w.flops_per_cycle), w.freq_max_hz);
        c.energy_j = w.eff_capacitance * c.f_nsp * c.f_nsp * c.f_nsp * window +
                     w.tx_power_w * c.t_par_u;
    }

    /// Full per-round breakdown under one gain per worker.
    RoundBreakdown round(const SplitPlan& plan, const std::vector<double>& gains) const {
        const int K = sc_->system.workers;
        RoundBreakdown r;
        r.workers.resize(K);
        for (int k = 0; k < K; ++k) {
            const PlanEntry& e = plan.workers[k];
            r.workers[k] = e.is_split() ? split_round_cost(k, e, gains[k])
                                        : nonsplit_base_cost(k, e, gains[k]);
            r.t_max = std::max(r.t_max, r.workers[k].total_s);
        }
        for (int k = 0; k < K; ++k) {
            if (!r.workers[k].is_split) finish_nonsplit(k, r.t_max, r.workers[k]);
            r.e_sum += r.workers[k].energy_j;
        }
        return r;
    }

    /// Objectives: time and energy totals across all rounds of the draw set.
    ObjectiveValue evaluate(const SplitPlan& plan, const ChannelDraws& draws) const {
        validate(plan);
        if (draws.workers != sc_->system.workers || draws.rounds < sc_->system.rounds)
            throw FeasibilityError("channel draws do not cover the scenario");
        const int K = sc_->system.workers;
        ObjectiveValue v;
        std::vector<WorkerRoundCost> ws(K);
        for (int t = 0; t < sc_->system.rounds; ++t) {
            double t_max = 0.0;
            for (int k = 0; k < K; ++k) {
                const PlanEntry& e = plan.workers[k];
                ws[k] = e.is_split() ? split_round_cost(k, e, draws.at(k, t))
                                     : nonsplit_base_cost(k, e, draws.at(k, t));
                t_max = std::max(t_max, ws[k].total_s);
            }
            double e_sum = 0.0;
            for (int k = 0; k < K; ++k) {
                if (!ws[k].is_split) finish_nonsplit(k, t_max, ws[k]);
                e_sum += ws[k].energy_j;
            }
            v.v1 += t_max;
            v.v2 += e_sum;
        }
        return v;
    }

    /// Per-datum FLOPs handed to the server by this entry (zero if no split).
    double offloaded_flops(const PlanEntry& e) const {
        if (!e.is_split()) return 0.0;
        return cum_cf_[e.h_cut] - cum_cf_[e.s_cut] + cum_cb_[e.h_cut] - cum_cb_[e.s_cut];
    }
    int offloaded_layers(const PlanEntry& e) const { return e.is_split() ? e.h_cut - e.s_cut : 0; }

private:
    const Scenario* sc_;
    std::vector<double> cum_cf_, cum_cb_, cum_g_;
};

}  // namespace hfsl
