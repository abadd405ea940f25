#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hfsl/common.hpp"
#include "hfsl/scenario.hpp"

namespace hfsl {

// ---------------------------------------------------------------------------
// Synthetic strongly convex tasks
// ---------------------------------------------------------------------------

/// One worker of the lab: quadratic local loss 1/2 (w-c)' A (w-c) with a
/// diagonal A, a data-size weight, a local iteration count, and a flag that
/// selects delayed (split) or plain local updates.
struct LabWorker {
    double weight = 0.0;  // normalized to sum 1 on load
    int iterations = 1;   // N_k
    bool split = false;
    std::vector<double> hessian_diag;
    std::vector<double> center;
};

/// Diagonal quadratics make every constant exact: L is the largest local
/// curvature, mu the smallest eigenvalue of the weighted Hessian sum, and
/// the global minimizer a per-coordinate weighted mean.
struct SyntheticTask {
    int dim = 0;
    double eta_scale = 0.5;  // eta = eta_scale / L
    int rounds = 1;          // tau
    int fit_rounds = 1;      // prefix used for decay-rate fits
    std::vector<double> init_offset;
    std::vector<LabWorker> workers;

    double smooth_l = 0.0;
    double strong_mu = 0.0;
    std::vector<double> w_star;

    double eta() const { return eta_scale / smooth_l; }

    int n_max() const {
        int n = 0;
        for (const LabWorker& w : workers) n = std::max(n, w.iterations);
        return n;
    }

    std::vector<double> w0() const {
        std::vector<double> w(w_star);
        for (int i = 0; i < dim; ++i) w[i] += init_offset[i];
        return w;
    }

    std::vector<double> local_grad(int k, const std::vector<double>& w) const {
        const LabWorker& lw = workers[k];
        std::vector<double> g(dim);
        for (int i = 0; i < dim; ++i) g[i] = lw.hessian_diag[i] * (w[i] - lw.center[i]);
        return g;
    }

    double local_loss(int k, const std::vector<double>& w) const {
        const LabWorker& lw = workers[k];
        double f = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double d = w[i] - lw.center[i];
            f += 0.5 * lw.hessian_diag[i] * d * d;
        }
        return f;
    }

    double global_loss(const std::vector<double>& w) const {
        double f = 0.0;
        for (std::size_t k = 0; k < workers.size(); ++k)
            f += workers[k].weight * local_loss(static_cast<int>(k), w);
        return f;
    }

    double gap(const std::vector<double>& w) const { return global_loss(w) - global_loss(w_star); }

    void derive_constants() {
        smooth_l = 0.0;
        std::vector<double> hsum(dim, 0.0), hcsum(dim, 0.0);
        for (const LabWorker& w : workers) {
            for (int i = 0; i < dim; ++i) {
                smooth_l = std::max(smooth_l, w.hessian_diag[i]);
                hsum[i] += w.weight * w.hessian_diag[i];
                hcsum[i] += w.weight * w.hessian_diag[i] * w.center[i];
            }
        }
        strong_mu = hsum[0];
        for (double h : hsum) strong_mu = std::min(strong_mu, h);
        w_star.resize(dim);
        for (int i = 0; i < dim; ++i) w_star[i] = hcsum[i] / hsum[i];
    }

    void validate() const {
        if (dim < 1) throw ScenarioError("task: dim must be >= 1");
        if (workers.empty()) throw ScenarioError("task: requires at least one worker");
        if (rounds < 0) throw ScenarioError("task: rounds must be >= 0");
        if (fit_rounds < 2 || (rounds >= 2 && fit_rounds > rounds))
            throw ScenarioError("task: fit_rounds must lie in [2, rounds]");
        if (eta_scale <= 0.0) throw ScenarioError("task: eta_scale must be positive");
        if (static_cast<int>(init_offset.size()) != dim)
            throw ScenarioError("task: init_offset must have dim entries");
        int idx = 0;
        for (const LabWorker& w : workers) {
            ++idx;
            const std::string sec = "task worker " + std::to_string(idx);
            if (w.weight <= 0.0) throw ScenarioError(sec + ": weight must be positive");
            if (w.iterations < 1) throw ScenarioError(sec + ": iterations must be >= 1");
            if (static_cast<int>(w.hessian_diag.size()) != dim ||
                static_cast<int>(w.center.size()) != dim)
                throw ScenarioError(sec + ": hessian_diag and center must have dim entries");
            for (double h : w.hessian_diag)
                if (h <= 0.0) throw ScenarioError(sec + ": hessian_diag entries must be positive");
        }
    }
};

inline std::vector<double> parse_vector(const nlohmann::json& j, const std::string& section,
                                        const char* key) {
    if (!j.contains(key) || !j[key].is_array())
        throw ScenarioError(section + ": missing list '" + key + "'");
    std::vector<double> out;
    for (const auto& v : j[key]) out.push_back(v.get<double>());
    return out;
}

inline SyntheticTask parse_task(const nlohmann::json& j) {
    using detail::require_number;
    SyntheticTask task;
    task.dim = static_cast<int>(require_number(j, "task", "dim"));
    task.eta_scale = require_number(j, "task", "eta_scale");
    task.rounds = static_cast<int>(require_number(j, "task", "rounds"));
    task.fit_rounds = static_cast<int>(require_number(j, "task", "fit_rounds"));
    task.init_offset = parse_vector(j, "task", "init_offset");
    if (!j.contains("workers") || !j["workers"].is_array())
        throw ScenarioError("task: requires a 'workers' list");
    int idx = 0;
    double wsum = 0.0;
    for (const auto& wj : j["workers"]) {
        ++idx;
        const std::string sec = "task worker " + std::to_string(idx);
        LabWorker w;
        w.weight = require_number(wj, sec, "weight");
        w.iterations = static_cast<int>(require_number(wj, sec, "iterations"));
        if (!wj.contains("split") || !wj["split"].is_boolean())
            throw ScenarioError(sec + ": missing flag 'split'");
        w.split = wj["split"].get<bool>();
        w.hessian_diag = parse_vector(wj, sec, "hessian_diag");
        w.center = parse_vector(wj, sec, "center");
        wsum += w.weight;
        task.workers.push_back(std::move(w));
    }
    for (LabWorker& w : task.workers) w.weight /= wsum;
    task.validate();
    task.derive_constants();
    return task;
}

inline SyntheticTask load_task(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("task file " + path + ": " + e.what());
    }
    return parse_task(j);
}

// ---------------------------------------------------------------------------
// Local updates and aggregation
// ---------------------------------------------------------------------------

/// Per-worker iterate pair: cur is the newest parameter, prev the one before
/// it. Delayed steps take the gradient at prev, plain steps at cur; both
/// start a round with cur = prev = W_{t-1}.
struct WorkerState {
    std::vector<double> cur;
    std::vector<double> prev;
};

/// One local iteration; returns the norm of the gradient it consumed so the
/// caller can maintain the empirical bound G.
inline double local_step(const SyntheticTask& task, int k, WorkerState& st, bool delayed) {
    const std::vector<double>& at = delayed ? st.prev : st.cur;
    const std::vector<double> g = task.local_grad(k, at);
    const double eta = task.eta();
    std::vector<double> next(st.cur);
    for (int i = 0; i < task.dim; ++i) next[i] -= eta * g[i];
    st.prev = std::move(st.cur);
    st.cur = std::move(next);
    double n2 = 0.0;
    for (double v : g) n2 += v * v;
    return std::sqrt(n2);
}

/// Weighted mean of the worker finals; the weights must already be the
/// normalized data shares.
inline std::vector<double> aggregate(const std::vector<double>& weights,
                                     const std::vector<std::vector<double>>& finals) {
    if (weights.size() != finals.size())
        throw std::invalid_argument("aggregate: one weight per worker required");
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("aggregate: weights must sum to 1");
    std::vector<double> out(finals.front().size(), 0.0);
    for (std::size_t k = 0; k < finals.size(); ++k)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * finals[k][i];
    return out;
}

// ---------------------------------------------------------------------------
// Full trajectory runs
// ---------------------------------------------------------------------------

/// Everything one round produced: per-worker iterate sequences padded to
/// N_max by holding the final value, the averaged sequence over the same
/// index range, and the aggregated global parameter.
struct RoundRecord {
    std::vector<std::vector<std::vector<double>>> iterates;  // [worker][n][coord], n = 0..N_max
    std::vector<std::vector<double>> wbar;                   // [n][coord]
    std::vector<double> w_end;
    double gap_end = 0.0;
};

struct LabRun {
    std::vector<double> w0;
    double gap0 = 0.0;
    double grad_bound = 0.0;  // G: max observed local gradient norm, inflated 5%
    std::vector<char> delayed;
    std::vector<RoundRecord> rounds;

    std::vector<double> gaps() const {
        std::vector<double> g{gap0};
        for (const RoundRecord& r : rounds) g.push_back(r.gap_end);
        return g;
    }
};

/// Runs tau global rounds; split_override, when non-empty, replaces every
/// worker's split flag (used for the all-delayed vs all-plain rate study).
inline LabRun run_lab(const SyntheticTask& task, const std::vector<char>& split_override = {}) {
    const int K = static_cast<int>(task.workers.size());
    const int nmax = task.n_max();
    if (!split_override.empty() && static_cast<int>(split_override.size()) != K)
        throw std::invalid_argument("run_lab: split override must cover every worker");

    LabRun run;
    run.delayed.resize(K);
    for (int k = 0; k < K; ++k)
        run.delayed[k] = split_override.empty() ? task.workers[k].split : split_override[k];

    std::vector<double> weights;
    for (const LabWorker& w : task.workers) weights.push_back(w.weight);

    run.w0 = task.w0();
    run.gap0 = task.gap(run.w0);

    double max_grad = 0.0;
    std::vector<double> w_cur = run.w0;
    for (int t = 0; t < task.rounds; ++t) {
        RoundRecord rec;
        rec.iterates.assign(K, {});
        std::vector<WorkerState> st(K);
        for (int k = 0; k < K; ++k) {
            st[k].cur = w_cur;
            st[k].prev = w_cur;
            rec.iterates[k].push_back(w_cur);
        }
        for (int n = 1; n <= nmax; ++n) {
            for (int k = 0; k < K; ++k) {
                if (n <= task.workers[k].iterations)
                    max_grad = std::max(max_grad, local_step(task, k, st[k], run.delayed[k]));
                rec.iterates[k].push_back(st[k].cur);
            }
        }
        std::vector<std::vector<double>> finals;
        for (int k = 0; k < K; ++k) finals.push_back(st[k].cur);
        rec.w_end = aggregate(weights, finals);
        rec.wbar.resize(nmax + 1);
        for (int n = 0; n <= nmax; ++n) {
            std::vector<std::vector<double>> at_n;
            for (int k = 0; k < K; ++k) at_n.push_back(rec.iterates[k][n]);
            rec.wbar[n] = aggregate(weights, at_n);
        }
        rec.gap_end = task.gap(rec.w_end);
        w_cur = rec.w_end;
        run.rounds.push_back(std::move(rec));
    }
    run.grad_bound = 1.05 * max_grad;
    return run;
}

// ---------------------------------------------------------------------------
// Bound checks
// ---------------------------------------------------------------------------

struct Lemma1Report {
    bool ok = true;
    double worst_slack = 0.0;  // min over all (k, n, t) of bound - deviation
    int worst_worker = -1, worst_iter = -1, worst_round = -1;
    std::vector<double> per_round_worst;  // worst slack within each round
};

/// Checks both parameter-deviation bounds at every recorded point: plain
/// workers against 4 eta^2 n^2 G^2 and delayed workers (their lagged
/// iterate) against 2 eta^2 (n^2 + (n-1)^2) G^2. The n = 0 row is zero on
/// both sides by construction, so the scan starts at n = 1.
inline Lemma1Report check_lemma1(const SyntheticTask& task, const LabRun& run) {
    const double eta = task.eta();
    const double g2 = run.grad_bound * run.grad_bound;
    const int nmax = task.n_max();
    Lemma1Report rep;
    bool first = true;
    for (std::size_t t = 0; t < run.rounds.size(); ++t) {
        const RoundRecord& rec = run.rounds[t];
        double round_worst = 0.0;
        bool round_first = true;
        for (int n = 1; n <= nmax; ++n) {
            for (std::size_t k = 0; k < task.workers.size(); ++k) {
                const std::vector<double>& ref =
                    run.delayed[k] ? rec.iterates[k][std::max(n - 1, 0)] : rec.iterates[k][n];
                double dev = 0.0;
                for (int i = 0; i < task.dim; ++i) {
                    const double d = rec.wbar[n][i] - ref[i];
                    dev += d * d;
                }
                const double bound =
                    run.delayed[k]
                        ? 2.0 * eta * eta * (static_cast<double>(n) * n +
                                             static_cast<double>(n - 1) * (n - 1)) * g2
                        : 4.0 * eta * eta * static_cast<double>(n) * n * g2;
                const double slack = bound - dev;
                if (round_first || slack < round_worst) {
                    round_worst = slack;
                    round_first = false;
                }
                if (first || slack < rep.worst_slack) {
                    rep.worst_slack = slack;
                    rep.worst_worker = static_cast<int>(k);
                    rep.worst_iter = n;
                    rep.worst_round = static_cast<int>(t);
                    first = false;
                }
            }
        }
        rep.per_round_worst.push_back(round_worst);
    }
    rep.ok = rep.worst_slack >= 0.0;
    return rep;
}

/// alpha(n) with the literal (n-2)^2 term, which is still 1 at n=1; delayed
/// workers contribute both squared lags, plain workers twice the first.
inline double alpha_term(const SyntheticTask& task, const std::vector<char>& delayed, double g,
                         int n) {
    const double eta = task.eta();
    double mix = 0.0;
    for (std::size_t k = 0; k < task.workers.size(); ++k) {
        const double a = static_cast<double>(n - 1) * (n - 1);
        const double b = static_cast<double>(n - 2) * (n - 2);
        mix += task.workers[k].weight * (delayed[k] ? a + b : 2.0 * a);
    }
    return eta * eta * eta * g * g * task.smooth_l * task.smooth_l * mix;
}

/// Upper-bound sequence for the gap at rounds 0..tau; index t holds
/// rho^(N_max t) gap_0 plus the accumulated alpha-hat prefix.
inline std::vector<double> theorem1_bounds(const SyntheticTask& task, const LabRun& run) {
    if (task.eta() > 1.0 / task.smooth_l + 1e-15)
        throw std::invalid_argument("theorem1_bounds: learning rate exceeds 1/L");
    const double rho = 1.0 - task.strong_mu * task.eta();
    const int nmax = task.n_max();
    double inner = 0.0;
    for (int n = 0; n < nmax; ++n)
        inner += std::pow(rho, n) * alpha_term(task, run.delayed, run.grad_bound, nmax - n);
    std::vector<double> bounds{run.gap0};
    double alpha_hat = 0.0;
    for (std::size_t t = 0; t < run.rounds.size(); ++t) {
        alpha_hat += std::pow(rho, nmax * static_cast<double>(t)) * inner;
        bounds.push_back(std::pow(rho, nmax * static_cast<double>(t + 1)) * run.gap0 + alpha_hat);
    }
    return bounds;
}

struct TheoremReport {
    bool ok = true;
    std::vector<double> bounds;
    std::vector<double> gaps;
    double worst_margin = 0.0;  // min over t of bound - gap
};

inline TheoremReport check_theorem1(const SyntheticTask& task, const LabRun& run) {
    TheoremReport rep;
    rep.bounds = theorem1_bounds(task, run);
    rep.gaps = run.gaps();
    rep.worst_margin = rep.bounds[0] - rep.gaps[0];
    for (std::size_t t = 0; t < rep.bounds.size(); ++t)
        rep.worst_margin = std::min(rep.worst_margin, rep.bounds[t] - rep.gaps[t]);
    rep.ok = rep.worst_margin >= 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Round-count formula and rate fits
// ---------------------------------------------------------------------------

/// Rounds needed to push the geometric term below the ratio phi.
inline int rounds_to_epsilon(double rho, double phi, int n_max) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rounds_to_epsilon: rho in (0,1)");
    if (!(phi > 0.0 && phi <= 1.0))
        throw std::invalid_argument("rounds_to_epsilon: phi in (0,1]");
    if (n_max < 1) throw std::invalid_argument("rounds_to_epsilon: n_max >= 1");
    if (phi == 1.0) return 0;
    return static_cast<int>(std::ceil(std::log(phi) / (n_max * std::log(rho))));
}

/// Task-level variant: splits epsilon into the steady-state bias floor (the
/// infinite-horizon alpha-hat) and the geometric remainder.
inline int rounds_to_epsilon(const SyntheticTask& task, const LabRun& run, double epsilon) {
    const double rho = 1.0 - task.strong_mu * task.eta();
    const int nmax = task.n_max();
    double inner = 0.0;
    for (int n = 0; n < nmax; ++n)
        inner += std::pow(rho, n) * alpha_term(task, run.delayed, run.grad_bound, nmax - n);
    const double alpha_inf = inner / (1.0 - std::pow(rho, nmax));
    if (epsilon <= alpha_inf) throw std::invalid_argument("rounds_to_epsilon: target below bias floor");
    const double phi = std::min(1.0, (epsilon - alpha_inf) / run.gap0);
    return rounds_to_epsilon(rho, phi, nmax);
}

/// Least-squares slope of ln(gap) against the round index over rounds
/// 1..fit_rounds; the per-round geometric decay factor is exp(slope).
inline double fit_decay_rate(const std::vector<double>& gaps, int fit_rounds) {
    if (fit_rounds < 2 || fit_rounds >= static_cast<int>(gaps.size()))
        throw std::invalid_argument("fit_decay_rate: need at least rounds 1..2 recorded");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (int t = 1; t <= fit_rounds; ++t) {
        if (gaps[t] <= 0.0) throw std::invalid_argument("fit_decay_rate: gap not positive");
        const double x = t, y = std::log(gaps[t]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    return (count * sxy - sx * sy) / (count * sxx - sx * sx);
}

struct RateMatch {
    double delayed_rate = 0.0;  // ln-slope, all workers delayed
    double plain_rate = 0.0;    // ln-slope, all workers plain
    double rel_diff = 0.0;
};

inline RateMatch compare_rates(const SyntheticTask& task) {
    const int K = static_cast<int>(task.workers.size());
    const LabRun delayed = run_lab(task, std::vector<char>(K, 1));
    const LabRun plain = run_lab(task, std::vector<char>(K, 0));
    RateMatch rm;
    rm.delayed_rate = fit_decay_rate(delayed.gaps(), task.fit_rounds);
    rm.plain_rate = fit_decay_rate(plain.gaps(), task.fit_rounds);
    rm.rel_diff = std::abs(rm.delayed_rate - rm.plain_rate) / std::abs(rm.plain_rate);
    return rm;
}

}  // namespace hfsl
