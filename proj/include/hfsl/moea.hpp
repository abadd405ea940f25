#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hfsl/common.hpp"
#include "hfsl/cost_model.hpp"
#include "hfsl/scenario.hpp"

namespace hfsl {

// ---------------------------------------------------------------------------
// Dominance
// ---------------------------------------------------------------------------

enum class Dominance { strictly_dominates, dominated, incomparable, equal };

/// Relation of a to b under two-objective minimization.
inline Dominance dominates(const ObjectiveValue& a, const ObjectiveValue& b) {
    const bool le = a.v1 <= b.v1 && a.v2 <= b.v2;
    const bool ge = a.v1 >= b.v1 && a.v2 >= b.v2;
    if (le && ge) return Dominance::equal;
    if (le) return Dominance::strictly_dominates;
    if (ge) return Dominance::dominated;
    return Dominance::incomparable;
}

// ---------------------------------------------------------------------------
// Genotype and decoding
// ---------------------------------------------------------------------------

/// Flat decision vector in [0,1]^(4K): per worker, normalized
/// [front cut, back cut, server-frequency share, bandwidth share].
struct Genotype {
    std::vector<double> x;

    void clamp() {
        for (double& v : x) v = std::min(1.0, std::max(0.0, v));
    }
};

inline Genotype random_genotype(int k_workers, Rng& rng) {
    Genotype g;
    g.x.resize(static_cast<std::size_t>(4) * k_workers);
    for (double& v : g.x) v = rng.uniform();
    return g;
}

/// Total decoding function: any point of the box maps to a feasible plan.
/// Cut components pick layers, share components split the budgets with a
/// small floor so no allocation collapses to zero; budgets are spent fully.
inline SplitPlan decode(const Genotype& g, const Scenario& sc) {
    static constexpr double kShareFloor = 1e-3;
    const int K = sc.system.workers;
    const int L = sc.profile.size();
    if (static_cast<int>(g.x.size()) != 4 * K)
        throw std::invalid_argument("decode: genotype length " + std::to_string(g.x.size()) +
                                    ", expected " + std::to_string(4 * K));
    SplitPlan plan;
    plan.workers.resize(K);
    double b_norm = 0.0, fe_norm = 0.0;
    for (int k = 0; k < K; ++k) {
        const double xs = g.x[4 * k + 0];
        const double xh = g.x[4 * k + 1];
        int s = 1 + static_cast<int>(xs * (L - 1));
        int h = 1 + static_cast<int>(xh * (L - 1));
        s = std::min(std::max(s, 1), L - 1);
        h = std::min(std::max(h, 1), L - 1);
        if (s > h) std::swap(s, h);
        plan.workers[k].s_cut = s;
        plan.workers[k].h_cut = h;
        b_norm += kShareFloor + g.x[4 * k + 3];
        if (s < h) fe_norm += kShareFloor + g.x[4 * k + 2];
    }
    for (int k = 0; k < K; ++k) {
        plan.workers[k].bandwidth_hz =
            sc.system.bandwidth_max_hz * (kShareFloor + g.x[4 * k + 3]) / b_norm;
        plan.workers[k].server_freq_hz =
            plan.workers[k].is_split()
                ? sc.system.server_freq_max_hz * (kShareFloor + g.x[4 * k + 2]) / fe_norm
                : 0.0;
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Non-dominated sorting and environmental selection
// ---------------------------------------------------------------------------

/// Fast non-dominated sort; returns index levels, best first.
inline std::vector<std::vector<int>> nondominated_sort(const std::vector<ObjectiveValue>& vals) {
    const int n = static_cast<int>(vals.size());
    std::vector<int> dom_count(n, 0);
    std::vector<std::vector<int>> dominated_by(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            switch (dominates(vals[i], vals[j])) {
                case Dominance::strictly_dominates:
                    dominated_by[i].push_back(j);
                    ++dom_count[j];
                    break;
                case Dominance::dominated:
                    dominated_by[j].push_back(i);
                    ++dom_count[i];
                    break;
                default:
                    break;
            }
        }
    std::vector<std::vector<int>> levels;
    std::vector<int> current;
    for (int i = 0; i < n; ++i)
        if (dom_count[i] == 0) current.push_back(i);
    while (!current.empty()) {
        levels.push_back(current);
        std::vector<int> next;
        for (int i : current)
            for (int j : dominated_by[i])
                if (--dom_count[j] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return levels;
}

namespace detail {

/// Perpendicular distance from point p (2-D) to the ray through the origin
/// with direction d.
inline double ray_distance(double p1, double p2, double d1, double d2) {
    const double norm = std::sqrt(d1 * d1 + d2 * d2);
    const double u1 = d1 / norm, u2 = d2 / norm;
    const double t = p1 * u1 + p2 * u2;
    const double r1 = p1 - t * u1, r2 = p2 - t * u2;
    return std::sqrt(r1 * r1 + r2 * r2);
}

}  // namespace detail

/// Reference-direction environmental selection over a combined parent and
/// offspring pool: whole levels first, the split level resolved by niching
/// against R evenly spaced rays. Fully deterministic (ties break on the
/// smallest ray index, then the smallest candidate index).
inline std::vector<int> select(const std::vector<ObjectiveValue>& vals, int R) {
    if (static_cast<int>(vals.size()) < R)
        throw std::invalid_argument("select: pool smaller than the target size");
    auto levels = nondominated_sort(vals);

    std::vector<int> chosen;
    std::size_t r = 0;
    while (r < levels.size() && chosen.size() + levels[r].size() <= static_cast<std::size_t>(R)) {
        chosen.insert(chosen.end(), levels[r].begin(), levels[r].end());
        ++r;
    }
    if (chosen.size() == static_cast<std::size_t>(R)) return chosen;
    const std::vector<int>& split_level = levels[r];
    const int need = R - static_cast<int>(chosen.size());

    // Min-max normalization over everything under consideration.
    std::vector<int> pool = chosen;
    pool.insert(pool.end(), split_level.begin(), split_level.end());
    double min1 = vals[pool[0]].v1, max1 = min1, min2 = vals[pool[0]].v2, max2 = min2;
    for (int i : pool) {
        min1 = std::min(min1, vals[i].v1);
        max1 = std::max(max1, vals[i].v1);
        min2 = std::min(min2, vals[i].v2);
        max2 = std::max(max2, vals[i].v2);
    }
    const double den1 = max1 > min1 ? max1 - min1 : 1.0;
    const double den2 = max2 > min2 ? max2 - min2 : 1.0;

    // R evenly spaced rays across the 2-D simplex.
    std::vector<std::pair<double, double>> rays(R);
    for (int i = 0; i < R; ++i) {
        const double a = R > 1 ? static_cast<double>(i) / (R - 1) : 0.5;
        rays[i] = {a, 1.0 - a};
    }

    auto associate = [&](int idx) {
        const double p1 = (vals[idx].v1 - min1) / den1;
        const double p2 = (vals[idx].v2 - min2) / den2;
        int best = 0;
        double best_d = detail::ray_distance(p1, p2, rays[0].first, rays[0].second);
        for (int i = 1; i < R; ++i) {
            const double d = detail::ray_distance(p1, p2, rays[i].first, rays[i].second);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return std::pair<int, double>{best, best_d};
    };

    std::vector<int> niche_count(R, 0);
    for (int i : chosen) niche_count[associate(i).first]++;

    struct Candidate {
        int index;
        int niche;
        double dist;
        bool taken = false;
    };
    std::vector<Candidate> cands;
    for (int i : split_level) {
        auto [niche, dist] = associate(i);
        cands.push_back({i, niche, dist});
    }

    for (int picked = 0; picked < need; ++picked) {
        int best_niche = -1;
        for (const Candidate& c : cands) {
            if (c.taken) continue;
            if (best_niche < 0 || niche_count[c.niche] < niche_count[best_niche] ||
                (niche_count[c.niche] == niche_count[best_niche] && c.niche < best_niche))
                best_niche = c.niche;
        }
        Candidate* pick = nullptr;
        for (Candidate& c : cands) {
            if (c.taken || c.niche != best_niche) continue;
            if (!pick || c.dist < pick->dist || (c.dist == pick->dist && c.index < pick->index))
                pick = &c;
        }
        pick->taken = true;
        chosen.push_back(pick->index);
        ++niche_count[best_niche];
    }
    return chosen;
}

// ---------------------------------------------------------------------------
// Variation operators
// ---------------------------------------------------------------------------

/// Simulated binary crossover, applied to every component, children clamped.
inline std::pair<Genotype, Genotype> sbx_crossover(const Genotype& a, const Genotype& b,
                                                   double eta_c, Rng& rng) {
    if (a.x.size() != b.x.size())
        throw std::invalid_argument("sbx_crossover: genotype lengths differ");
    Genotype c1 = a, c2 = b;
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        const double u = rng.uniform();
        const double beta = u <= 0.5 ? std::pow(2.0 * u, 1.0 / (eta_c + 1.0))
                                     : std::pow(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta_c + 1.0));
        c1.x[i] = 0.5 * ((1.0 + beta) * a.x[i] + (1.0 - beta) * b.x[i]);
        c2.x[i] = 0.5 * ((1.0 - beta) * a.x[i] + (1.0 + beta) * b.x[i]);
    }
    c1.clamp();
    c2.clamp();
    return {c1, c2};
}

/// Bounded polynomial mutation on [0,1] components.
inline Genotype poly_mutation(const Genotype& g, double eta_m, double prob, Rng& rng) {
    Genotype out = g;
    for (double& v : out.x) {
        if (rng.uniform() >= prob) continue;
        const double u = rng.uniform();
        double dq;
        if (u < 0.5) {
            const double d1 = v;
            dq = std::pow(2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta_m + 1.0),
                          1.0 / (eta_m + 1.0)) -
                 1.0;
        } else {
            const double d2 = 1.0 - v;
            dq = 1.0 - std::pow(2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta_m + 1.0),
                                1.0 / (eta_m + 1.0));
        }
        v = std::min(1.0, std::max(0.0, v + dq));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fronts and hypervolume
// ---------------------------------------------------------------------------

/// Indices of points no other point strictly dominates.
inline std::vector<int> nondominated_indices(const std::vector<ObjectiveValue>& vals) {
    std::vector<int> out;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < vals.size() && !dominated; ++j)
            if (j != i && dominates(vals[j], vals[i]) == Dominance::strictly_dominates)
                dominated = true;
        if (!dominated) out.push_back(static_cast<int>(i));
    }
    return out;
}

/// Nondominated points, deduplicated and sorted ascending by v1.
inline std::vector<ObjectiveValue> pareto_front(const std::vector<ObjectiveValue>& vals) {
    std::vector<ObjectiveValue> front;
    for (int i : nondominated_indices(vals)) front.push_back(vals[i]);
    std::sort(front.begin(), front.end(), [](const ObjectiveValue& a, const ObjectiveValue& b) {
        return a.v1 < b.v1 || (a.v1 == b.v1 && a.v2 < b.v2);
    });
    front.erase(std::unique(front.begin(), front.end(),
                            [](const ObjectiveValue& a, const ObjectiveValue& b) {
                                return a.v1 == b.v1 && a.v2 == b.v2;
                            }),
                front.end());
    return front;
}

/// Two-objective hypervolume by a descending-staircase sweep; points at or
/// beyond the reference contribute nothing.
inline double hypervolume(std::vector<ObjectiveValue> front, const ObjectiveValue& ref) {
    std::sort(front.begin(), front.end(), [](const ObjectiveValue& a, const ObjectiveValue& b) {
        return a.v1 < b.v1 || (a.v1 == b.v1 && a.v2 < b.v2);
    });
    double area = 0.0;
    double roof = ref.v2;
    for (const ObjectiveValue& p : front) {
        if (p.v1 >= ref.v1 || p.v2 >= roof) continue;
        area += (ref.v1 - p.v1) * (roof - p.v2);
        roof = p.v2;
    }
    return area;
}

}  // namespace hfsl
