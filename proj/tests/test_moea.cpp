#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "hfsl/moea.hpp"
#include "support.hpp"

using hfsl::Dominance;
using hfsl::ObjectiveValue;

namespace {

// Level-by-level peeling: a point is in the current level iff no remaining
// point strictly dominates it. Quadratic and obviously correct.
std::vector<std::vector<int>> oracle_sort(const std::vector<ObjectiveValue>& vals) {
    std::vector<int> remaining(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) remaining[i] = static_cast<int>(i);
    std::vector<std::vector<int>> levels;
    while (!remaining.empty()) {
        std::vector<int> level, rest;
        for (int i : remaining) {
            bool dominated = false;
            for (int j : remaining)
                if (j != i && vals[j].v1 <= vals[i].v1 && vals[j].v2 <= vals[i].v2 &&
                    (vals[j].v1 < vals[i].v1 || vals[j].v2 < vals[i].v2))
                    dominated = true;
            (dominated ? rest : level).push_back(i);
        }
        levels.push_back(level);
        remaining = rest;
    }
    return levels;
}

// Cell-counting hypervolume: fraction of a 2000x2000 raster over
// [min_v1, ref1] x [min_v2, ref2] whose cell centers are covered.
double raster_hypervolume(const std::vector<ObjectiveValue>& front, const ObjectiveValue& ref) {
    double min1 = ref.v1, min2 = ref.v2;
    for (const auto& p : front) {
        min1 = std::min(min1, p.v1);
        min2 = std::min(min2, p.v2);
    }
    if (min1 >= ref.v1 || min2 >= ref.v2) return 0.0;
    const int n = 2000;
    const double dx = (ref.v1 - min1) / n, dy = (ref.v2 - min2) / n;
    long covered = 0;
    for (int i = 0; i < n; ++i) {
        const double x = min1 + (i + 0.5) * dx;
        double best = ref.v2;  // lowest v2 among points with v1 <= x
        for (const auto& p : front)
            if (p.v1 <= x) best = std::min(best, p.v2);
        for (int j = 0; j < n; ++j) {
            const double y = min2 + (j + 0.5) * dy;
            if (y >= best) ++covered;
        }
    }
    return covered * dx * dy;
}

std::vector<ObjectiveValue> random_values(hfsl::Rng& rng, int n, double lo = 0.0,
                                          double hi = 100.0) {
    std::vector<ObjectiveValue> vals(n);
    for (auto& v : vals) {
        v.v1 = rng.uniform(lo, hi);
        v.v2 = rng.uniform(lo, hi);
    }
    return vals;
}

}  // namespace

TEST_CASE("dominance relation on the canonical cases") {
    CHECK(hfsl::dominates({1, 2}, {2, 2}) == Dominance::strictly_dominates);
    CHECK(hfsl::dominates({2, 2}, {1, 2}) == Dominance::dominated);
    CHECK(hfsl::dominates({1, 3}, {3, 1}) == Dominance::incomparable);
    CHECK(hfsl::dominates({2, 2}, {2, 2}) == Dominance::equal);
}

TEST_CASE("non-dominated sort on scripted populations") {
    std::vector<ObjectiveValue> vals = {{1, 2}, {2, 1}, {2, 2}, {3, 3}};
    auto levels = hfsl::nondominated_sort(vals);
    REQUIRE(levels.size() == 3);
    CHECK(levels[0] == std::vector<int>{0, 1});
    CHECK(levels[1] == std::vector<int>{2});
    CHECK(levels[2] == std::vector<int>{3});

    std::vector<ObjectiveValue> same(5, {1, 1});
    CHECK(hfsl::nondominated_sort(same).size() == 1);

    std::vector<ObjectiveValue> chain = {{1, 1}, {2, 2}, {3, 3}};
    CHECK(hfsl::nondominated_sort(chain).size() == 3);
}

TEST_CASE("non-dominated sort matches the peeling oracle") {
    hfsl::Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + int(rng.below(200));
        auto vals = random_values(rng, n, 0, 10);  // small range forces ties
        for (auto& v : vals) {
            v.v1 = std::floor(v.v1);
            v.v2 = std::floor(v.v2);
        }
        auto got = hfsl::nondominated_sort(vals);
        auto want = oracle_sort(vals);
        REQUIRE(got.size() == want.size());
        for (std::size_t l = 0; l < got.size(); ++l) {
            auto g = got[l], w = want[l];
            std::sort(g.begin(), g.end());
            std::sort(w.begin(), w.end());
            CHECK(g == w);
        }
    }
}

TEST_CASE("selection keeps whole levels and fills the last by niching") {
    hfsl::Rng rng(32);
    for (int trial = 0; trial < 50; ++trial) {
        const int R = 2 + int(rng.below(40));
        auto vals = random_values(rng, 2 * R);
        auto chosen = hfsl::select(vals, R);
        CHECK(int(chosen.size()) == R);
        std::set<int> uniq(chosen.begin(), chosen.end());
        CHECK(uniq.size() == chosen.size());

        auto levels = hfsl::nondominated_sort(vals);
        if (int(levels[0].size()) <= R)
            for (int i : levels[0]) CHECK(uniq.count(i) == 1);
    }
}

TEST_CASE("selection at an exact level boundary returns that level") {
    // X1 = four incomparable points, X2 = four dominated copies
    std::vector<ObjectiveValue> vals = {{1, 4}, {2, 3}, {3, 2}, {4, 1},
                                        {5, 5}, {6, 6}, {7, 7}, {8, 8}};
    auto chosen = hfsl::select(vals, 4);
    std::set<int> uniq(chosen.begin(), chosen.end());
    CHECK(uniq == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("niching keeps both extremes of a wide incomparable level") {
    const int R = 10;
    std::vector<ObjectiveValue> vals;
    for (int i = 0; i < 2 * R; ++i)
        vals.push_back({double(i), double(2 * R - 1 - i)});  // all incomparable
    auto chosen = hfsl::select(vals, R);
    CHECK(int(chosen.size()) == R);
    std::set<int> uniq(chosen.begin(), chosen.end());
    CHECK(uniq.count(0) == 1);          // min v1
    CHECK(uniq.count(2 * R - 1) == 1);  // min v2
}

TEST_CASE("selection with R=1 returns a nondominated point") {
    std::vector<ObjectiveValue> vals = {{3, 3}, {1, 2}, {2, 4}};
    auto chosen = hfsl::select(vals, 1);
    REQUIRE(chosen.size() == 1);
    CHECK(chosen[0] == 1);
}

TEST_CASE("selection never shrinks the nondominated hypervolume") {
    hfsl::Rng rng(33);
    const ObjectiveValue ref{120, 120};
    for (int trial = 0; trial < 40; ++trial) {
        const int R = 5 + int(rng.below(20));
        auto parents = random_values(rng, R);
        auto pool = parents;
        auto offspring = random_values(rng, R);
        pool.insert(pool.end(), offspring.begin(), offspring.end());
        if (int(hfsl::nondominated_sort(pool)[0].size()) > R) continue;
        std::vector<ObjectiveValue> next;
        for (int i : hfsl::select(pool, R)) next.push_back(pool[i]);
        const double before = hfsl::hypervolume(hfsl::pareto_front(parents), ref);
        const double after = hfsl::hypervolume(hfsl::pareto_front(next), ref);
        CHECK(after >= before - 1e-12);
    }
}

TEST_CASE("crossover is a fixed point on identical parents and stays in the box") {
    hfsl::Rng rng(34);
    hfsl::Genotype a;
    a.x = {0.1, 0.5, 0.9, 0.3};
    auto [c1, c2] = hfsl::sbx_crossover(a, a, 20, rng);
    CHECK(c1.x == a.x);
    CHECK(c2.x == a.x);

    for (int trial = 0; trial < 2000; ++trial) {
        auto p = hfsl::random_genotype(2, rng);
        auto q = hfsl::random_genotype(2, rng);
        auto [u, v] = hfsl::sbx_crossover(p, q, 20, rng);
        for (double x : u.x) CHECK((x >= 0.0 && x <= 1.0));
        for (double x : v.x) CHECK((x >= 0.0 && x <= 1.0));
    }
}

TEST_CASE("crossover spread factor has unit median") {
    hfsl::Rng rng(35);
    hfsl::Genotype a, b;
    a.x = {0.2};
    b.x = {0.8};
    std::vector<double> spread;
    for (int i = 0; i < 100000; ++i) {
        auto [c1, c2] = hfsl::sbx_crossover(a, b, 20, rng);
        spread.push_back(std::abs(c2.x[0] - c1.x[0]) / 0.6);
    }
    std::nth_element(spread.begin(), spread.begin() + spread.size() / 2, spread.end());
    CHECK(spread[spread.size() / 2] == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("mutation respects probability, bounds, and the zero boundary") {
    hfsl::Rng rng(36);
    hfsl::Genotype g = hfsl::random_genotype(3, rng);
    auto same = hfsl::poly_mutation(g, 20, 0.0, rng);
    CHECK(same.x == g.x);

    // at the lower bound only upward moves are possible
    hfsl::Genotype zero;
    zero.x = {0.0};
    double max_seen = 0.0;
    for (int i = 0; i < 5000; ++i) {
        auto m = hfsl::poly_mutation(zero, 20, 1.0, rng);
        CHECK(m.x[0] >= 0.0);
        max_seen = std::max(max_seen, m.x[0]);
    }
    CHECK(max_seen > 0.0);

    // empirical per-component mutation frequency tracks prob
    hfsl::Genotype mid;
    mid.x.assign(40, 0.5);
    const double prob = 1.0 / 40.0;
    long flips = 0;
    const int trials = 100000;
    for (int i = 0; i < trials; ++i) {
        auto m = hfsl::poly_mutation(mid, 20, prob, rng);
        for (std::size_t j = 0; j < m.x.size(); ++j)
            if (m.x[j] != mid.x[j]) ++flips;
    }
    const double freq = double(flips) / (double(trials) * 40.0);
    CHECK(freq == Catch::Approx(prob).epsilon(0.05));
}

TEST_CASE("decoding maps the unit box onto feasible plans") {
    auto sc = hfsl::load_scenario(std::string(HFSL_SCENARIO_DIR) + "/desk_k8.json");
    const int K = sc.system.workers;
    const int L = sc.profile.size();
    hfsl::CostModel model(sc);

    SECTION("equal shares split the bandwidth evenly") {
        hfsl::Genotype g;
        g.x.assign(4 * K, 0.5);
        auto plan = hfsl::decode(g, sc);
        for (const auto& e : plan.workers)
            CHECK(e.bandwidth_hz == Catch::Approx(sc.system.bandwidth_max_hz / K).epsilon(1e-12));
    }

    SECTION("cut components hit the exact boundaries") {
        hfsl::Genotype g;
        g.x.assign(4 * K, 0.5);
        g.x[0] = 0.0;
        g.x[1] = 0.0;
        auto plan = hfsl::decode(g, sc);
        CHECK(plan.workers[0].s_cut == 1);
        g.x[0] = 1.0;
        g.x[1] = 1.0;
        plan = hfsl::decode(g, sc);
        CHECK(plan.workers[0].s_cut == L - 1);
        CHECK(plan.workers[0].h_cut == L - 1);
    }

    SECTION("cut grid scan never violates the ordering") {
        hfsl::Genotype g;
        g.x.assign(4 * K, 0.5);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                g.x[0] = i / 3.0;
                g.x[1] = j / 3.0;
                auto plan = hfsl::decode(g, sc);
                CHECK(plan.workers[0].s_cut >= 1);
                CHECK(plan.workers[0].s_cut <= plan.workers[0].h_cut);
                CHECK(plan.workers[0].h_cut <= L - 1);
            }
    }

    SECTION("random genotypes decode to validated plans with spent budgets") {
        hfsl::Rng rng(37);
        for (int trial = 0; trial < 20000; ++trial) {
            auto plan = hfsl::decode(hfsl::random_genotype(K, rng), sc);
            model.validate(plan);
            double b = 0, fe = 0;
            bool any_split = false;
            for (const auto& e : plan.workers) {
                b += e.bandwidth_hz;
                fe += e.server_freq_hz;
                any_split = any_split || e.is_split();
            }
            CHECK(b == Catch::Approx(sc.system.bandwidth_max_hz).epsilon(1e-9));
            if (any_split)
                CHECK(fe == Catch::Approx(sc.system.server_freq_max_hz).epsilon(1e-9));
        }
    }
}

TEST_CASE("hypervolume of the staircase example") {
    std::vector<ObjectiveValue> front = {{1, 3}, {2, 2}, {3, 1}};
    CHECK(hfsl::hypervolume(front, {4, 4}) == 6.0);
    CHECK(hfsl::hypervolume({}, {4, 4}) == 0.0);
    // a point at or past the reference adds nothing
    front.push_back({4, 0.5});
    CHECK(hfsl::hypervolume(front, {4, 4}) == 6.0);
}

TEST_CASE("hypervolume matches the raster oracle") {
    hfsl::Rng rng(38);
    const ObjectiveValue ref{100, 100};
    for (int trial = 0; trial < 20; ++trial) {
        auto vals = random_values(rng, 2 + int(rng.below(30)), 0, 95);
        auto front = hfsl::pareto_front(vals);
        const double fast = hfsl::hypervolume(front, ref);
        const double slow = raster_hypervolume(front, ref);
        CHECK(fast == Catch::Approx(slow).epsilon(1e-3));
    }
}

TEST_CASE("pareto front is a strictly decreasing staircase") {
    hfsl::Rng rng(39);
    auto vals = random_values(rng, 60);
    vals.push_back(vals[5]);  // duplicate must collapse
    auto front = hfsl::pareto_front(vals);
    REQUIRE(!front.empty());
    for (std::size_t i = 1; i < front.size(); ++i) {
        CHECK(front[i].v1 > front[i - 1].v1);
        CHECK(front[i].v2 < front[i - 1].v2);
    }
}
