#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hfsl/common.hpp"
#include "hfsl/cost_model.hpp"
#include "hfsl/moea.hpp"
#include "hfsl/scenario.hpp"

namespace hfsl {

// ---------------------------------------------------------------------------
// Minimal dense network with manual backprop and Adam
// ---------------------------------------------------------------------------

inline double safe_ln(double x) { return std::log(std::max(x, 1e-300)); }

struct DenseLayer {
    int in = 0, out = 0;
    bool sigmoid_out = false;  // hidden layers squash with tanh
    std::vector<double> w, b;
    std::vector<double> gw, gb;
    std::vector<double> mw, vw, mb, vb;
};

/// Fully connected net, tanh hidden layers, logistic output layer. Gradients
/// are accumulated explicitly; no autodiff, no external math libraries.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::vector<int>& widths, Rng& rng) {
        for (std::size_t i = 1; i < widths.size(); ++i) {
            DenseLayer l;
            l.in = widths[i - 1];
            l.out = widths[i];
            l.sigmoid_out = i + 1 == widths.size();
            const double bound = std::sqrt(6.0 / (l.in + l.out));
            l.w.resize(static_cast<std::size_t>(l.in) * l.out);
            for (double& x : l.w) x = rng.uniform(-bound, bound);
            l.b.assign(l.out, 0.0);
            l.gw.assign(l.w.size(), 0.0);
            l.gb.assign(l.out, 0.0);
            l.mw.assign(l.w.size(), 0.0);
            l.vw.assign(l.w.size(), 0.0);
            l.mb.assign(l.out, 0.0);
            l.vb.assign(l.out, 0.0);
            layers_.push_back(std::move(l));
        }
    }

    int input_size() const { return layers_.front().in; }
    int output_size() const { return layers_.back().out; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    /// Forward pass keeping every post-activation for the backward pass.
    std::vector<std::vector<double>> trace_forward(const std::vector<double>& x) const {
        std::vector<std::vector<double>> acts;
        acts.reserve(layers_.size() + 1);
        acts.push_back(x);
        for (const DenseLayer& l : layers_) {
            const std::vector<double>& a = acts.back();
            std::vector<double> y(l.out);
            for (int o = 0; o < l.out; ++o) {
                double z = l.b[o];
                const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) z += row[i] * a[i];
                z = std::min(500.0, std::max(-500.0, z));
                y[o] = l.sigmoid_out ? (z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                               : std::exp(z) / (1.0 + std::exp(z)))
                                     : std::tanh(z);
            }
            acts.push_back(std::move(y));
        }
        return acts;
    }

    std::vector<double> forward(const std::vector<double>& x) const {
        return trace_forward(x).back();
    }

    /// Backward pass from dL/d(output); accumulates parameter gradients
    /// unless frozen, and returns dL/d(input) so losses can flow through a
    /// frozen net into an upstream one.
    std::vector<double> backward(const std::vector<std::vector<double>>& acts,
                                 std::vector<double> dy, bool frozen = false) {
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            DenseLayer& l = layers_[li];
            const std::vector<double>& a_out = acts[li + 1];
            const std::vector<double>& a_in = acts[li];
            std::vector<double> dz(l.out);
            for (int o = 0; o < l.out; ++o) {
                const double a = a_out[o];
                dz[o] = dy[o] * (l.sigmoid_out ? a * (1.0 - a) : 1.0 - a * a);
            }
            if (!frozen) {
                for (int o = 0; o < l.out; ++o) {
                    l.gb[o] += dz[o];
                    double* grow = &l.gw[static_cast<std::size_t>(o) * l.in];
                    for (int i = 0; i < l.in; ++i) grow[i] += dz[o] * a_in[i];
                }
            }
            std::vector<double> dx(l.in, 0.0);
            for (int o = 0; o < l.out; ++o) {
                const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
                for (int i = 0; i < l.in; ++i) dx[i] += dz[o] * row[i];
            }
            dy = std::move(dx);
        }
        return dy;
    }

    void zero_grad() {
        for (DenseLayer& l : layers_) {
            std::fill(l.gw.begin(), l.gw.end(), 0.0);
            std::fill(l.gb.begin(), l.gb.end(), 0.0);
        }
    }

    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        ++step_;
        const double c1 = 1.0 - std::pow(beta1, step_);
        const double c2 = 1.0 - std::pow(beta2, step_);
        auto update = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& m,
                          std::vector<double>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        };
        for (DenseLayer& l : layers_) {
            update(l.w, l.gw, l.mw, l.vw);
            update(l.b, l.gb, l.mb, l.vb);
        }
    }

private:
    std::vector<DenseLayer> layers_;
    long step_ = 0;
};

// ---------------------------------------------------------------------------
// Input noise model
// ---------------------------------------------------------------------------

/// Gaussian fitted to a genotype population: mean vector plus full covariance
/// with a jitter-stabilized Cholesky factor (diagonal fallback when the
/// factorization fails outright).
struct NoiseModel {
    std::vector<double> mean;
    std::vector<double> cov;   // n x n row-major
    std::vector<double> chol;  // lower-triangular factor; empty => diagonal fallback
    std::vector<double> diag_sd;
    int n = 0;

    static NoiseModel fit(const std::vector<Genotype>& pop) {
        if (pop.empty()) throw std::invalid_argument("NoiseModel::fit: empty population");
        NoiseModel nm;
        nm.n = static_cast<int>(pop.front().x.size());
        const double inv = 1.0 / pop.size();
        nm.mean.assign(nm.n, 0.0);
        for (const Genotype& g : pop)
            for (int i = 0; i < nm.n; ++i) nm.mean[i] += g.x[i] * inv;
        nm.cov.assign(static_cast<std::size_t>(nm.n) * nm.n, 0.0);
        for (const Genotype& g : pop)
            for (int i = 0; i < nm.n; ++i)
                for (int j = 0; j < nm.n; ++j)
                    nm.cov[static_cast<std::size_t>(i) * nm.n + j] +=
                        (g.x[i] - nm.mean[i]) * (g.x[j] - nm.mean[j]) * inv;
        nm.factorize();
        return nm;
    }

    void factorize() {
        static constexpr double kJitter = 1e-6;
        const int d = n;
        chol.assign(static_cast<std::size_t>(d) * d, 0.0);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = cov[static_cast<std::size_t>(i) * d + j] + (i == j ? kJitter : 0.0);
                for (int k = 0; k < j; ++k)
                    s -= chol[static_cast<std::size_t>(i) * d + k] *
                         chol[static_cast<std::size_t>(j) * d + k];
                if (i == j) {
                    if (s <= 0.0) {  // jittered matrix still not positive definite
                        chol.clear();
                        diag_sd.resize(d);
                        for (int q = 0; q < d; ++q)
                            diag_sd[q] =
                                std::sqrt(cov[static_cast<std::size_t>(q) * d + q] + kJitter);
                        return;
                    }
                    chol[static_cast<std::size_t>(i) * d + j] = std::sqrt(s);
                } else {
                    chol[static_cast<std::size_t>(i) * d + j] =
                        s / chol[static_cast<std::size_t>(j) * d + j];
                }
            }
        }
    }

    std::vector<double> sample(Rng& rng) const {
        std::vector<double> u(n);
        for (double& x : u) x = rng.normal();
        std::vector<double> z(mean);
        if (!chol.empty()) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j <= i; ++j)
                    z[i] += chol[static_cast<std::size_t>(i) * n + j] * u[j];
        } else {
            for (int i = 0; i < n; ++i) z[i] += diag_sd[i] * u[i];
        }
        return z;
    }
};

// ---------------------------------------------------------------------------
// Dominance-pair mining
// ---------------------------------------------------------------------------

struct Solution {
    Genotype geno;
    SplitPlan plan;
    ObjectiveValue value;
};

struct PairSearch {
    std::vector<std::pair<int, int>> pairs;  // (index into parents, index into compared)
    std::vector<int> retained;               // compared indices kept for the next generation
};

/// Mines ordered dominance pairs: for each parent, strictly dominated and
/// distance-bounded candidates, thinned to the kappa nearest to the line
/// through the componentwise-minimum reference point and the parent's value.
inline PairSearch find_pairs(const std::vector<Solution>& parents,
                             const std::vector<Solution>& compared, double gamma, int kappa) {
    PairSearch out;
    if (parents.empty()) return out;
    double psi1 = parents[0].value.v1, psi2 = parents[0].value.v2;
    for (const Solution& p : parents) {
        psi1 = std::min(psi1, p.value.v1);
        psi2 = std::min(psi2, p.value.v2);
    }
    std::set<int> retained;
    for (std::size_t pi = 0; pi < parents.size(); ++pi) {
        const ObjectiveValue& v = parents[pi].value;
        struct Hit {
            int index;
            double dist;
        };
        std::vector<Hit> hits;
        for (std::size_t ci = 0; ci < compared.size(); ++ci) {
            const ObjectiveValue& u = compared[ci].value;
            if (dominates(v, u) != Dominance::strictly_dominates) continue;
            const double d1 = v.v1 - u.v1, d2 = v.v2 - u.v2;
            if (std::sqrt(d1 * d1 + d2 * d2) > gamma) continue;
            const double r1 = v.v1 - psi1, r2 = v.v2 - psi2;
            const double q1 = u.v1 - psi1, q2 = u.v2 - psi2;
            const double rn = std::sqrt(r1 * r1 + r2 * r2);
            const double dist =
                rn > 0 ? std::abs(r1 * q2 - r2 * q1) / rn : std::sqrt(q1 * q1 + q2 * q2);
            hits.push_back({static_cast<int>(ci), dist});
        }
        if (static_cast<int>(hits.size()) > kappa) {
            std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
                return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
            });
            hits.resize(kappa);
            std::sort(hits.begin(), hits.end(),
                      [](const Hit& a, const Hit& b) { return a.index < b.index; });
        }
        for (const Hit& h : hits) {
            out.pairs.push_back({static_cast<int>(pi), h.index});
            retained.insert(h.index);
        }
    }
    out.retained.assign(retained.begin(), retained.end());
    return out;
}

// ---------------------------------------------------------------------------
// The adversarial pair
// ---------------------------------------------------------------------------

/// Generator/discriminator pair sized for a 4K-wide genotype: generator
/// 4K-4K-4K-4K, discriminator 2*4K-8K-1.
class PredGan {
public:
    PredGan(int geno_len, std::uint64_t seed) : rng_(seed) {
        gen_ = Mlp({geno_len, geno_len, geno_len, geno_len}, rng_);
        disc_ = Mlp({2 * geno_len, 2 * geno_len, 1}, rng_);
    }

    Mlp& generator() { return gen_; }
    Mlp& discriminator() { return disc_; }
    Rng& rng() { return rng_; }

    /// Probability that the first slot dominates the second; order matters.
    double disc_forward(const Genotype& a, const Genotype& b) const {
        return disc_.forward(concat(a.x, b.x))[0];
    }

    double disc_loss(const std::vector<std::pair<const Genotype*, const Genotype*>>& z) const {
        double loss = 0.0;
        for (const auto& [phi, phi2] : z) {
            loss -= safe_ln(disc_forward(*phi, *phi2));
            loss -= safe_ln(1.0 - disc_forward(*phi2, *phi));
        }
        return loss / z.size();
    }

    /// Accumulates dF_D/dθ into the discriminator and returns the loss.
    double disc_grad(const std::vector<std::pair<const Genotype*, const Genotype*>>& z) {
        if (z.empty()) throw std::invalid_argument("disc_grad: empty pair set");
        disc_.zero_grad();
        double loss = 0.0;
        const double inv = 1.0 / z.size();
        for (const auto& [phi, phi2] : z) {
            auto acts = disc_.trace_forward(concat(phi->x, phi2->x));
            const double d = acts.back()[0];
            loss -= safe_ln(d);
            disc_.backward(acts, {-inv / std::max(d, 1e-300)});

            acts = disc_.trace_forward(concat(phi2->x, phi->x));
            const double d2 = acts.back()[0];
            loss -= safe_ln(1.0 - d2);
            disc_.backward(acts, {inv / std::max(1.0 - d2, 1e-300)});
        }
        return loss * inv;
    }

    /// One Adam step on the discriminator loss; returns the loss at the
    /// pre-step weights.
    double train_disc(const std::vector<std::pair<const Genotype*, const Genotype*>>& z,
                      double lr = 4e-4) {
        const double loss = disc_grad(z);
        disc_.adam_step(lr);
        return loss;
    }

    double gen_loss(const std::vector<const Genotype*>& parents,
                    const std::vector<std::vector<double>>& noise) const {
        double loss = 0.0;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            Genotype fake;
            fake.x = gen_.forward(noise[i]);
            loss -= safe_ln(disc_forward(fake, *parents[i]));
        }
        return loss / parents.size();
    }

    /// Accumulates dF_G/dθ into the generator with the discriminator frozen;
    /// noise[i] feeds the synthetic rival of parents[i].
    double gen_grad(const std::vector<const Genotype*>& parents,
                    const std::vector<std::vector<double>>& noise) {
        if (parents.empty()) throw std::invalid_argument("gen_grad: empty parent set");
        gen_.zero_grad();
        double loss = 0.0;
        const double inv = 1.0 / parents.size();
        for (std::size_t i = 0; i < parents.size(); ++i) {
            auto gen_acts = gen_.trace_forward(noise[i]);
            auto disc_acts = disc_.trace_forward(concat(gen_acts.back(), parents[i]->x));
            const double d = disc_acts.back()[0];
            loss -= safe_ln(d);
            auto d_input = disc_.backward(disc_acts, {-inv / std::max(d, 1e-300)},
                                          /*frozen=*/true);
            d_input.resize(gen_.output_size());  // only the first slot feeds the generator
            gen_.backward(gen_acts, std::move(d_input));
        }
        return loss * inv;
    }

    double train_gen(const std::vector<const Genotype*>& parents,
                     const std::vector<std::vector<double>>& noise, double lr = 4e-4) {
        const double loss = gen_grad(parents, noise);
        gen_.adam_step(lr);
        return loss;
    }

    /// Fresh genotypes from the generator under the given noise model.
    std::vector<Genotype> offspring(const NoiseModel& nm, int count) {
        std::vector<Genotype> out(count);
        for (Genotype& g : out) g.x = gen_.forward(nm.sample(rng_));
        return out;
    }

private:
    static std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> x;
        x.reserve(a.size() + b.size());
        x.insert(x.end(), a.begin(), a.end());
        x.insert(x.end(), b.begin(), b.end());
        return x;
    }

    Rng rng_;
    Mlp gen_;
    Mlp disc_;
};

// ---------------------------------------------------------------------------
// The optimization loop
// ---------------------------------------------------------------------------

enum class NoiseMode { as_written, symmetric };

struct OptimizerConfig {
    int population = 100;  // R
    int generations = 100;
    bool use_gan = true;
    NoiseMode noise_mode = NoiseMode::as_written;
    double gamma = 80.0;
    int kappa = 6;
    int gan_iters = 10;  // M
    double eta_c = 20.0;
    double eta_m = 20.0;
    double lr = 4e-4;
    ObjectiveValue ref_point{36000.0, 10000.0};
};

struct GenerationTrace {
    int generation = 0;
    double hypervolume = 0.0;
    int z_pairs = 0;
    double disc_loss = 0.0;
    double gen_loss = 0.0;
    std::string branch;  // "genetic" or "gan"
    std::vector<ObjectiveValue> front;
};

struct RunResult {
    std::vector<Solution> population;
    std::vector<GenerationTrace> trace;
};

/// Hybrid GAN/genetic optimization loop. With the GAN disabled it is exactly
/// the reference-direction genetic baseline: the branch coin, the pair
/// mining, and all network work are skipped, and the genetic operators see
/// the identical random stream either way.
inline RunResult run_optimizer(const Scenario& sc, const ChannelDraws& draws,
                               const OptimizerConfig& cfg, std::uint64_t seed) {
    if (cfg.generations < 1) throw std::invalid_argument("run_optimizer: generations must be >= 1");
    if (cfg.population < 2) throw std::invalid_argument("run_optimizer: population must be >= 2");

    const CostModel model(sc);
    const int K = sc.system.workers;
    const int R = cfg.population;
    const double mut_prob = 1.0 / (4.0 * K);

    Rng rng_init(seed);
    Rng rng_ops(seed ^ 0x9e3779b97f4a7c15ULL);
    Rng rng_branch(seed ^ 0xd1b54a32d192ed03ULL);
    PredGan gan(4 * K, seed ^ 0x94d049bb133111ebULL);

    auto make = [&](Genotype g) {
        Solution s;
        s.plan = decode(g, sc);
        s.value = model.evaluate(s.plan, draws);
        s.geno = std::move(g);
        return s;
    };

    std::vector<Solution> parents;
    parents.reserve(R);
    for (int i = 0; i < R; ++i) parents.push_back(make(random_genotype(K, rng_init)));

    std::vector<Solution> y_set;
    NoiseModel noise_current;
    if (cfg.use_gan) {
        for (int i = 0; i < R; ++i) y_set.push_back(make(random_genotype(K, rng_init)));
        std::vector<Genotype> genos;
        for (const Solution& s : parents) genos.push_back(s.geno);
        noise_current = NoiseModel::fit(genos);
    }

    RunResult result;
    result.trace.reserve(cfg.generations);

    for (int j = 0; j < cfg.generations; ++j) {
        GenerationTrace tr;
        tr.generation = j + 1;

        const bool genetic = cfg.use_gan ? rng_branch.uniform() >= 0.5 : true;
        tr.branch = genetic ? "genetic" : "gan";

        std::vector<Solution> offspring;
        offspring.reserve(R);
        if (genetic) {
            std::vector<int> perm(R);
            for (int i = 0; i < R; ++i) perm[i] = i;
            for (int i = R - 1; i > 0; --i)
                std::swap(perm[i], perm[rng_ops.below(static_cast<std::uint64_t>(i) + 1)]);
            for (int i = 0; i < R; i += 2) {
                const Genotype& a = parents[perm[i]].geno;
                const Genotype& b = parents[perm[(i + 1) % R]].geno;
                auto [c1, c2] = sbx_crossover(a, b, cfg.eta_c, rng_ops);
                offspring.push_back(make(poly_mutation(c1, cfg.eta_m, mut_prob, rng_ops)));
                if (static_cast<int>(offspring.size()) < R)
                    offspring.push_back(make(poly_mutation(c2, cfg.eta_m, mut_prob, rng_ops)));
            }
        } else {
            for (Genotype& g : gan.offspring(noise_current, R)) offspring.push_back(make(g));
        }

        std::vector<Solution> pool = parents;
        pool.insert(pool.end(), offspring.begin(), offspring.end());
        std::vector<ObjectiveValue> pool_vals;
        pool_vals.reserve(pool.size());
        for (const Solution& s : pool) pool_vals.push_back(s.value);

        const std::vector<int> keep = select(pool_vals, R);
        std::vector<char> kept(pool.size(), 0);
        for (int i : keep) kept[i] = 1;

        std::vector<Solution> next;
        next.reserve(R);
        for (int i : keep) next.push_back(pool[i]);

        if (cfg.use_gan) {
            std::vector<Solution> compared = y_set;
            for (std::size_t i = 0; i < pool.size(); ++i)
                if (!kept[i]) compared.push_back(pool[i]);

            const PairSearch ps = find_pairs(next, compared, cfg.gamma, cfg.kappa);
            tr.z_pairs = static_cast<int>(ps.pairs.size());

            std::vector<Genotype> next_genos;
            for (const Solution& s : next) next_genos.push_back(s.geno);
            NoiseModel noise_next = NoiseModel::fit(next_genos);

            if (!ps.pairs.empty()) {
                std::vector<std::pair<const Genotype*, const Genotype*>> z;
                z.reserve(ps.pairs.size());
                for (const auto& [pi, ci] : ps.pairs)
                    z.push_back({&next[pi].geno, &compared[ci].geno});

                // training noise: fresh mean, covariance per the configured mode
                NoiseModel train_noise = noise_next;
                if (cfg.noise_mode == NoiseMode::as_written) {
                    train_noise.cov = noise_current.cov;
                    train_noise.chol = noise_current.chol;
                    train_noise.diag_sd = noise_current.diag_sd;
                }

                std::vector<const Genotype*> gen_parents;
                for (const Solution& s : next) gen_parents.push_back(&s.geno);

                for (int m = 0; m < cfg.gan_iters; ++m) tr.disc_loss = gan.train_disc(z, cfg.lr);
                for (int m = 0; m < cfg.gan_iters; ++m) {
                    std::vector<std::vector<double>> noise(gen_parents.size());
                    for (auto& v : noise) v = train_noise.sample(gan.rng());
                    tr.gen_loss = gan.train_gen(gen_parents, noise, cfg.lr);
                }
            }

            std::vector<Solution> y_next;
            for (int ci : ps.retained) y_next.push_back(compared[ci]);
            y_set = std::move(y_next);
            noise_current = std::move(noise_next);
        }

        parents = std::move(next);

        std::vector<ObjectiveValue> vals;
        for (const Solution& s : parents) vals.push_back(s.value);
        tr.front = pareto_front(vals);
        tr.hypervolume = hypervolume(tr.front, cfg.ref_point);
        result.trace.push_back(std::move(tr));
    }

    result.population = std::move(parents);
    return result;
}

}  // namespace hfsl
