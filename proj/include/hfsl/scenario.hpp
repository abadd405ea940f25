#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hfsl/common.hpp"

namespace hfsl {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One neural-network layer as the cost model sees it. Units: FLOPs per
/// datum for compute, bits per datum for activation/gradient payloads, bits
/// for parameters.
struct Layer {
    double fwd_flops = 0.0;       // forward FLOPs per datum
    double bwd_flops = 0.0;       // backward FLOPs per datum
    double fwd_out_bits = 0.0;    // forward activation output, bits per datum
    double bwd_out_bits = 0.0;    // backward gradient output, bits per datum
    double param_bits = 0.0;      // parameter size, bits
};

struct LayerProfile {
    std::vector<Layer> layers;

    int size() const { return static_cast<int>(layers.size()); }

    double total_flops_per_datum() const {
        double s = 0.0;
        for (const auto& l : layers) s += l.fwd_flops + l.bwd_flops;
        return s;
    }
    double total_param_bits() const {
        double s = 0.0;
        for (const auto& l : layers) s += l.param_bits;
        return s;
    }

    void validate() const {
        if (size() < 3)
            throw ScenarioError("profile: split constraint infeasible (needs at least 3 layers, got " +
                                std::to_string(size()) + ")");
        for (int i = 0; i < size(); ++i) {
            const Layer& l = layers[i];
            if (l.fwd_flops < 0 || l.bwd_flops < 0 || l.fwd_out_bits < 0 || l.bwd_out_bits < 0 ||
                l.param_bits < 0)
                throw ScenarioError("profile: layer " + std::to_string(i + 1) + " has a negative field");
            if (l.fwd_flops + l.bwd_flops <= 0)
                throw ScenarioError("profile: layer " + std::to_string(i + 1) + " has zero compute");
        }
    }
};

struct WorkerConfig {
    long data_size = 0;            // local dataset size
    long batch = 0;                // minibatch size
    long epochs = 0;               // local epochs per round
    double freq_max_hz = 0.0;      // maximum CPU frequency, cycles/s
    double flops_per_cycle = 0.0;  // FLOPs per cycle
    double eff_capacitance = 0.0;  // effective capacitance, J*s^2/cycle^3
    double tx_power_w = 0.0;       // uplink transmit power, W
    double distance_m = 0.0;       // distance to the base station, m

    // Local iterations per round, ceil(epochs*data/batch) adjusted to even.
    long iterations = 0;

    void validate(int index) const {
        auto bad = [&](const char* field) {
            throw ScenarioError("worker " + std::to_string(index) + ": " + field + " must be positive");
        };
        if (data_size <= 0) bad("data_size");
        if (batch <= 0) bad("batch");
        if (epochs <= 0) bad("epochs");
        if (freq_max_hz <= 0) bad("freq_max_hz");
        if (flops_per_cycle <= 0) bad("flops_per_cycle");
        if (eff_capacitance <= 0) bad("eff_capacitance");
        if (tx_power_w <= 0) bad("tx_power_w");
        if (distance_m <= 0) bad("distance_m");
    }
};

/// Number of local iterations for a worker; incremented to the next even
/// value when odd (the pipeline processes minibatches in pairs).
inline long even_iterations(long epochs, long data_size, long batch) {
    const long n = (epochs * data_size + batch - 1) / batch;
    return (n % 2 == 0) ? n : n + 1;
}

struct SystemConfig {
    int workers = 0;                  // K
    double bandwidth_max_hz = 0.0;    // total uplink/downlink bandwidth budget
    double server_freq_max_hz = 0.0;  // total server CPU frequency budget
    double server_flops_per_cycle = 0.0;
    double server_tx_power_w = 0.0;
    double noise_w_per_hz = 0.0;      // AWGN spectral density (W/Hz, converted from dBm/Hz)
    double carrier_ghz = 0.0;
    int rounds = 0;                   // global rounds counted by the objectives
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (workers < 1) throw ScenarioError("system: workers must be >= 1");
        if (bandwidth_max_hz <= 0) throw ScenarioError("system: bandwidth_max_hz must be positive");
        if (server_freq_max_hz <= 0) throw ScenarioError("system: server_freq_max_hz must be positive");
        if (server_flops_per_cycle <= 0) throw ScenarioError("system: server_flops_per_cycle must be positive");
        if (server_tx_power_w <= 0) throw ScenarioError("system: server_tx_power_w must be positive");
        if (noise_w_per_hz <= 0) throw ScenarioError("system: noise density must be positive");
        if (carrier_ghz <= 0) throw ScenarioError("system: carrier_ghz must be positive");
        if (rounds < 1) throw ScenarioError("system: rounds must be >= 1");
    }
};

struct Scenario {
    SystemConfig system;
    std::vector<WorkerConfig> workers;
    LayerProfile profile;

    void validate() const {
        system.validate();
        if (static_cast<int>(workers.size()) != system.workers)
            throw ScenarioError("system.workers=" + std::to_string(system.workers) + " but " +
                                std::to_string(workers.size()) + " worker entries given");
        for (std::size_t k = 0; k < workers.size(); ++k) workers[k].validate(static_cast<int>(k) + 1);
        profile.validate();
    }
};

/// Per-(worker, round) channel gain amplitudes; g.at(k, t).
struct ChannelDraws {
    int workers = 0;
    int rounds = 0;
    std::vector<double> g;  // row-major, workers x rounds

    double at(int k, int t) const { return g[static_cast<std::size_t>(k) * rounds + t]; }
};

// ---------------------------------------------------------------------------
// Channel model
// ---------------------------------------------------------------------------

/// Free-space-style path loss in dB; carrier in GHz, distance in meters.
inline double path_loss_db(double carrier_ghz, double distance_m) {
    return 32.4 + 20.0 * std::log10(carrier_ghz) + 20.0 * std::log10(distance_m);
}

inline double mean_channel_gain(double carrier_ghz, double distance_m) {
    return std::pow(10.0, -path_loss_db(carrier_ghz, distance_m) / 20.0);
}

/// Draws the gain matrix shared by every candidate evaluation in a run:
/// g[k][t] i.i.d. Rayleigh with mean 10^(-PL(d_k)/20). Pure in (scenario, seed).
inline ChannelDraws sample_channels(const Scenario& sc, std::uint64_t seed) {
    static constexpr double kRayleighMeanFactor = 1.2533141373155003;  // sqrt(pi/2)
    Rng rng(seed);
    ChannelDraws draws;
    draws.workers = sc.system.workers;
    draws.rounds = sc.system.rounds;
    draws.g.resize(static_cast<std::size_t>(draws.workers) * draws.rounds);
    for (int k = 0; k < draws.workers; ++k) {
        const double mean = mean_channel_gain(sc.system.carrier_ghz, sc.workers[k].distance_m);
        const double sigma = mean / kRayleighMeanFactor;
        for (int t = 0; t < draws.rounds; ++t)
            draws.g[static_cast<std::size_t>(k) * draws.rounds + t] = rng.rayleigh(sigma);
    }
    return draws;
}

// ---------------------------------------------------------------------------
// Synthetic layer profiles
// ---------------------------------------------------------------------------

struct ProfileSpec {
    std::string preset = "uniform";  // "uniform" | "mobilenet_like"
    int layers = 0;
    std::uint64_t seed = 0;
    // uniform preset: per-layer values
    double fwd_flops = 0.0;
    double bwd_flops = 0.0;
    double fwd_out_bits = 0.0;
    double bwd_out_bits = 0.0;
    double param_bits = 0.0;
    // mobilenet_like preset: network totals
    double total_fwd_flops = 0.0;
    double total_param_bits = 0.0;
    double input_bits = 0.0;
};

/// Deterministic synthetic profile. The mobilenet_like preset has a
/// convolution-like shape: FLOPs peak mid-network, activation payloads decay
/// with depth, parameters lean toward the deep layers. Totals are normalized
/// so the configured budgets are met exactly.
inline LayerProfile synth_profile(const ProfileSpec& spec) {
    if (spec.layers < 3)
        throw ScenarioError("profile: split constraint infeasible (needs at least 3 layers, got " +
                            std::to_string(spec.layers) + ")");
    const int L = spec.layers;
    LayerProfile p;
    p.layers.resize(L);

    if (spec.preset == "uniform") {
        for (auto& l : p.layers)
            l = Layer{spec.fwd_flops, spec.bwd_flops, spec.fwd_out_bits, spec.bwd_out_bits, spec.param_bits};
        p.validate();
        return p;
    }
    if (spec.preset != "mobilenet_like")
        throw ScenarioError("profile: unknown preset '" + spec.preset + "'");

    Rng rng(spec.seed);
    std::vector<double> flop_w(L), param_w(L), act_jitter(L);
    double flop_sum = 0.0, param_sum = 0.0;
    for (int i = 0; i < L; ++i) {
        const double x = (i + 0.5) / L;
        const double bell = std::exp(-(x - 0.45) * (x - 0.45) / (2.0 * 0.18 * 0.18));
        flop_w[i] = bell * std::exp(0.2 * rng.normal());
        param_w[i] = flop_w[i] * (0.5 + x);
        act_jitter[i] = std::exp(0.1 * rng.normal());
        flop_sum += flop_w[i];
        param_sum += param_w[i];
    }
    // Activations decay geometrically from the input size to ~1/64 of it.
    const double decay = std::pow(1.0 / 64.0, 1.0 / L);
    double prev_out = spec.input_bits;
    for (int i = 0; i < L; ++i) {
        Layer& l = p.layers[i];
        l.fwd_flops = spec.total_fwd_flops * flop_w[i] / flop_sum;
        l.bwd_flops = 2.0 * l.fwd_flops;
        l.fwd_out_bits = spec.input_bits * std::pow(decay, i + 1) * act_jitter[i];
        l.bwd_out_bits = prev_out;  // gradient w.r.t. the layer input
        l.param_bits = spec.total_param_bits * param_w[i] / param_sum;
        prev_out = l.fwd_out_bits;
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline double require_number(const nlohmann::json& j, const std::string& section, const char* key) {
    if (!j.contains(key))
        throw ScenarioError(section + ": missing field '" + key + "'");
    if (!j[key].is_number())
        throw ScenarioError(section + ": field '" + key + "' must be a number");
    return j[key].get<double>();
}

inline double number_or(const nlohmann::json& j, const char* key, double fallback) {
    return j.contains(key) ? j[key].get<double>() : fallback;
}

}  // namespace detail

/// dBm/Hz -> W/Hz.
inline double dbm_per_hz_to_w(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::require_number;
    Scenario sc;
    if (!j.contains("system") || !j.contains("workers") || !j.contains("profile"))
        throw ScenarioError("scenario: requires sections 'system', 'workers', 'profile'");

    const auto& sys = j["system"];
    sc.system.workers = static_cast<int>(require_number(sys, "system", "workers"));
    sc.system.bandwidth_max_hz = require_number(sys, "system", "bandwidth_max_hz");
    sc.system.server_freq_max_hz = require_number(sys, "system", "server_freq_max_hz");
    sc.system.server_flops_per_cycle = require_number(sys, "system", "server_flops_per_cycle");
    sc.system.server_tx_power_w = require_number(sys, "system", "server_tx_power_w");
    sc.system.noise_w_per_hz = dbm_per_hz_to_w(require_number(sys, "system", "noise_dbm_per_hz"));
    sc.system.carrier_ghz = require_number(sys, "system", "carrier_ghz");
    sc.system.rounds = static_cast<int>(require_number(sys, "system", "rounds"));
    sc.system.rng_seed = static_cast<std::uint64_t>(detail::number_or(sys, "seed", 1));

    if (!j["workers"].is_array()) throw ScenarioError("workers: must be a list");
    int idx = 0;
    for (const auto& wj : j["workers"]) {
        ++idx;
        const std::string sec = "worker " + std::to_string(idx);
        WorkerConfig w;
        w.data_size = static_cast<long>(require_number(wj, sec, "data_size"));
        w.batch = static_cast<long>(require_number(wj, sec, "batch"));
        w.epochs = static_cast<long>(require_number(wj, sec, "epochs"));
        w.freq_max_hz = require_number(wj, sec, "freq_max_hz");
        w.flops_per_cycle = require_number(wj, sec, "flops_per_cycle");
        w.eff_capacitance = require_number(wj, sec, "eff_capacitance");
        w.tx_power_w = require_number(wj, sec, "tx_power_w");
        w.distance_m = require_number(wj, sec, "distance_m");
        w.iterations = even_iterations(w.epochs, w.data_size, w.batch);
        sc.workers.push_back(w);
    }

    const auto& pj = j["profile"];
    if (pj.contains("layers") && pj["layers"].is_array()) {
        for (const auto& lj : pj["layers"]) {
            Layer l;
            l.fwd_flops = detail::require_number(lj, "profile layer", "cf");
            l.bwd_flops = detail::require_number(lj, "profile layer", "cb");
            l.fwd_out_bits = detail::require_number(lj, "profile layer", "of");
            l.bwd_out_bits = detail::require_number(lj, "profile layer", "ob");
            l.param_bits = detail::require_number(lj, "profile layer", "g");
            sc.profile.layers.push_back(l);
        }
    } else if (pj.contains("preset")) {
        ProfileSpec ps;
        ps.preset = pj["preset"].get<std::string>();
        ps.layers = static_cast<int>(require_number(pj, "profile", "layers"));
        ps.seed = static_cast<std::uint64_t>(detail::number_or(pj, "seed", 1));
        ps.fwd_flops = detail::number_or(pj, "cf", 0.0);
        ps.bwd_flops = detail::number_or(pj, "cb", 0.0);
        ps.fwd_out_bits = detail::number_or(pj, "of", 0.0);
        ps.bwd_out_bits = detail::number_or(pj, "ob", 0.0);
        ps.param_bits = detail::number_or(pj, "g", 0.0);
        ps.total_fwd_flops = detail::number_or(pj, "total_fwd_flops", 0.0);
        ps.total_param_bits = detail::number_or(pj, "total_param_bits", 0.0);
        ps.input_bits = detail::number_or(pj, "input_bits", 0.0);
        sc.profile = synth_profile(ps);
    } else {
        throw ScenarioError("profile: needs either an inline 'layers' table or a 'preset'");
    }

    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("scenario file " + path + ": " + e.what());
    }
    return parse_scenario(j);
}

}  // namespace hfsl
