#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfsl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Raised when a scenario or task file violates its schema or an invariant.
class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a plan fails a feasibility constraint; the message names the constraint.
class FeasibilityError : public std::runtime_error {
public:
    explicit FeasibilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Seeded random stream.
//
// All randomness in the library flows through this class so that a run is a
// pure function of its seeds. Distributions are derived from raw 64-bit
// draws by fixed arithmetic (no std::*_distribution), which keeps output
// byte-stable across standard library implementations.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64; passes through every 64-bit value, trivially seedable.
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform draw strictly inside (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform draw in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; second value cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    /// Rayleigh draw with scale sigma; strictly positive.
    double rayleigh(double sigma) {
        return sigma * std::sqrt(-2.0 * std::log(1.0 - uniform()));
    }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// ---------------------------------------------------------------------------
// CSV and number formatting.
//
// Doubles are written with "%.17g" so that equal values always produce equal
// bytes and every value round-trips exactly; reruns of a manifest must
// reproduce output files bit for bit.
// ---------------------------------------------------------------------------
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::string header) { out_ << header << '\n'; }

    CsvWriter& field(const std::string& s) {
        sep();
        out_ << s;
        return *this;
    }
    CsvWriter& field(double v) { return field(fmt_double(v)); }
    CsvWriter& field(int v) { return field(std::to_string(v)); }
    CsvWriter& field(long v) { return field(std::to_string(v)); }
    CsvWriter& field(std::size_t v) { return field(std::to_string(v)); }

    void endrow() {
        out_ << '\n';
        row_open_ = false;
    }

    std::string str() const { return out_.str(); }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for writing: " + path);
        f << out_.str();
    }

private:
    void sep() {
        if (row_open_) out_ << ',';
        row_open_ = true;
    }
    std::ostringstream out_;
    bool row_open_ = false;
};

/// FNV-1a 64-bit over a byte string; used to fingerprint scenario files.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace hfsl
