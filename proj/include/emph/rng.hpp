#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace emph {

// Deterministic named substream: same (seed, label) always yields the same
// draw sequence within a build. One stream per parameter / dropout site.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string label)
        : label_(std::move(label)), engine_(mix(seed, label_)) {}

    const std::string& label() const { return label_; }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    bool bernoulli(double p) {
        std::uniform_real_distribution<double> d(0.0, 1.0);
        return d(engine_) < p;
    }

    std::uint64_t next_u64() { return engine_(); }

    std::size_t uniform_index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }

    static std::uint64_t hash_label(std::string_view s) {
        // FNV-1a, stable across platforms
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    static std::mt19937_64 mix(std::uint64_t seed, const std::string& label) {
        return std::mt19937_64(splitmix(seed ^ hash_label(label)));
    }

    std::string label_;
    std::mt19937_64 engine_;
};

// One named stream per dropout site / parameter, created on first use.
class RngSet {
public:
    explicit RngSet(std::uint64_t seed) : seed_(seed) {}

    RngStream& at(const std::string& label) {
        auto it = streams_.find(label);
        if (it == streams_.end())
            it = streams_.emplace(label, RngStream(seed_, label)).first;
        return it->second;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::map<std::string, RngStream> streams_;
};

}  // namespace emph
