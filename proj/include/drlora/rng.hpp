#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "drlora/matrix.hpp"

namespace drlora {

// Counter-based deterministic generator (splitmix64 finalizer over
// key + i*golden). Streams fork via derive(), so parallel sweep cells and
// data/init/growth draws never share a sequence. Identical key + call
// sequence reproduces the stream bit-exactly on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t key = 0, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    // Independent child stream; label keeps call sites self-describing.
    Rng derive(std::uint64_t salt) const { return Rng(mix(key_ ^ 0x5851f42d4c957f2dULL, salt)); }

    Rng derive(std::string_view label, std::uint64_t salt = 0) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return Rng(mix(key_ ^ h, salt));
    }

    std::uint64_t next_u64() { return mix(key_, counter_++); }

    // Uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    double next_gaussian() {
        // Box-Muller; one value per pair keeps the stream counter-addressable.
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    void fill_gaussian(Matrix& m, double std_dev, double mean = 0.0) {
        for (double& v : m.data()) v = mean + std_dev * next_gaussian();
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void set_state(std::uint64_t key, std::uint64_t counter) {
        key_ = key;
        counter_ = counter;
    }

private:
    static std::uint64_t mix(std::uint64_t key, std::uint64_t i) {
        std::uint64_t z = key + (i + 1) * 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace drlora
