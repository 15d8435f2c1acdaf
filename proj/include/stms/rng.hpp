#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace stms {

// Counter-based splittable RNG (splitmix64 core). Streams are derived from a
// seed plus a label or index, so initialization order never changes the draws
// and there is no global state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform on [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    // Independent child stream; does not advance this stream.
    Rng split(std::string_view label) const {
        std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001B3ull;
        }
        Rng child(state_ ^ h);
        child.next_u64();
        return child;
    }

    Rng split(std::uint64_t idx) const {
        Rng child(state_ ^ (0x9E3779B97F4A7C15ull * (idx + 1)));
        child.next_u64();
        return child;
    }

private:
    std::uint64_t state_;
};

}  // namespace stms
