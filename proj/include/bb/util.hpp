#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bb {

/// Name of a node, an integer in [1, name_space].
using Name = int;

/// ceil(log2(v)), with a floor of 1 so round/length formulas never degenerate.
inline int ceil_log2(std::uint64_t v) {
    int k = 0;
    std::uint64_t p = 1;
    while (p < v) {
        p <<= 1;
        ++k;
    }
    return k < 1 ? 1 : k;
}

/// splitmix64 step; the basis of every seeded stream in the simulator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream: state is a pure function of (seed, tag),
/// so draws are independent of any iteration order.
class RandomStream {
public:
    RandomStream() = default;
    RandomStream(std::uint64_t seed, std::uint64_t tag) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s = seed ^ (0x6a09e667f3bcc909ULL + tag * 0x9e3779b97f4a7c15ULL);
        state_ = a ^ splitmix64(s);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        // Modulo bias is irrelevant at 64-bit width for desk-scale bounds.
        return bound == 0 ? 0 : next_u64() % bound;
    }

    double unit() { return (next_u64() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_ = 0;
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

struct GuardError : std::runtime_error {
    explicit GuardError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bb
