#pragma once

#include <cstdint>
#include <string_view>

namespace tw {

// splitmix64 — tiny, well-mixed, and identical on every platform. All
// seeded randomness below derives from it so outputs are bit-stable across
// compilers and standard libraries.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view text) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Sequential splitmix stream; good enough wherever we need reproducible
// uniform draws.
class SplitMix {
  public:
    explicit SplitMix(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) without modulo bias worth caring about at our n.
    uint64_t below(uint64_t n) { return next() % n; }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi].
    double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

  private:
    uint64_t state_;
};

}  // namespace tw
