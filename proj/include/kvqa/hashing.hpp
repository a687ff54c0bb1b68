#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kvqa {

// Platform-independent hashing and random draws. Every mock output and every
// seeded selection goes through these so runs are byte-identical everywhere;
// std::*_distribution and std::shuffle are implementation-defined and are not
// used.

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::string_view part) noexcept {
    return splitmix64(fnv1a64(part, seed ^ 0x6a09e667f3bcc909ULL));
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t part) noexcept {
    return splitmix64(seed ^ splitmix64(part));
}

// Uniform double in [0, 1) built from the top 53 bits.
inline double unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::string hex64(std::uint64_t value);

// Deterministic generator (splitmix64 stream).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64(state_);
    }

    double uniform() noexcept { return unit_interval(next()); }

    // Index in [0, n). n must be positive.
    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace kvqa
