#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace surrevo {

// 64-bit FNV-1a over raw bytes. Used for genome content ids and for
// deriving named rng substreams.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t hash = 14695981039346656037ull) {
    for (const char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string hex64(std::uint64_t value);

// Deterministic splittable random stream (splitmix64 core).
//
// Streams are value types: copying one and drawing from both copies yields
// identical sequences. fork() derives an independent child stream from the
// current state without advancing it, so the substreams a component sees
// are fixed by construction order, not by how many draws happened in
// between.
class DeterministicStream {
public:
    explicit DeterministicStream(std::uint64_t seed) : state_(seed) {}

    DeterministicStream fork(std::string_view label, std::uint64_t index = 0) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();
    double uniform(double lo, double hi);

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    bool bernoulli(double p);

    // Standard normal via Box-Muller; consumes exactly two draws per call.
    double normal();

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[static_cast<std::size_t>(uniform_index(items.size()))];
    }

private:
    std::uint64_t state_;
};

} // namespace surrevo
