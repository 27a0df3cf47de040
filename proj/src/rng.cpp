#include "surrevo/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace surrevo {

namespace {

std::uint64_t splitmix64_step(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    return splitmix64_step(s);
}

} // namespace

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

DeterministicStream DeterministicStream::fork(std::string_view label, std::uint64_t index) const {
    const std::uint64_t label_hash = fnv1a64(label);
    return DeterministicStream(mix(mix(state_, label_hash), index + 1));
}

std::uint64_t DeterministicStream::next_u64() {
    return splitmix64_step(state_);
}

double DeterministicStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double DeterministicStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::uint64_t DeterministicStream::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: n must be > 0");
    }
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

bool DeterministicStream::bernoulli(double p) {
    return uniform() < p;
}

double DeterministicStream::normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace surrevo
