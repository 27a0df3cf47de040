#include <doctest.h>

#include <cmath>

#include "surrevo/rng.hpp"

using namespace surrevo;

TEST_CASE("stream is reproducible and copyable") {
    DeterministicStream a(42);
    DeterministicStream b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    DeterministicStream c = a;
    CHECK(a.next_u64() == c.next_u64());
}

TEST_CASE("fork derives distinct streams without advancing the parent") {
    DeterministicStream root(7);
    DeterministicStream before = root;
    DeterministicStream child_a = root.fork("island", 0);
    DeterministicStream child_b = root.fork("island", 1);
    DeterministicStream child_c = root.fork("noise", 0);
    CHECK(root.next_u64() == before.next_u64());

    int differing_ab = 0;
    int differing_ac = 0;
    for (int i = 0; i < 100; ++i) {
        const auto a = child_a.next_u64();
        if (a != child_b.next_u64()) {
            ++differing_ab;
        }
        if (a != child_c.next_u64()) {
            ++differing_ac;
        }
    }
    CHECK(differing_ab == 100);
    CHECK(differing_ac == 100);
}

TEST_CASE("uniform stays in range and covers it") {
    DeterministicStream rng(3);
    double lo = 1.0;
    double hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform_index is unbiased enough for small n") {
    DeterministicStream rng(11);
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < 40000; ++i) {
        counts[rng.uniform_index(4)] += 1;
    }
    for (int c : counts) {
        CHECK(c > 9500);
        CHECK(c < 10500);
    }
}

TEST_CASE("normal has roughly unit moments") {
    DeterministicStream rng(5);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}
