#include "doctest.h"
#include "flsim/rng.hpp"

#include <algorithm>
#include <set>

using namespace flsim;

TEST_CASE("derive is deterministic and index-sensitive") {
    CHECK(rng::derive(1, 2, 3) == rng::derive(1, 2, 3));
    CHECK(rng::derive(1, 2, 3) != rng::derive(1, 3, 2));
    CHECK(rng::derive(1, 2) != rng::derive(2, 2));
}

TEST_CASE("u01 stays in [0,1)") {
    for (int i = 0; i < 10000; ++i) {
        const float u = rng::u01(rng::derive(9, i));
        CHECK(u >= 0.0f);
        CHECK(u < 1.0f);
    }
}

TEST_CASE("sample_without_replacement yields distinct indices") {
    rng::Stream rs(4);
    const std::vector<int> s = rng::sample_without_replacement(100, 40, rs);
    CHECK(s.size() == 40);
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 40);
    for (int v : s) {
        CHECK(v >= 0);
        CHECK(v < 100);
    }
}

TEST_CASE("full-size sample is a permutation") {
    rng::Stream rs(11);
    std::vector<int> s = rng::sample_without_replacement(50, 50, rs);
    std::sort(s.begin(), s.end());
    for (int i = 0; i < 50; ++i) CHECK(s[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("shuffle is seed-reproducible") {
    std::vector<int> a(64), b(64);
    for (int i = 0; i < 64; ++i) a[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] = i;
    rng::Stream r1(7), r2(7);
    rng::shuffle(a, r1);
    rng::shuffle(b, r2);
    CHECK(a == b);
}

TEST_CASE("below is roughly uniform") {
    rng::Stream rs(3);
    std::vector<int> counts(10, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(rs.below(10))];
    for (int c : counts) {
        CHECK(c > draws / 10 - 600);
        CHECK(c < draws / 10 + 600);
    }
}
