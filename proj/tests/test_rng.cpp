#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>
#include <vector>

#include "mdmvar/error.hpp"
#include "mdmvar/rng.hpp"

using namespace mdmvar;

TEST_CASE("same derivation path gives the same stream") {
    RngStream a = RngStream(42).derive("mask", 0);
    RngStream b = RngStream(42).derive("mask", 0);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
}

TEST_CASE("sibling indices give different streams") {
    RngStream a = RngStream(42).derive("mask", 0);
    RngStream b = RngStream(42).derive("mask", 1);
    int equal = 0;
    for (int i = 0; i < 10000; ++i) equal += a.uniform() == b.uniform();
    CHECK(equal < 10000);
    CHECK(equal == 0);
}

TEST_CASE("labels, parents and roots all separate streams") {
    std::set<std::uint64_t> keys;
    RngStream root(42);
    keys.insert(root.derive("mask", 0).key());
    keys.insert(root.derive("t", 0).key());
    keys.insert(root.derive("mask", 0).derive("mask", 0).key());
    keys.insert(RngStream(43).derive("mask", 0).key());
    CHECK(keys.size() == 4);
}

TEST_CASE("uniform stays in [0, 1)") {
    RngStream s = RngStream(42).derive("t", 5);
    for (int i = 0; i < 100000; ++i) {
        double u = s.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("uniform moments") {
    RngStream s = RngStream(7).derive("moments", 0);
    const int n = 100000;
    std::vector<double> x(n);
    for (auto& v : x) v = s.uniform();
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n - 1;
    CHECK(std::abs(mean - 0.5) <= 0.005);
    CHECK(std::abs(var - 1.0 / 12.0) <= 0.05 / 12.0);
}

TEST_CASE("draws depend on position only, not on interleaving") {
    RngStream parent(11);
    RngStream a = parent.derive("x", 3);
    std::vector<double> first;
    for (int i = 0; i < 5; ++i) first.push_back(a.uniform());
    // Deriving other children in between changes nothing.
    RngStream b = parent.derive("x", 3);
    for (int i = 0; i < 5; ++i) {
        (void)parent.derive("y", i).uniform();
        CHECK(b.uniform() == first[i]);
    }
}

TEST_CASE("child_uniform equals first draw of the derived child") {
    RngStream s(99);
    for (std::uint64_t i = 0; i < 50; ++i) {
        RngStream c = s.derive("u", i);
        CHECK(s.child_uniform("u", i) == c.uniform());
    }
}

TEST_CASE("streams are reproducible across threads") {
    RngStream root(5);
    std::vector<double> serial(8), threaded(8);
    for (int i = 0; i < 8; ++i) serial[i] = root.derive("w", i).uniform();
    std::vector<std::thread> pool;
    for (int i = 0; i < 8; ++i)
        pool.emplace_back([&, i] { threaded[i] = root.derive("w", i).uniform(); });
    for (auto& th : pool) th.join();
    CHECK(serial == threaded);
}

TEST_CASE("below is in range and roughly uniform") {
    RngStream s(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        auto k = s.below(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal moments") {
    RngStream s(13);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = s.normal();
        sum += z;
        sq += z * z;
    }
    double mean = sum / n;
    CHECK(std::abs(mean) < 0.015);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("empty label is rejected") {
    CHECK_THROWS_AS((void)RngStream(1).derive("", 0), ValidationError);
}

TEST_CASE("describe lists the path") {
    CHECK(RngStream(42).derive("mask", 0).derive("pos", 3).describe() == "42/mask:0/pos:3");
}

TEST_CASE("shuffle is a permutation") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    RngStream s(8);
    shuffle(v, s);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}
