#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "mdmvar/error.hpp"
#include "mdmvar/masking.hpp"

using namespace mdmvar;

namespace {

std::vector<int> range(int lo, int hi) {
    std::vector<int> v(hi - lo);
    std::iota(v.begin(), v.end(), lo);
    return v;
}

TokenSeq make_seq(int len, int prompt_len, std::vector<int> rare) {
    TokenSeq s;
    s.tokens.assign(len, 6);
    s.prompt_len = prompt_len;
    s.rare_positions = std::move(rare);
    for (int p : s.rare_positions) s.tokens[p] = 1;
    return s;
}

}  // namespace

TEST_CASE("t = 1 masks everything eligible") {
    auto elig = range(4, 12);
    MaskPattern p = mask_standard(elig, 1.0, RngStream(1));
    CHECK(p.masked == elig);
    CHECK(p.num_eligible == 8);
    CHECK(p.token_weights.empty());
}

TEST_CASE("standard mask rate and independence") {
    std::vector<int> elig{0, 1};
    const int n = 100000;
    double c0 = 0, c1 = 0, c01 = 0;
    RngStream root(2);
    for (int k = 0; k < n; ++k) {
        MaskPattern p = mask_standard(elig, 0.3, root.derive("trial", k));
        double a = p.contains(0), b = p.contains(1);
        c0 += a;
        c1 += b;
        c01 += a * b;
    }
    double m0 = c0 / n, m1 = c1 / n;
    CHECK(std::abs(m0 - 0.3) <= 0.005);
    double cov = c01 / n - m0 * m1;
    double rho = cov / std::sqrt(m0 * (1 - m0) * m1 * (1 - m1));
    CHECK(std::abs(rho) <= 0.01);
}

TEST_CASE("mirror coverage is min(1, 2t) and halves are disjoint below 1/2") {
    std::vector<int> elig{0};
    RngStream root(3);
    for (double t : {0.1, 0.3, 0.5, 0.9}) {
        const int n = 100000;
        int cover = 0, overlap = 0;
        for (int k = 0; k < n; ++k) {
            auto [a, b] = mask_mirror(elig, t, root.derive("trial", k));
            bool ia = a.contains(0), ib = b.contains(0);
            cover += ia || ib;
            overlap += ia && ib;
        }
        CHECK(std::abs(double(cover) / n - std::min(1.0, 2 * t)) <= 0.005);
        if (t < 0.5) CHECK(overlap == 0);
    }
}

TEST_CASE("mirror at t = 1 masks everything twice") {
    auto elig = range(0, 10);
    auto [a, b] = mask_mirror(elig, 1.0, RngStream(4));
    CHECK(a.masked == elig);
    CHECK(b.masked == elig);
    CHECK(a.scheme == MaskScheme::mirror_a);
    CHECK(b.scheme == MaskScheme::mirror_b);
}

TEST_CASE("multisample-2 coverage is 2t - t^2 and branches are uncorrelated") {
    std::vector<int> elig{0};
    RngStream root(5);
    for (double t : {0.1, 0.3, 0.5, 0.9}) {
        const int n = 100000;
        double cover = 0, s1 = 0, s2 = 0, s12 = 0;
        for (int k = 0; k < n; ++k) {
            auto ps = mask_multisample(elig, t, 2, root.derive("trial", k));
            double a = ps[0].contains(0), b = ps[1].contains(0);
            cover += (a + b > 0);
            s1 += a;
            s2 += b;
            s12 += a * b;
        }
        CHECK(std::abs(cover / n - (2 * t - t * t)) <= 0.005);
        double cov = s12 / n - (s1 / n) * (s2 / n);
        CHECK(std::abs(cov) <= 3.0 * t * (1 - t) / std::sqrt(double(n)));
    }
}

TEST_CASE("multisample with k = 1 has the standard mask rate") {
    std::vector<int> elig{0};
    RngStream root(6);
    const int n = 100000;
    int hits = 0;
    for (int k = 0; k < n; ++k) hits += mask_multisample(elig, 0.3, 1, root.derive("trial", k))[0].contains(0);
    CHECK(std::abs(double(hits) / n - 0.3) <= 0.005);
    CHECK_THROWS_AS((void)mask_multisample(elig, 0.3, 0, root), ValidationError);
}

TEST_CASE("isad boosts rare positions and reweights them") {
    TokenSeq seq = make_seq(12, 4, {9});
    auto elig = range(4, 12);
    MaskPattern p = mask_isad(seq, elig, 0.9, 0.2, RngStream(7));
    // q = min(1, 1.1) = 1, so the rare token is always masked with weight t/q = 0.9.
    REQUIRE(p.contains(9));
    for (std::size_t k = 0; k < p.masked.size(); ++k) {
        if (p.masked[k] == 9)
            CHECK(p.weight_at(k) == doctest::Approx(0.9).epsilon(1e-15));
        else
            CHECK(p.weight_at(k) == 1.0);
    }
}

TEST_CASE("isad rare-token rate is t + delta") {
    TokenSeq seq = make_seq(8, 2, {5});
    auto elig = range(2, 8);
    RngStream root(8);
    const int n = 100000;
    int hits = 0;
    for (int k = 0; k < n; ++k) hits += mask_isad(seq, elig, 0.3, 0.2, root.derive("trial", k)).contains(5);
    CHECK(std::abs(double(hits) / n - 0.5) <= 0.005);
}

TEST_CASE("isad without rare tokens matches standard masking") {
    TokenSeq seq = make_seq(8, 2, {});
    auto elig = range(2, 8);
    RngStream s(9);
    MaskPattern a = mask_isad(seq, elig, 0.4, 0.2, s);
    MaskPattern b = mask_standard(elig, 0.4, s);
    CHECK(a.masked == b.masked);
}

TEST_CASE("apply_mask replaces masked positions") {
    TokenSeq seq = make_seq(6, 2, {});
    for (int i = 0; i < 6; ++i) seq.tokens[i] = 6 + i;
    MaskPattern p;
    p.masked = {1, 4};
    p.t = 0.5;
    p.num_eligible = 6;
    auto xt = apply_mask(seq, p, 0);
    CHECK(xt == std::vector<TokenId>{6, 0, 8, 9, 0, 11});
}

TEST_CASE("patterns reject invalid rates") {
    std::vector<int> elig{0, 1};
    CHECK_THROWS_AS((void)mask_standard(elig, 0.0, RngStream(1)), ValidationError);
    CHECK_THROWS_AS((void)mask_standard(elig, 1.5, RngStream(1)), ValidationError);
}

TEST_CASE("masking spec parsing") {
    CHECK(parse_masking("standard").kind == MaskingSpec::Kind::standard);
    CHECK(parse_masking("mirror").evaluations() == 2);
    auto ms = parse_masking("multisample:3");
    CHECK(ms.kind == MaskingSpec::Kind::multisample);
    CHECK(ms.evaluations() == 3);
    auto isad = parse_masking("isad:0.3");
    CHECK(isad.delta == doctest::Approx(0.3));
    CHECK(parse_masking("isad").delta == doctest::Approx(0.2));
    CHECK(parse_masking(parse_masking("multisample:4").str()).k == 4);
    CHECK_THROWS_AS((void)parse_masking("multisample:0"), ValidationError);
    CHECK_THROWS_AS((void)parse_masking("sideways"), ValidationError);
}
