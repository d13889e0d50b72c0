#include "doctest.h"

#include <cmath>
#include <vector>

#include "mdmvar/error.hpp"
#include "mdmvar/syrm.hpp"

using namespace mdmvar;

namespace {

// Var[(1/(P t)) Σ M_i Y_i] from first principles over an explicit matrix:
// Var(M_i Y_i) = t(σ_i² + μ_i²) - t² μ_i², Cov(M_i Y_i, M_j Y_j) = t² Σ_ij.
double brute_variance(const GroupModel& gm, bool include_c, double t) {
    const int P = gm.P_R + (include_c ? gm.P_C : 0);
    double total = 0.0;
    for (int i = 0; i < P; ++i) {
        const bool ri = i < gm.P_R;
        for (int j = 0; j < P; ++j) {
            const bool rj = j < gm.P_R;
            if (i == j) {
                double s2 = ri ? gm.sigma2_R : gm.sigma2_C, mu = ri ? gm.mu_R : gm.mu_C;
                total += t * (s2 + mu * mu) - t * t * mu * mu;
            } else {
                double c = ri && rj ? gm.rho_RR : (!ri && !rj ? gm.rho_CC : gm.rho_RC);
                total += t * t * c;
            }
        }
    }
    return total / (double(P) * P * t * t);
}

GroupModel example_model() {
    GroupModel gm;
    gm.P_R = 8;
    gm.P_C = 8;
    gm.sigma2_R = 1.0;
    gm.rho_RR = 0.5;
    return gm;
}

}  // namespace

TEST_CASE("batch-loss variance: single token") {
    GroupModel gm;
    gm.P_R = 1;
    gm.P_C = 1;
    gm.sigma2_R = 1.0;
    CHECK(batch_loss_variance(gm, SyrmStrategy::resp, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("batch-loss variance agrees with the first-principles sum") {
    GroupModel gm{5, 3, 1.2, 0.4, 1.5, 0.3, 0.6, 0.1, 0.2};
    REQUIRE_NOTHROW(gm.validate());
    for (double t : {0.05, 0.3, 0.7, 1.0}) {
        CHECK(batch_loss_variance(gm, SyrmStrategy::resp, t) == doctest::Approx(brute_variance(gm, false, t)).epsilon(1e-12));
        CHECK(batch_loss_variance(gm, SyrmStrategy::syrm, t) == doctest::Approx(brute_variance(gm, true, t)).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)batch_loss_variance(gm, SyrmStrategy::syrm, 0.0), ValidationError);
}

TEST_CASE("batch-loss variance: zero means at t = 1") {
    GroupModel gm{4, 4, 0.0, 0.0, 2.0, 1.0, 0.5, 0.2, 0.1};
    // (1/P²) Σσ² + (2/P²) Σ_{i<j} ρ_ij with P = 8
    double sig = 4 * 2.0 + 4 * 1.0;
    double rho = 6 * 0.5 + 6 * 0.2 + 16 * 0.1;
    CHECK(batch_loss_variance(gm, SyrmStrategy::syrm, 1.0) == doctest::Approx((sig + 2 * rho) / 64.0));
}

TEST_CASE("batch-loss variance matches simulation") {
    GroupModel gm{6, 4, 1.0, 0.5, 1.0, 0.3, 0.4, 0.1, 0.15};
    BatchLossSimulator sim(gm);
    for (double t : {0.2, 0.6}) {
        for (SyrmStrategy s : {SyrmStrategy::resp, SyrmStrategy::syrm}) {
            RunningStats st = sim.simulate(s, t, 100000, RngStream(1).derive("t", int(t * 10)));
            double expect = brute_variance(gm, s == SyrmStrategy::syrm, t);
            CHECK(std::abs(st.variance() - expect) <= 3 * st.stderr_variance());
        }
    }
}

TEST_CASE("rate-averaged mask noise: quadrature, closed form and simulation over t") {
    GroupModel gm{6, 4, 1.0, 0.5, 1.0, 0.3, 0.4, 0.1, 0.15};
    TDist dist;
    CHECK(dist.mean_inv() == doctest::Approx(std::log(20.0) / 0.95).epsilon(1e-14));
    for (SyrmStrategy s : {SyrmStrategy::resp, SyrmStrategy::syrm}) {
        double quad = mask_noise_quadrature(gm, s, dist);
        CHECK(quad == doctest::Approx(mask_noise_closed_form(gm, s, dist)).epsilon(1e-10));
        // E_t Var[L|t] is the variance of L minus the variance of E[L|t] = μ̄ (constant in t).
        RunningStats st = BatchLossSimulator(gm).simulate(s, dist, 100000, RngStream(2));
        CHECK(std::abs(st.variance() - quad) <= 3 * st.stderr_variance());
    }
}

TEST_CASE("dominance verdicts") {
    DominanceResult r = check_syrm_dominance(example_model());
    CHECK(r.assumptions_ok);
    CHECK(r.holds);
    CHECK(r.A_syrm < r.A_resp);

    GroupModel margin;
    margin.P_R = 9;
    margin.P_C = 1;
    margin.sigma2_R = 1.0;
    margin.sigma2_C = 0.5;
    margin.rho_RR = 0.1;
    margin.rho_CC = 0.05;
    DominanceResult v = check_syrm_dominance(margin);
    CHECK_FALSE(v.assumptions_ok);
    CHECK_FALSE(v.holds);
    REQUIRE(v.violations.size() == 1);
    CHECK(v.violations[0] == "margin");
    CHECK(v.margin_lhs > v.margin_rhs);

    GroupModel noisy_syntax = example_model();
    noisy_syntax.sigma2_C = 0.9;
    CHECK(check_syrm_dominance(noisy_syntax).violations.front() == "syntax_noise");
}

TEST_CASE("dominance holds on random assumption-satisfying models") {
    RngStream rng(3);
    int accepted = 0;
    for (int k = 0; k < 2000 && accepted < 20; ++k) {
        GroupModel gm = random_group_model(rng);
        DominanceResult r = check_syrm_dominance(gm);
        if (!r.assumptions_ok) continue;
        ++accepted;
        CHECK(r.holds);
    }
    CHECK(accepted == 20);
}

TEST_CASE("mixture identity per draw") {
    GroupModel gm{6, 4, 1.0, 0.5, 1.0, 0.3, 0.4, 0.1, 0.15};
    BatchLossSimulator sim(gm);
    RngStream rng(4);
    for (int k = 0; k < 1000; ++k) {
        double t = 0.05 + 0.95 * rng.uniform();
        auto d = sim.draw(t, rng);
        CHECK(d.alpha == doctest::Approx(0.6));
        double mix = d.alpha * d.L_resp + (1 - d.alpha) * d.L_coord;
        CHECK(std::abs(d.L_syrm - mix) <= 1e-12 * (1 + std::abs(d.L_syrm)));
    }
}

TEST_CASE("optimum-shift bound on quadratic toys") {
    // J_resp = θ², J_coord = (θ - 1)², α = 0.5 along both axes.
    Quadratic2 resp{{2, 0, 0, 2}, {0, 0}};
    Quadratic2 coord{{2, 0, 0, 2}, {1, 0}};
    ShiftCheck s = quadratic_shift(resp, coord, 0.5);
    CHECK(s.exact_shift == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(s.bound - s.exact_shift) <= 1e-9);

    RngStream rng(5);
    for (int k = 0; k < 200; ++k) {
        auto spd = [&] {
            double a = rng.uniform(0.1, 3), c = rng.uniform(0.1, 3);
            double b = rng.uniform(-1, 1) * std::sqrt(a * c) * 0.95;
            return Mat2{a, b, b, c};
        };
        Quadratic2 r{spd(), {rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        Quadratic2 c{spd(), {rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        double alpha = rng.uniform();
        ShiftCheck sc = quadratic_shift(r, c, alpha);
        CHECK(sc.bound >= sc.exact_shift * (1 - 1e-12));
    }
}

TEST_CASE("optimum-shift bound edge cases") {
    CHECK(optimum_shift_bound(0.3, 2.0, 0.0) == 0.0);
    CHECK(optimum_shift_bound(1.0, 2.0, 5.0) == 0.0);
    CHECK_THROWS_AS((void)optimum_shift_bound(0.5, 0.0, 1.0), ValidationError);
    Quadratic2 same{{1, 0, 0, 3}, {0.5, -1}};
    ShiftCheck s = quadratic_shift(same, same, 0.4);
    CHECK(s.exact_shift == doctest::Approx(0.0));
    CHECK(s.bound == doctest::Approx(0.0));
}

TEST_CASE("group model validation and json") {
    GroupModel gm{6, 4, 1.0, 0.5, 1.0, 0.3, 0.4, 0.1, 0.15};
    GroupModel back = GroupModel::from_json(gm.to_json());
    CHECK(back.to_json() == gm.to_json());
    GroupModel bad_cs = gm;
    bad_cs.rho_RC = 0.5;  // sqrt(0.4 * 0.1) = 0.2
    CHECK_THROWS_AS(bad_cs.validate(), ValidationError);
    GroupModel not_psd = gm;
    not_psd.rho_RR = 1.5;
    CHECK(not_psd.min_eigenvalue() < 0);
    CHECK_THROWS_AS(not_psd.validate(), ValidationError);
    CHECK_THROWS_AS((void)GroupModel::from_json(R"({"P_R": 2, "extra": 1})"), ValidationError);
}

TEST_CASE("min eigenvalue matches the explicit covariance") {
    GroupModel gm{3, 2, 0, 0, 1.0, 0.6, 0.3, 0.2, -0.1};
    auto S = gm.covariance();
    // Power iteration on (c I - S) gives the smallest eigenvalue of S.
    const int P = 5;
    const double c = 10.0;
    std::vector<double> v(P, 1.0);
    v[1] = -0.3;
    v[4] = 0.7;
    double lambda = 0.0;
    for (int it = 0; it < 5000; ++it) {
        std::vector<double> w(P);
        for (int i = 0; i < P; ++i) {
            w[i] = c * v[i];
            for (int j = 0; j < P; ++j) w[i] -= S[i * P + j] * v[j];
        }
        double n = 0.0;
        for (double x : w) n += x * x;
        n = std::sqrt(n);
        for (int i = 0; i < P; ++i) v[i] = w[i] / n;
        lambda = c - n;
    }
    CHECK(gm.min_eigenvalue() == doctest::Approx(lambda).epsilon(1e-8));
}
