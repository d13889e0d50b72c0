#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "mdmvar/error.hpp"
#include "mdmvar/ppots.hpp"
#include "mdmvar/variance.hpp"

using namespace mdmvar;

namespace {

DenoiserShape shape32() {
    DenoiserShape s;
    s.vocab = 32;
    s.max_len = 32;
    return s;
}

double sum_p(const Scatter& s) {
    double total = 0.0;
    for (const auto& p : s) total += p.p_hat;
    return total;
}

// Analytic normalized EPR density at the grid midpoints, computed directly.
std::vector<double> reference_grid(const EPRParams& e, int b) {
    std::vector<double> q(b);
    double z = 0.0;
    for (int j = 0; j < b; ++j) {
        double t = (j + 0.5) / b;
        double g = e.A * std::exp(e.kappa * std::pow(t, e.m));
        double v = e.a * std::pow(t, e.r) + e.b * std::pow(1 - t, e.q);
        q[j] = std::sqrt(g * g + v);
        z += q[j];
    }
    for (double& x : q) x /= z;
    return q;
}

}  // namespace

TEST_CASE("default scatter sizes") {
    ScatterSizes s;
    CHECK(s.a == 15);
    CHECK(s.b == 70);
    CHECK(s.c == 15);
}

TEST_CASE("scatter on the zero model: g is log V at every rate") {
    DenoiserParams zero(shape32());
    Corpus corpus = generate_corpus(Vocab{}, 8, 32, RngStream(1));
    ScatterSizes sizes{4, 10, 6};
    Scatter sc = estimate_scatter(zero, corpus, sizes, RngStream(2));
    REQUIRE(sc.size() == 10);
    CHECK(std::abs(sum_p(sc) - 1.0) <= 1e-9);
    // Each loss is (log V / (P t)) * #masked, with E[#masked] = P t.
    for (int j = 0; j < 10; ++j) {
        CHECK(sc[j].t == doctest::Approx((j + 0.5) / 10).epsilon(1e-15));
        // #masked ~ Bin(P, t), so Var l = (log V)^2 (1 - t) / (P t).
        const double t = sc[j].t, P = 16.0, L = std::log(32.0);
        double se = std::sqrt(L * L * (1 - t) / (P * t) / (sizes.a * sizes.c));
        CHECK(std::abs(sc[j].g_hat - L) <= 3 * se);
    }
}

TEST_CASE("scatter on a constant cell loss is flat") {
    CellLoss constant = [](int, double, const RngStream&) { return 2.5; };
    Scatter sc = estimate_scatter(constant, 5, ScatterSizes{3, 8, 3}, RngStream(3));
    for (const auto& p : sc) {
        CHECK(p.g_hat == doctest::Approx(2.5));
        CHECK(p.v_hat == 0.0);
        CHECK(p.p_hat == doctest::Approx(1.0 / 8).epsilon(1e-14));
    }
}

TEST_CASE("scatter g and v match a synthetic cell loss") {
    // l = t + sqrt(t) z with z ~ N(0,1): g = t, v = t.
    CellLoss synth = [](int, double t, const RngStream& s) {
        RngStream r = s;
        return t + std::sqrt(t) * r.normal();
    };
    Scatter sc = estimate_scatter(synth, 40, ScatterSizes{40, 10, 40}, RngStream(4));
    for (const auto& p : sc) {
        double se_g = std::sqrt(p.t / 1600.0);
        CHECK(std::abs(p.g_hat - p.t) <= 4 * se_g);
        // v_hat averages 40 unbiased variances of 40 normals: sd = t sqrt(2/39)/sqrt(40)
        CHECK(std::abs(p.v_hat - p.t) <= 4 * p.t * std::sqrt(2.0 / 39.0) / std::sqrt(40.0));
    }
}

TEST_CASE("scatter argument checks") {
    CellLoss constant = [](int, double, const RngStream&) { return 1.0; };
    CHECK_THROWS_AS((void)estimate_scatter(constant, 5, ScatterSizes{1, 8, 3}, RngStream(1)), ValidationError);
    CHECK_THROWS_AS((void)estimate_scatter(constant, 5, ScatterSizes{3, 6, 3}, RngStream(1)), ValidationError);
    CHECK_THROWS_AS((void)estimate_scatter(constant, 2, ScatterSizes{3, 8, 3}, RngStream(1)), ValidationError);
}

TEST_CASE("scatter is independent of the thread count") {
    DenoiserParams params = DenoiserParams::random(shape32(), RngStream(5));
    Corpus corpus = generate_corpus(Vocab{}, 6, 32, RngStream(6));
    ScatterSizes sizes{3, 8, 3};
    Scatter a = estimate_scatter(params, corpus, sizes, RngStream(7), EligibilityMode::sft, 1);
    Scatter b = estimate_scatter(params, corpus, sizes, RngStream(7), EligibilityMode::sft, 3);
    for (int j = 0; j < 8; ++j) {
        CHECK(a[j].g_hat == b[j].g_hat);
        CHECK(a[j].v_hat == b[j].v_hat);
    }
}

TEST_CASE("epr grid probabilities match the analytic shape") {
    EPRParams e{1, 2, 0.5, 1, 2, 3, 2};
    Scatter sc = scatter_from_epr(e, 70);
    auto q = epr_grid_probs(e, sc);
    auto ref = reference_grid(e, 70);
    for (int j = 0; j < 70; ++j) {
        CHECK(q[j] == doctest::Approx(ref[j]).epsilon(1e-12));
        CHECK(sc[j].p_hat == doctest::Approx(ref[j]).epsilon(1e-12));
    }
    CHECK(grid_kl(sc, q) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("unconstrained coordinates round trip") {
    EPRParams e{1.5, 0.2, 3.0, 0.7, 0.0, 2.5, 1.3};
    EPRParams back = epr_from_unconstrained(epr_to_unconstrained(e));
    CHECK(back.a == doctest::Approx(e.a));
    CHECK(back.b == doctest::Approx(e.b));
    CHECK(back.A == doctest::Approx(e.A));
    CHECK(back.kappa == doctest::Approx(e.kappa));
    CHECK(back.r >= 0.0);
    CHECK(back.r < 1e-8);
    CHECK(back.q == doctest::Approx(e.q));
    CHECK(back.m == doctest::Approx(e.m));
    CHECK(back.valid());
}

TEST_CASE("epr parameter constraints") {
    CHECK(EPRParams{}.valid());
    CHECK_FALSE((EPRParams{0, 1, 1, 1, 1, 1, 2}).valid());
    CHECK_FALSE((EPRParams{1, 1, 1, 1, -1, 1, 2}).valid());
    CHECK_FALSE((EPRParams{1, 1, 1, 1, 1, 1, 1}).valid());
    CHECK_THROWS_AS((EPRParams{1, 1, 1, -1, 1, 1, 2}).validate(), ValidationError);
}

TEST_CASE("fit recovers a noiseless epr scatter") {
    EPRParams truth{1, 2, 0.5, 1, 2, 3, 2};
    Scatter sc = scatter_from_epr(truth, 70);
    EprFit fit = fit_epr(sc, RngStream(8));
    CHECK(fit.kl <= 1e-5);
    auto q = epr_grid_probs(fit.params, sc);
    auto ref = reference_grid(truth, 70);
    for (int j = 0; j < 70; ++j) CHECK(std::abs(q[j] - ref[j]) <= 0.01 * ref[j]);
    CHECK(fit.params.valid());
}

TEST_CASE("fit is invariant to rescaling the scatter") {
    CellLoss synth = [](int, double t, const RngStream& s) {
        RngStream r = s;
        return std::exp(t) + 0.5 * r.normal();
    };
    Scatter sc = estimate_scatter(synth, 5, ScatterSizes{5, 20, 5}, RngStream(9));
    Scatter doubled = sc;
    for (auto& p : doubled) p.p_hat *= 2.0;
    normalize_scatter(doubled);
    EprFitOptions opts;
    opts.restarts = 4;
    EprFit a = fit_epr(sc, RngStream(10), opts);
    EprFit b = fit_epr(doubled, RngStream(10), opts);
    // Renormalizing perturbs p_hat in the last bit, so the simplex path may
    // differ; the fitted density must not.
    auto qa = epr_grid_probs(a.params, sc), qb = epr_grid_probs(b.params, sc);
    for (std::size_t j = 0; j < qa.size(); ++j) CHECK(qa[j] == doctest::Approx(qb[j]).epsilon(1e-6));
    CHECK(a.kl == doctest::Approx(b.kl).epsilon(1e-9));
}

TEST_CASE("fit is no worse than the best constant") {
    CellLoss synth = [](int, double t, const RngStream& s) {
        RngStream r = s;
        return 1.0 / (0.1 + t) + r.normal();
    };
    Scatter sc = estimate_scatter(synth, 6, ScatterSizes{6, 30, 6}, RngStream(11));
    EprFitOptions opts;
    opts.restarts = 5;
    EprFit fit = fit_epr(sc, RngStream(12), opts);
    std::vector<double> flat(sc.size(), 1.0 / sc.size());
    CHECK(fit.kl <= grid_kl(sc, flat) + 1e-12);
}

TEST_CASE("flat scatter returns the degenerate fit") {
    Scatter sc = scatter_from_epr(EPRParams{1, 1, 1, 1e-12, 0, 0, 2}, 10);
    for (auto& p : sc) p.p_hat = 0.1;
    EprFit fit = fit_epr(sc, RngStream(13));
    CHECK(fit.degenerate);
    CHECK(fit.kl == doctest::Approx(0.0).epsilon(1e-12));
    auto q = epr_grid_probs(fit.params, sc);
    for (double x : q) CHECK(x == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("fit rejects unnormalized scatter") {
    Scatter sc = scatter_from_epr(EPRParams{}, 10);
    sc[0].p_hat += 0.5;
    CHECK_THROWS_AS((void)fit_epr(sc, RngStream(1)), ValidationError);
}

TEST_CASE("polynomial fits") {
    Scatter sc = scatter_from_epr(EPRParams{1, 2, 0.5, 1, 2, 3, 2}, 70);
    PolynomialFit flat = fit_polynomial(sc, 0);
    for (double t : {0.1, 0.5, 0.9}) CHECK(flat.density.pdf(t) == doctest::Approx(1.0).epsilon(1e-9));

    Scatter constant = sc;
    for (auto& p : constant) p.p_hat = 1.0 / 70;
    PolynomialFit c7 = fit_polynomial(constant, 7);
    for (double t : {0.1, 0.5, 0.9}) CHECK(c7.density.pdf(t) == doctest::Approx(1.0).epsilon(1e-6));

    PolynomialFit p7 = fit_polynomial(sc, 7);
    CHECK(p7.coeffs.size() == 8);
    auto ref = reference_grid(EPRParams{1, 2, 0.5, 1, 2, 3, 2}, 70);
    // The density follows the scatter shape: p(t_j) ≈ 70 p_j.
    for (int j = 5; j < 65; j += 10) CHECK(std::abs(p7.density.pdf(sc[j].t) - 70 * ref[j]) < 0.05);
}

TEST_CASE("fit artifact round trip") {
    Scatter sc = scatter_from_epr(EPRParams{1, 2, 0.5, 1, 2, 3, 2}, 12);
    EprFit fit;
    fit.params = EPRParams{1.25, 2, 0.5, 1, 2, 3, 2.5};
    fit.kl = 1.5e-7;
    auto path = std::filesystem::temp_directory_path() / "mdmvar_fit_test.json";
    save_fit(path, fit, sc);
    LoadedFit back = load_fit(path);
    std::filesystem::remove(path);
    CHECK(back.grid_size == 12);
    CHECK(back.fit.kl == fit.kl);
    CHECK(back.fit.params.as_array() == fit.params.as_array());
    REQUIRE(back.scatter.size() == 12);
    CHECK(back.scatter[4].p_hat == sc[4].p_hat);
}
