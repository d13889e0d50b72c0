#pragma once

// Two-group token-loss model for the syntax-and-response masking analysis.
// Response tokens R and prompt syntax tokens C have group-homogeneous means,
// variances and pairwise covariances; each position is masked independently
// with probability t and L = (1/(P t)) Σ M_i Y_i.

#include <array>
#include <string>
#include <vector>

#include "mdmvar/rng.hpp"
#include "mdmvar/variance.hpp"

namespace mdmvar {

struct GroupModel {
    int P_R = 8;
    int P_C = 8;
    double mu_R = 0.0, mu_C = 0.0;
    double sigma2_R = 1.0, sigma2_C = 0.0;
    double rho_RR = 0.0, rho_CC = 0.0, rho_RC = 0.0;

    /// Smallest eigenvalue of the implied (P_R + P_C) covariance matrix.
    [[nodiscard]] double min_eigenvalue() const;
    /// Throws ValidationError unless counts are positive, variances nonnegative,
    /// the covariance is PSD and |rho_RC| <= sqrt(rho_RR rho_CC).
    void validate() const;
    /// Full covariance, R tokens first.
    [[nodiscard]] std::vector<double> covariance() const;
    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] static GroupModel from_json(const std::string& text);
};

enum class SyrmStrategy { resp, syrm };

/// Closed form: Σσ²/(P² t) + (1-t) Σμ²/(P² t) + 2 Σ_{i<j} ρ_ij / P².
[[nodiscard]] double batch_loss_variance(const GroupModel& gm, SyrmStrategy strategy, double t);

/// Masking rate distribution U[lo, hi]; lo > 0 keeps E[1/t] finite.
struct TDist {
    double lo = 0.05;
    double hi = 1.0;

    [[nodiscard]] double mean_inv() const;          ///< E[1/t]
    [[nodiscard]] double mean_one_minus_over() const;  ///< E[(1-t)/t]
    [[nodiscard]] double draw(RngStream& rng) const;
};

/// A(S) = E_t Var[L | t] by Gauss-Legendre quadrature over t.
[[nodiscard]] double mask_noise_quadrature(const GroupModel& gm, SyrmStrategy strategy, const TDist& dist);
/// Same quantity from the E[1/t] closed form.
[[nodiscard]] double mask_noise_closed_form(const GroupModel& gm, SyrmStrategy strategy, const TDist& dist);

/// Monte Carlo of L with Gaussian Y drawn from the model covariance.
struct BatchLossSimulator {
    explicit BatchLossSimulator(GroupModel gm);

    struct Draw {
        double L_syrm = 0.0;
        double L_resp = 0.0;
        double L_coord = 0.0;  ///< (1/(P_C t)) Σ_C M_i Y_i
        double alpha = 0.0;    ///< P_R / (P_R + P_C)
    };
    /// One realization of (M, Y) evaluated under all three losses.
    [[nodiscard]] Draw draw(double t, RngStream& rng) const;
    [[nodiscard]] RunningStats simulate(SyrmStrategy strategy, double t, int draws, const RngStream& stream) const;
    /// t drawn from `dist` per sample.
    [[nodiscard]] RunningStats simulate(SyrmStrategy strategy, const TDist& dist, int draws,
                                        const RngStream& stream) const;

private:
    GroupModel gm_;
    std::vector<double> chol_;  // lower triangular, row-major
    int P_ = 0;
};

struct DominanceOptions {
    /// "much smaller than" read as ratio <= threshold
    double threshold = 0.5;
    TDist dist;
};

struct DominanceResult {
    bool assumptions_ok = false;
    /// Names of violated assumptions (counts, psd, syntax_noise, syntax_correlation, cross_correlation, margin); empty when assumptions_ok.
    std::vector<std::string> violations;
    bool holds = false;  ///< meaningful only when assumptions_ok
    double A_syrm = 0.0;
    double A_resp = 0.0;
    double alpha = 0.0, beta = 0.0, w_R = 0.0, B = 0.0;
    double margin_lhs = 0.0, margin_rhs = 0.0;

    [[nodiscard]] std::string to_json() const;
};

[[nodiscard]] DominanceResult check_syrm_dominance(const GroupModel& gm, const DominanceOptions& opts = {});

/// Random candidate model; callers filter with check_syrm_dominance.
[[nodiscard]] GroupModel random_group_model(RngStream& rng);

/// ((1 - alpha) / lambda_min) * grad_coord_norm. Throws ValidationError for lambda_min <= 0.
[[nodiscard]] double optimum_shift_bound(double alpha, double lambda_min, double grad_coord_norm);

using Mat2 = std::array<double, 4>;  // row-major symmetric
using Vec2 = std::array<double, 2>;

/// J(θ) = 1/2 (θ - center)^T H (θ - center).
struct Quadratic2 {
    Mat2 H{1, 0, 0, 1};
    Vec2 center{0, 0};
};

struct ShiftCheck {
    double exact_shift = 0.0;
    double bound = 0.0;
    double lambda_min = 0.0;
    double grad_coord_norm = 0.0;
    Vec2 theta_resp{};
    Vec2 theta_syrm{};
};

/// Exact minimizers of J_resp and alpha J_resp + (1 - alpha) J_coord versus the bound.
[[nodiscard]] ShiftCheck quadratic_shift(const Quadratic2& resp, const Quadratic2& coord, double alpha);

}  // namespace mdmvar
