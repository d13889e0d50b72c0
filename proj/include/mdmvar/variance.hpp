#pragma once

// Loss-variance measurement: the three-way decomposition into masking-pattern
// (A), masking-rate (B) and data (C) noise, the online importance-weighted
// variance accumulator used during training, and the bin-wise EMA control
// variate.

#include <cstdint>
#include <string>
#include <vector>

#include "mdmvar/corpus.hpp"
#include "mdmvar/denoiser.hpp"
#include "mdmvar/ppots.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

/// Welford accumulator with the fourth central moment for variance stderrs.
class RunningStats {
public:
    void add(double x) noexcept;
    [[nodiscard]] std::int64_t count() const noexcept { return n_; }
    [[nodiscard]] double mean() const noexcept { return mean_; }
    /// Bessel-corrected.
    [[nodiscard]] double variance() const noexcept;
    [[nodiscard]] double stderr_mean() const noexcept;
    /// Large-sample stderr of variance(): sqrt((m4 - s^4) / n).
    [[nodiscard]] double stderr_variance() const noexcept;

private:
    std::int64_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0, m3_ = 0.0, m4_ = 0.0;
};

/// Paired statistics of (x, y) samples.
class PairStats {
public:
    void add(double x, double y) noexcept;
    [[nodiscard]] std::int64_t count() const noexcept { return n_; }
    [[nodiscard]] double var_x() const noexcept;
    [[nodiscard]] double var_y() const noexcept;
    [[nodiscard]] double covariance() const noexcept;
    [[nodiscard]] double correlation() const noexcept;
    /// Adds the centered cross-products of another group without mixing means
    /// (pooled within-group statistics).
    void pool(const PairStats& group) noexcept;

private:
    std::int64_t n_ = 0;
    std::int64_t dof_ = 0;
    double mx_ = 0.0, my_ = 0.0, sxx_ = 0.0, syy_ = 0.0, sxy_ = 0.0;
    bool pooled_ = false;
};

struct VarianceReport {
    double comp_A = 0.0;  ///< E[Var(l | x0, t)], masking pattern
    double comp_B = 0.0;  ///< E[Var_t(g(x0, t) | x0)], masking rate
    double comp_C = 0.0;  ///< Var(E_t[g(x0, t)]), data
    double total = 0.0;
    double stderr_A = 0.0, stderr_B = 0.0, stderr_C = 0.0, stderr_total = 0.0;
    int a = 0, b = 0, c = 0;

    [[nodiscard]] double combined_stderr() const noexcept;
    [[nodiscard]] std::string to_json() const;
};

/// How the b masking rates per sequence are drawn.
enum class RateDesign {
    iid,         ///< independent U[0, 1]
    stratified,  ///< one draw per stratum [j/b, (j+1)/b)
};

/// Nested Monte Carlo over a sequences x b rates x c masks with
/// inner-noise bias corrections for B and C and delete-one-sequence jackknife
/// standard errors. Rate j of sequence i comes from
/// stream.derive("x0", i).derive("t", j); mask k from .derive("mask", k).
[[nodiscard]] VarianceReport decompose(const CellLoss& loss, int num_sequences, int a, int b, int c,
                                       const RngStream& stream, RateDesign design = RateDesign::stratified,
                                       int threads = 1);

[[nodiscard]] VarianceReport decompose(const DenoiserParams& params, const Corpus& corpus, int a, int b,
                                       int c, const RngStream& stream,
                                       EligibilityMode mode = EligibilityMode::sft,
                                       RateDesign design = RateDesign::stratified, int threads = 1);

/// Three running sums of (loss, weight) pairs:
///   S1 = Σ w l,  S2 = Σ w l^2,  S12 = Σ (w l)^2
/// finalized as Var = S2/n - (S1^2 - S12) / (n (n - 1)).
struct OnlineVarAccumulator {
    double s1 = 0.0;
    double s2 = 0.0;
    double s12 = 0.0;
    std::int64_t n = 0;

    /// Throws ValidationError for weight <= 0.
    void update(double loss, double weight);
    void merge(const OnlineVarAccumulator& other) noexcept;
    /// Throws ValidationError when n < 2.
    [[nodiscard]] double variance() const;
    [[nodiscard]] double mean() const noexcept { return n ? s1 / static_cast<double>(n) : 0.0; }
};

[[nodiscard]] OnlineVarAccumulator online_update(OnlineVarAccumulator acc, double loss, double weight);

/// Per-bin statistics of the EMA control variate. Bin j covers ((j-1)/m, j/m].
class EmaBinState {
public:
    explicit EmaBinState(int bins = 10, double eta = 0.01, double eps = 1e-8);

    [[nodiscard]] int bins() const noexcept { return m_; }
    [[nodiscard]] double eta() const noexcept { return eta_; }
    /// Throws ValidationError for t outside (0, 1].
    [[nodiscard]] int bin_of(double t) const;

    /// (M_LH - mu_L mu_H) / (M_HH - mu_H^2 + eps) for the bin of t.
    [[nodiscard]] double coefficient(double t) const;
    [[nodiscard]] double baseline(double t) const;
    /// loss - c_j * b_j, without touching the state.
    [[nodiscard]] double adjust(double t, double loss) const;
    /// Updates mu_L, mu_H, M_LH, M_HH and then the baseline of t's bin.
    void update(double t, double loss);

    struct Bin {
        double mu_L = 0.0, mu_H = 0.0, M_LH = 0.0, M_HH = 0.0, baseline = 0.0;
    };
    [[nodiscard]] const Bin& bin(int j) const { return state_.at(j); }

private:
    int m_;
    double eta_;
    double eps_;
    std::vector<Bin> state_;
};

/// adjusted = loss - c_j * b_j, then the bin state update. The baseline term
/// is a constant with respect to the model, so gradients are those of `loss`.
double ema_adjust(EmaBinState& state, double t, double loss);

/// m = round(0.1 * eta * train_size / batch_per_worker), clamped to [2, 64].
[[nodiscard]] int suggest_bins(std::int64_t train_size, int batch_per_worker, double eta);

}  // namespace mdmvar
