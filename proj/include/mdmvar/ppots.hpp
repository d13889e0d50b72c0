#pragma once

// Fitting the optimal masking-rate sampler p*(t) ∝ sqrt(g(t)^2 + v(t)).
//
// estimate_scatter measures g and v on a grid of rates; fit_epr fits the EPR
// family to the normalized scatter by minimizing KL(p_hat || p_EPR) on the grid.

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mdmvar/corpus.hpp"
#include "mdmvar/denoiser.hpp"
#include "mdmvar/density.hpp"
#include "mdmvar/epr.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

struct ScatterPoint {
    double t = 0.0;
    double g_hat = 0.0;
    double v_hat = 0.0;
    double p_hat = 0.0;
};

using Scatter = std::vector<ScatterPoint>;

struct ScatterSizes {
    int a = 15;  ///< clean sequences
    int b = 70;  ///< masking-rate grid points
    int c = 15;  ///< masks per (sequence, rate)
};

/// Loss of sequence i at rate t with masks drawn from `mask_stream`.
using CellLoss = std::function<double(int i, double t, const RngStream& mask_stream)>;

/// Standard-masked denoiser loss over corpus[i] with the given eligibility.
[[nodiscard]] CellLoss denoiser_cell_loss(const DenoiserParams& params, const Corpus& corpus,
                                          EligibilityMode mode);

/// t_j = (j + 1/2)/b. Cell (i, j, k) draws its mask from
/// stream.derive("x0", i).derive("t", j).derive("mask", k).
[[nodiscard]] Scatter estimate_scatter(const CellLoss& loss, int num_sequences, const ScatterSizes& sizes,
                                       const RngStream& stream, int threads = 1);

[[nodiscard]] Scatter estimate_scatter(const DenoiserParams& params, const Corpus& corpus,
                                       const ScatterSizes& sizes, const RngStream& stream,
                                       EligibilityMode mode = EligibilityMode::sft, int threads = 1);

/// Scatter with p_hat_j ∝ shape(t_j) (g and v taken from the EPR components).
[[nodiscard]] Scatter scatter_from_epr(const EPRParams& params, int b);

/// Renormalizes p_hat to sum to one.
void normalize_scatter(Scatter& scatter);

/// EPR density normalized over the scatter's grid points.
[[nodiscard]] std::vector<double> epr_grid_probs(const EPRParams& params, const Scatter& scatter);

/// Σ p_hat log(p_hat / q) over the grid, skipping p_hat = 0 terms.
[[nodiscard]] double grid_kl(const Scatter& scatter, const std::vector<double>& q);

struct EprFit {
    EPRParams params;
    double kl = 0.0;
    /// Set when the scatter was flat and the constant fit was returned directly.
    bool degenerate = false;
};

struct EprFitOptions {
    int restarts = 20;
    int max_evals = 6000;
    /// Extra simplex restarts from the incumbent after the random phase.
    int polish_rounds = 4;
};

/// Best-of-`restarts` simplex fit of KL(p_hat || p_EPR) in the unconstrained
/// parameterization (log a, log b, log A, log kappa, softplus^-1 r,
/// softplus^-1 q, softplus^-1 (m - 1)).
[[nodiscard]] EprFit fit_epr(const Scatter& scatter, const RngStream& stream, const EprFitOptions& opts = {});

/// Unconstrained coordinates <-> EPRParams.
[[nodiscard]] std::vector<double> epr_to_unconstrained(const EPRParams& p);
[[nodiscard]] EPRParams epr_from_unconstrained(std::span<const double> u);

struct PolynomialFit {
    /// Coefficients in powers of x = 2t - 1, lowest first.
    std::vector<double> coeffs;
    TabulatedDensity density;

    [[nodiscard]] double eval(double t) const noexcept;
};

/// Least-squares polynomial through (t_j, p_hat_j), clamped at a small
/// positive floor and renormalized into a density on [0, 1].
[[nodiscard]] PolynomialFit fit_polynomial(const Scatter& scatter, int degree = 7);

/// Fit artifact: {params, kl, degenerate, scatter: [{t, g, v, p}], grid_size}.
void save_fit(const std::filesystem::path& path, const EprFit& fit, const Scatter& scatter);

struct LoadedFit {
    EprFit fit;
    Scatter scatter;
    int grid_size = 0;
};
[[nodiscard]] LoadedFit load_fit(const std::filesystem::path& path);

}  // namespace mdmvar
