#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdmvar/rng.hpp"

namespace mdmvar {

using ScalarFn = std::function<double(double)>;

/// Piecewise-constant density on [0, 1]: bin k spans [edges[k], edges[k+1]) and
/// carries probability mass probs[k].
struct PiecewiseDensity {
    std::vector<double> edges;
    std::vector<double> probs;

    /// Equal-width bins.
    static PiecewiseDensity uniform(int bins);
    static PiecewiseDensity equal_bins(std::vector<double> probs);

    [[nodiscard]] int bins() const noexcept { return static_cast<int>(probs.size()); }
    [[nodiscard]] double width(int k) const noexcept { return edges[k + 1] - edges[k]; }
    [[nodiscard]] double pdf(double t) const noexcept;
    /// Sorted edges from 0 to 1, nonempty bins, masses >= 0 summing to 1 within 1e-12.
    void validate() const;

    /// Inverse-CDF draw in [0, 1).
    [[nodiscard]] double sample(RngStream& rng) const;
};

/// A density on [0, 1] tabulated at `grid` equally spaced nodes, linearly
/// interpolated between them, floored at `floor_ratio` times its mean and
/// renormalized. Sampling inverts the exact piecewise-quadratic CDF, so
/// 1/pdf(t) is the exact importance weight of a draw.
class TabulatedDensity {
public:
    static constexpr int kDefaultGrid = 4096;
    static constexpr double kDefaultFloor = 1e-4;

    TabulatedDensity() = default;
    /// Throws ValidationError when f is negative, non-finite, or integrates to zero.
    explicit TabulatedDensity(const ScalarFn& f, int grid = kDefaultGrid,
                              double floor_ratio = kDefaultFloor);

    [[nodiscard]] double pdf(double t) const noexcept;
    [[nodiscard]] double cdf(double t) const noexcept;
    [[nodiscard]] double quantile(double u) const noexcept;
    [[nodiscard]] int grid() const noexcept { return static_cast<int>(nodes_.size()); }
    [[nodiscard]] std::span<const double> node_values() const noexcept { return nodes_; }
    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }

private:
    double h_ = 0.0;
    std::vector<double> nodes_;  // pdf at i*h
    std::vector<double> cum_;    // cdf at i*h
};

/// ∫_0^1 f by composite 8-point Gauss-Legendre on `panels` equal panels.
[[nodiscard]] double integrate(const ScalarFn& f, int panels = 512);
/// ∫_lo^hi f, same rule.
[[nodiscard]] double integrate(const ScalarFn& f, double lo, double hi, int panels);

}  // namespace mdmvar
