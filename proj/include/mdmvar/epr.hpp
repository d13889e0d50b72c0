#pragma once

// Seven-parameter Exponential-Polynomial Root density shape
//   p(t) ∝ sqrt(a t^r + b (1-t)^q + A^2 exp(2 kappa t^m))
// with mean component g(t) = A exp(kappa t^m) and variance component
// v(t) = a t^r + b (1-t)^q.

#include <array>
#include <cmath>

namespace mdmvar {

struct EPRParams {
    double a = 1.0;
    double b = 1.0;
    double A = 1.0;
    double kappa = 1.0;
    double r = 1.0;
    double q = 1.0;
    double m = 2.0;

    /// a, b, A, kappa > 0; r, q >= 0; m > 1; all finite.
    [[nodiscard]] bool valid() const noexcept;
    /// Throws ValidationError when !valid().
    void validate() const;

    [[nodiscard]] double g(double t) const noexcept { return A * std::exp(kappa * std::pow(t, m)); }
    [[nodiscard]] double v(double t) const noexcept {
        return a * std::pow(t, r) + b * std::pow(1.0 - t, q);
    }
    /// Unnormalized sqrt(g^2 + v).
    [[nodiscard]] double shape(double t) const noexcept;

    [[nodiscard]] std::array<double, 7> as_array() const noexcept { return {a, b, A, kappa, r, q, m}; }
};

}  // namespace mdmvar
