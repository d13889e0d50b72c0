#pragma once

#include <functional>
#include <span>
#include <vector>

namespace mdmvar {

struct NelderMeadOptions {
    int max_evals = 20000;
    /// Stop when the spread of simplex values drops below this.
    double ftol = 1e-15;
    /// ... and the simplex diameter drops below this.
    double xtol = 1e-10;
    double initial_step = 0.5;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evals = 0;
    bool converged = false;
};

using Objective = std::function<double(std::span<const double>)>;

/// Downhill simplex with dimension-adaptive coefficients (Gao & Han 2012).
/// Non-finite objective values are treated as +infinity.
[[nodiscard]] NelderMeadResult nelder_mead(const Objective& f, std::vector<double> start,
                                           const NelderMeadOptions& opts = {});

}  // namespace mdmvar
