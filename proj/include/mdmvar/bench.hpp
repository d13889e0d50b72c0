#pragma once

// Side-by-side comparison of t-samplers on a (g, v) pair: the analytic
// estimator variance next to a Monte Carlo measurement.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mdmvar/density.hpp"
#include "mdmvar/epr.hpp"
#include "mdmvar/ppots.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

struct GVPair {
    std::string name;
    ScalarFn g;
    ScalarFn v;
};

/// Presets: const (g=1, v=0), linear (g=t, v=0), exp (g=e^t, v=0.1),
/// tail (g=exp(3t^2), v=0.5(1-t)^2), bump (g=1+sin(pi t), v=0.2t).
[[nodiscard]] GVPair analytic_gv(const std::string& name);
[[nodiscard]] std::vector<std::string> analytic_gv_names();

/// Piecewise-linear interpolation of a scatter's g_hat and v_hat (v clamped at 0).
[[nodiscard]] GVPair scatter_gv(const Scatter& scatter);

struct BenchRow {
    std::string sampler;
    std::optional<double> analytic;  ///< ∫(g²+v)/p - (∫g)² when (g, v) is analytic
    double mc_mean = 0.0;
    double mc_variance = 0.0;
    double mc_stderr = 0.0;  ///< stderr of mc_variance
    double weight_mean = 0.0;
    double weight_stderr = 0.0;
};

struct BenchOptions {
    int draws = 100000;
    int pstar_bins = 10;
    bool analytic = true;
};

/// Rows: uniform, pstar_binned (bin-averaged optimum), pstar (continuous
/// optimum), and epr when a fit is supplied. Each draw takes t ~ p, z ~ N(0, 1)
/// and records w(t) (g(t) + sqrt(v(t)) z) with w = 1/p(t).
[[nodiscard]] std::vector<BenchRow> bench_samplers(const GVPair& gv, const std::optional<EPRParams>& epr,
                                                   const RngStream& stream, const BenchOptions& opts = {});

/// sampler,analytic_variance,mc_mean,mc_variance,mc_stderr,weight_mean,weight_stderr
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace mdmvar
