#pragma once

// Masking-rate samplers. Every sampler returns t in [kMinT, 1] paired with
// its importance weight 1/p(t); draws below kMinT are redrawn because the
// loss normalizer divides by t.

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mdmvar/density.hpp"
#include "mdmvar/epr.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

inline constexpr double kMinT = 1e-6;

struct WeightedT {
    double t = 1.0;
    double weight = 1.0;
};

[[nodiscard]] std::vector<WeightedT> sample_uniform(int n, RngStream& rng);

/// U[beta, omega] with unit weights. Deliberately not reweighted: this is the
/// clipped-schedule baseline, biased with respect to the uniform objective.
[[nodiscard]] std::vector<WeightedT> sample_clipped(int n, double beta, double omega, RngStream& rng);

/// floor(n/k) draws per stratum [j/k, (j+1)/k); the n mod k leftovers go to
/// distinct random strata; the list is returned in random order.
[[nodiscard]] std::vector<WeightedT> sample_stratified(int n, int k, RngStream& rng);

/// ceil(sqrt(n)).
[[nodiscard]] int default_strata(int n);

/// Importance sampler over a tabulated density; weight = 1/pdf(t).
class DensitySampler {
public:
    explicit DensitySampler(TabulatedDensity density) : density_(std::move(density)) {}
    static DensitySampler from_function(const ScalarFn& f);
    static DensitySampler from_epr(const EPRParams& params);

    [[nodiscard]] WeightedT draw(RngStream& rng) const;
    [[nodiscard]] std::vector<WeightedT> sample(int n, RngStream& rng) const;
    [[nodiscard]] const TabulatedDensity& density() const noexcept { return density_; }

private:
    TabulatedDensity density_;
};

/// Inverse-CDF draws from the normalized EPR density (4096-point table,
/// floored at 1e-4 of its mean).
[[nodiscard]] std::vector<WeightedT> sample_epr(int n, const EPRParams& params, RngStream& rng);

/// ∫ (g^2 + v)/p dt - (∫ g dt)^2, integrated bin by bin with Gauss-Legendre
/// panels (at least 4096 nodes in total). Throws ValidationError when p is zero
/// on a bin where g^2 + v is not.
[[nodiscard]] double estimator_variance(const PiecewiseDensity& density, const ScalarFn& g,
                                        const ScalarFn& v);

/// Same objective for a smooth density given as a function.
[[nodiscard]] double estimator_variance(const ScalarFn& density, const ScalarFn& g, const ScalarFn& v);

/// Optimal sampler shape sqrt(g^2 + v) averaged over each of `bins` equal bins.
[[nodiscard]] PiecewiseDensity bin_averaged_optimal(const ScalarFn& g, const ScalarFn& v, int bins);

/// Parsed `tsampler = uniform|clipped:b:w|strata:k|epr:<path>` config value.
struct TSamplerSpec {
    enum class Kind { uniform, clipped, stratified, epr } kind = Kind::uniform;
    double beta = 0.0;
    double omega = 1.0;
    int strata = 0;  // 0 selects ceil(sqrt(batch))
    std::string epr_path;

    [[nodiscard]] std::string str() const;
};

[[nodiscard]] TSamplerSpec parse_tsampler(std::string_view spec);

/// A configured sampler drawing one batch at a time.
class TSampler {
public:
    TSampler(TSamplerSpec spec, std::shared_ptr<const DensitySampler> density = nullptr);
    [[nodiscard]] std::vector<WeightedT> sample_batch(int n, RngStream& rng) const;
    [[nodiscard]] const TSamplerSpec& spec() const noexcept { return spec_; }

private:
    TSamplerSpec spec_;
    std::shared_ptr<const DensitySampler> density_;
};

}  // namespace mdmvar
