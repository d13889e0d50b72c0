#include "mdmvar/tsampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mdmvar/error.hpp"

namespace mdmvar {

namespace {

double draw_positive(RngStream& rng, double lo, double hi) {
    for (;;) {
        const double t = rng.uniform(lo, hi);
        if (t >= kMinT) return t;
    }
}

double parse_double(std::string_view s, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(std::string(s), &used);
        if (used != s.size()) throw ValidationError(what);
        return v;
    } catch (const std::logic_error&) {
        throw ValidationError(what);
    }
}

}  // namespace

std::vector<WeightedT> sample_uniform(int n, RngStream& rng) {
    require(n >= 1, "sample_uniform: n must be >= 1");
    std::vector<WeightedT> out(n);
    for (auto& w : out) w = {draw_positive(rng, 0.0, 1.0), 1.0};
    return out;
}

std::vector<WeightedT> sample_clipped(int n, double beta, double omega, RngStream& rng) {
    require(n >= 1, "sample_clipped: n must be >= 1");
    require(0.0 <= beta && beta < omega && omega <= 1.0, "sample_clipped: need 0 <= beta < omega <= 1");
    require(omega > kMinT, "sample_clipped: interval lies below the minimum rate");
    std::vector<WeightedT> out(n);
    for (auto& w : out) w = {draw_positive(rng, beta, omega), 1.0};
    return out;
}

int default_strata(int n) {
    require(n >= 1, "default_strata: n must be >= 1");
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
}

std::vector<WeightedT> sample_stratified(int n, int k, RngStream& rng) {
    require(k >= 1, "sample_stratified: k must be >= 1");
    require(k <= n, "sample_stratified: k must not exceed n");
    std::vector<int> per_stratum(k, n / k);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (int j = 0; j < n % k; ++j) ++per_stratum[order[j]];

    std::vector<WeightedT> out;
    out.reserve(n);
    for (int j = 0; j < k; ++j) {
        const double lo = static_cast<double>(j) / k;
        const double hi = static_cast<double>(j + 1) / k;
        for (int c = 0; c < per_stratum[j]; ++c) out.push_back({draw_positive(rng, lo, hi), 1.0});
    }
    shuffle(out, rng);
    return out;
}

DensitySampler DensitySampler::from_function(const ScalarFn& f) { return DensitySampler(TabulatedDensity(f)); }

DensitySampler DensitySampler::from_epr(const EPRParams& params) {
    params.validate();
    try {
        return from_function([params](double t) { return params.shape(t); });
    } catch (const ValidationError&) {
        throw ValidationError("EPR parameters give a non-normalizable density");
    }
}

WeightedT DensitySampler::draw(RngStream& rng) const {
    for (;;) {
        const double t = density_.quantile(rng.uniform());
        if (t < kMinT) continue;
        return {t, 1.0 / density_.pdf(t)};
    }
}

std::vector<WeightedT> DensitySampler::sample(int n, RngStream& rng) const {
    require(n >= 1, "density sampler: n must be >= 1");
    std::vector<WeightedT> out(n);
    for (auto& w : out) w = draw(rng);
    return out;
}

std::vector<WeightedT> sample_epr(int n, const EPRParams& params, RngStream& rng) {
    return DensitySampler::from_epr(params).sample(n, rng);
}

double estimator_variance(const PiecewiseDensity& density, const ScalarFn& g, const ScalarFn& v) {
    density.validate();
    const int panels = std::max(1, (4096 / 8 + density.bins() - 1) / density.bins());
    double second = 0.0;
    double mean = 0.0;
    for (int k = 0; k < density.bins(); ++k) {
        const double lo = density.edges[k];
        const double hi = density.edges[k + 1];
        const double m2 = integrate([&](double t) { const double gt = g(t); return gt * gt + v(t); },
                                    lo, hi, panels);
        mean += integrate(g, lo, hi, panels);
        const double p = density.probs[k] / density.width(k);
        if (p <= 0.0) {
            require(m2 <= 0.0, "estimator_variance: density vanishes where g^2 + v > 0");
            continue;
        }
        second += m2 / p;
    }
    return second - mean * mean;
}

double estimator_variance(const ScalarFn& density, const ScalarFn& g, const ScalarFn& v) {
    constexpr int panels = 4096;
    const double mean = integrate(g, panels);
    const double second = integrate(
        [&](double t) {
            const double gt = g(t);
            const double m2 = gt * gt + v(t);
            const double p = density(t);
            if (p <= 0.0) {
                require(m2 <= 0.0, "estimator_variance: density vanishes where g^2 + v > 0");
                return 0.0;
            }
            return m2 / p;
        },
        panels);
    return second - mean * mean;
}

PiecewiseDensity bin_averaged_optimal(const ScalarFn& g, const ScalarFn& v, int bins) {
    require(bins >= 1, "bin_averaged_optimal: bins must be >= 1");
    std::vector<double> mass(bins);
    for (int k = 0; k < bins; ++k) {
        mass[k] = integrate([&](double t) { const double gt = g(t); return std::sqrt(gt * gt + v(t)); },
                            static_cast<double>(k) / bins, static_cast<double>(k + 1) / bins, 64);
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    require(total > 0.0, "bin_averaged_optimal: sqrt(g^2 + v) integrates to zero");
    for (double& m : mass) m /= total;
    // Renormalize once more so the masses sum to 1 within rounding.
    const double again = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (double& m : mass) m /= again;
    return PiecewiseDensity::equal_bins(std::move(mass));
}

std::string TSamplerSpec::str() const {
    std::ostringstream ss;
    ss.precision(17);
    switch (kind) {
        case Kind::uniform: ss << "uniform"; break;
        case Kind::clipped: ss << "clipped:" << beta << ':' << omega; break;
        case Kind::stratified:
            ss << "strata";
            if (strata > 0) ss << ':' << strata;
            break;
        case Kind::epr: ss << "epr:" << epr_path; break;
    }
    return ss.str();
}

TSamplerSpec parse_tsampler(std::string_view spec) {
    TSamplerSpec s;
    const auto colon = spec.find(':');
    const std::string_view head = spec.substr(0, colon);
    const std::string_view rest = colon == std::string_view::npos ? "" : spec.substr(colon + 1);
    if (head == "uniform" && rest.empty()) {
        s.kind = TSamplerSpec::Kind::uniform;
    } else if (head == "clipped") {
        s.kind = TSamplerSpec::Kind::clipped;
        const auto c2 = rest.find(':');
        require(c2 != std::string_view::npos, "tsampler: clipped needs clipped:beta:omega");
        s.beta = parse_double(rest.substr(0, c2), "tsampler: bad clipped beta");
        s.omega = parse_double(rest.substr(c2 + 1), "tsampler: bad clipped omega");
        require(0.0 <= s.beta && s.beta < s.omega && s.omega <= 1.0,
                "tsampler: clipped interval needs 0 <= beta < omega <= 1");
    } else if (head == "strata") {
        s.kind = TSamplerSpec::Kind::stratified;
        if (!rest.empty()) {
            const double k = parse_double(rest, "tsampler: bad strata count");
            require(k >= 1 && k == std::floor(k), "tsampler: strata count must be a positive integer");
            s.strata = static_cast<int>(k);
        }
    } else if (head == "epr") {
        s.kind = TSamplerSpec::Kind::epr;
        require(!rest.empty(), "tsampler: epr needs a fit path");
        s.epr_path = std::string(rest);
    } else {
        throw ValidationError("unknown tsampler: " + std::string(spec));
    }
    return s;
}

TSampler::TSampler(TSamplerSpec spec, std::shared_ptr<const DensitySampler> density)
    : spec_(std::move(spec)), density_(std::move(density)) {
    require(spec_.kind != TSamplerSpec::Kind::epr || density_ != nullptr,
            "tsampler: epr sampler needs a loaded fit");
}

std::vector<WeightedT> TSampler::sample_batch(int n, RngStream& rng) const {
    switch (spec_.kind) {
        case TSamplerSpec::Kind::uniform: return sample_uniform(n, rng);
        case TSamplerSpec::Kind::clipped: return sample_clipped(n, spec_.beta, spec_.omega, rng);
        case TSamplerSpec::Kind::stratified: {
            const int k = spec_.strata > 0 ? std::min(spec_.strata, n) : default_strata(n);
            return sample_stratified(n, k, rng);
        }
        case TSamplerSpec::Kind::epr: return density_->sample(n, rng);
    }
    return {};
}

}  // namespace mdmvar
