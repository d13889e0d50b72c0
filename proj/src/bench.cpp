#include "mdmvar/bench.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "mdmvar/error.hpp"
#include "mdmvar/report.hpp"
#include "mdmvar/tsampler.hpp"
#include "mdmvar/variance.hpp"

namespace mdmvar {

GVPair analytic_gv(const std::string& name) {
    if (name == "const") return {name, [](double) { return 1.0; }, [](double) { return 0.0; }};
    if (name == "linear") return {name, [](double t) { return t; }, [](double) { return 0.0; }};
    if (name == "exp") return {name, [](double t) { return std::exp(t); }, [](double) { return 0.1; }};
    if (name == "tail") {
        return {name, [](double t) { return std::exp(3 * t * t); }, [](double t) { return 0.5 * (1 - t) * (1 - t); }};
    }
    if (name == "bump") {
        return {name, [](double t) { return 1 + std::sin(std::numbers::pi * t); }, [](double t) { return 0.2 * t; }};
    }
    throw ValidationError("unknown (g, v) preset '" + name + "'");
}

std::vector<std::string> analytic_gv_names() { return {"const", "linear", "exp", "tail", "bump"}; }

GVPair scatter_gv(const Scatter& scatter) {
    require(!scatter.empty(), "scatter_gv: empty scatter");
    auto interp = [scatter](double t, bool want_g) {
        auto val = [&](const ScatterPoint& p) { return want_g ? p.g_hat : std::max(0.0, p.v_hat); };
        if (t <= scatter.front().t) return val(scatter.front());
        if (t >= scatter.back().t) return val(scatter.back());
        const auto it = std::upper_bound(scatter.begin(), scatter.end(), t,
                                         [](double x, const ScatterPoint& p) { return x < p.t; });
        const ScatterPoint& hi = *it;
        const ScatterPoint& lo = *(it - 1);
        const double f = (t - lo.t) / (hi.t - lo.t);
        return (1 - f) * val(lo) + f * val(hi);
    };
    return {"scatter", [interp](double t) { return interp(t, true); }, [interp](double t) { return interp(t, false); }};
}

namespace {

template <typename Draw>
BenchRow measure(const std::string& name, const GVPair& gv, int draws, RngStream rng, Draw&& draw) {
    RunningStats est, weight;
    for (int k = 0; k < draws; ++k) {
        const WeightedT wt = draw(rng);
        const double z = rng.normal();
        est.add(wt.weight * (gv.g(wt.t) + std::sqrt(std::max(0.0, gv.v(wt.t))) * z));
        weight.add(wt.weight);
    }
    BenchRow row;
    row.sampler = name;
    row.mc_mean = est.mean();
    row.mc_variance = est.variance();
    row.mc_stderr = est.stderr_variance();
    row.weight_mean = weight.mean();
    row.weight_stderr = weight.stderr_mean();
    return row;
}

}  // namespace

std::vector<BenchRow> bench_samplers(const GVPair& gv, const std::optional<EPRParams>& epr, const RngStream& stream,
                                     const BenchOptions& opts) {
    require(opts.draws >= 2, "bench_samplers: need at least two draws");
    require(opts.pstar_bins >= 1, "bench_samplers: need at least one bin");
    std::vector<BenchRow> rows;

    const PiecewiseDensity uni = PiecewiseDensity::uniform(1);
    rows.push_back(measure("uniform", gv, opts.draws, stream.derive("sampler", 0), [&](RngStream& r) {
        return WeightedT{uni.sample(r), 1.0};
    }));
    if (opts.analytic) rows.back().analytic = estimator_variance(uni, gv.g, gv.v);

    const PiecewiseDensity binned = bin_averaged_optimal(gv.g, gv.v, opts.pstar_bins);
    rows.push_back(measure("pstar_binned", gv, opts.draws, stream.derive("sampler", 1), [&](RngStream& r) {
        const double t = binned.sample(r);
        return WeightedT{t, 1.0 / binned.pdf(t)};
    }));
    if (opts.analytic) rows.back().analytic = estimator_variance(binned, gv.g, gv.v);

    const auto pstar = std::make_shared<DensitySampler>(DensitySampler::from_function(
        [&](double t) { return std::sqrt(gv.g(t) * gv.g(t) + std::max(0.0, gv.v(t))); }));
    rows.push_back(measure("pstar", gv, opts.draws, stream.derive("sampler", 2),
                           [&](RngStream& r) { return pstar->draw(r); }));
    if (opts.analytic) {
        rows.back().analytic = estimator_variance([&](double t) { return pstar->density().pdf(t); }, gv.g, gv.v);
    }

    if (epr) {
        const DensitySampler es = DensitySampler::from_epr(*epr);
        rows.push_back(measure("epr", gv, opts.draws, stream.derive("sampler", 3),
                               [&](RngStream& r) { return es.draw(r); }));
        if (opts.analytic) {
            rows.back().analytic = estimator_variance([&](double t) { return es.density().pdf(t); }, gv.g, gv.v);
        }
    }
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "sampler,analytic_variance,mc_mean,mc_variance,mc_stderr,weight_mean,weight_stderr\n";
    for (const auto& r : rows) {
        out << r.sampler << ',' << (r.analytic ? fmt17(*r.analytic) : std::string()) << ',' << fmt17(r.mc_mean) << ','
            << fmt17(r.mc_variance) << ',' << fmt17(r.mc_stderr) << ',' << fmt17(r.weight_mean) << ','
            << fmt17(r.weight_stderr) << '\n';
    }
}

}  // namespace mdmvar
