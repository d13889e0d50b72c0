#include "mdmvar/ppots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "mdmvar/error.hpp"
#include "mdmvar/masking.hpp"
#include "mdmvar/nelder_mead.hpp"
#include "mdmvar/parallel.hpp"

namespace mdmvar {

CellLoss denoiser_cell_loss(const DenoiserParams& params, const Corpus& corpus, EligibilityMode mode) {
    auto eligible = std::make_shared<std::vector<std::vector<int>>>();
    eligible->reserve(corpus.size());
    for (const auto& seq : corpus) eligible->push_back(eligibility(seq, mode));
    return [&params, &corpus, eligible](int i, double t, const RngStream& mask_stream) {
        const MaskPattern pattern = mask_standard((*eligible)[i], t, mask_stream);
        return loss_only(params, corpus[i], pattern);
    };
}

Scatter estimate_scatter(const CellLoss& loss, int num_sequences, const ScatterSizes& sizes,
                         const RngStream& stream, int threads) {
    const auto [a, b, c] = sizes;
    require(a >= 2 && c >= 2, "estimate_scatter: a and c must be >= 2");
    require(b >= 7, "estimate_scatter: b must be >= 7");
    require(num_sequences >= a, "estimate_scatter: corpus smaller than a");

    // cell (i, j): mean and Bessel variance over the c masks
    std::vector<double> cell_mean(std::size_t(a) * b), cell_var(std::size_t(a) * b);
    parallel_for(a * b, threads, [&](int idx) {
        const int i = idx / b;
        const int j = idx % b;
        const double t = (j + 0.5) / b;
        const RngStream cell = stream.derive("x0", i).derive("t", j);
        std::vector<double> l(c);
        for (int k = 0; k < c; ++k) l[k] = loss(i, t, cell.derive("mask", k));
        const double mean = std::accumulate(l.begin(), l.end(), 0.0) / c;
        double ss = 0.0;
        for (double x : l) ss += (x - mean) * (x - mean);
        cell_mean[idx] = mean;
        cell_var[idx] = ss / (c - 1);
    });

    Scatter out(b);
    for (int j = 0; j < b; ++j) {
        double g = 0.0, v = 0.0;
        for (int i = 0; i < a; ++i) {
            g += cell_mean[std::size_t(i) * b + j];
            v += cell_var[std::size_t(i) * b + j];
        }
        out[j].t = (j + 0.5) / b;
        out[j].g_hat = g / a;
        out[j].v_hat = v / a;
        out[j].p_hat = std::sqrt(out[j].g_hat * out[j].g_hat + out[j].v_hat);
    }
    normalize_scatter(out);
    return out;
}

Scatter estimate_scatter(const DenoiserParams& params, const Corpus& corpus, const ScatterSizes& sizes,
                         const RngStream& stream, EligibilityMode mode, int threads) {
    require(static_cast<int>(corpus.size()) >= sizes.a, "estimate_scatter: corpus smaller than a");
    return estimate_scatter(denoiser_cell_loss(params, corpus, mode), static_cast<int>(corpus.size()),
                            sizes, stream, threads);
}

Scatter scatter_from_epr(const EPRParams& params, int b) {
    require(b >= 1, "scatter_from_epr: b must be >= 1");
    Scatter out(b);
    for (int j = 0; j < b; ++j) {
        const double t = (j + 0.5) / b;
        out[j] = {t, params.g(t), params.v(t), params.shape(t)};
    }
    normalize_scatter(out);
    return out;
}

void normalize_scatter(Scatter& scatter) {
    double total = 0.0;
    for (const auto& p : scatter) total += p.p_hat;
    require(total > 0.0 && std::isfinite(total), "scatter has no positive mass");
    for (auto& p : scatter) p.p_hat /= total;
}

std::vector<double> epr_grid_probs(const EPRParams& params, const Scatter& scatter) {
    std::vector<double> q(scatter.size());
    double total = 0.0;
    for (std::size_t j = 0; j < scatter.size(); ++j) {
        q[j] = params.shape(scatter[j].t);
        total += q[j];
    }
    for (double& x : q) x /= total;
    return q;
}

double grid_kl(const Scatter& scatter, const std::vector<double>& q) {
    double kl = 0.0;
    for (std::size_t j = 0; j < scatter.size(); ++j) {
        const double p = scatter[j].p_hat;
        if (p <= 0.0) continue;
        if (!(q[j] > 0.0)) return std::numeric_limits<double>::infinity();
        kl += p * std::log(p / q[j]);
    }
    return kl;
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace

std::vector<double> epr_to_unconstrained(const EPRParams& p) {
    p.validate();
    // r = q = 0 sit on the boundary; nudge them into the open interior.
    const double r = std::max(p.r, 1e-12);
    const double q = std::max(p.q, 1e-12);
    return {std::log(p.a), std::log(p.b), std::log(p.A), std::log(p.kappa),
            softplus_inv(r), softplus_inv(q), softplus_inv(p.m - 1.0)};
}

EPRParams epr_from_unconstrained(std::span<const double> u) {
    require(u.size() == 7, "EPR coordinates must have 7 entries");
    return {std::exp(u[0]), std::exp(u[1]), std::exp(u[2]), std::exp(u[3]),
            softplus(u[4]), softplus(u[5]), 1.0 + softplus(u[6])};
}

EprFit fit_epr(const Scatter& scatter, const RngStream& stream, const EprFitOptions& opts) {
    require(opts.restarts >= 1, "fit_epr: restarts must be >= 1");
    require(scatter.size() >= 2, "fit_epr: scatter needs at least two points");
    double total = 0.0;
    for (const auto& p : scatter) {
        require(p.p_hat >= 0.0 && std::isfinite(p.p_hat), "fit_epr: invalid p_hat");
        total += p.p_hat;
    }
    require(std::abs(total - 1.0) <= 1e-9, "fit_epr: scatter must be normalized");

    const auto [lo, hi] = std::minmax_element(scatter.begin(), scatter.end(),
                                              [](const auto& x, const auto& y) { return x.p_hat < y.p_hat; });
    if (hi->p_hat - lo->p_hat <= 1e-12) {
        EprFit flat;
        flat.params = {1e-12, 1e-12, 1.0, 1e-12, 1.0, 1.0, 2.0};
        flat.kl = grid_kl(scatter, epr_grid_probs(flat.params, scatter));
        flat.degenerate = true;
        return flat;
    }

    auto objective = [&](std::span<const double> u) {
        const EPRParams p = epr_from_unconstrained(u);
        if (!p.valid()) return std::numeric_limits<double>::infinity();
        return grid_kl(scatter, epr_grid_probs(p, scatter));
    };

    NelderMeadOptions nm;
    nm.max_evals = opts.max_evals;
    RngStream rng = stream.derive("epr-fit", 0);
    NelderMeadResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opts.restarts; ++r) {
        std::vector<double> start = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                     rng.uniform(-3.0, 1.0), rng.uniform(-2.0, 1.5),
                                     softplus_inv(rng.uniform(0.05, 6.0)), softplus_inv(rng.uniform(0.05, 6.0)),
                                     softplus_inv(rng.uniform(0.05, 5.0))};
        NelderMeadResult res = nelder_mead(objective, std::move(start), nm);
        if (res.value < best.value) best = std::move(res);
    }
    // (a, b, A^2) -> (a, b, A^2) / A^2 leaves the normalized density unchanged;
    // pin A = 1 so the polish and the reported parameters stay well scaled
    auto pin_scale = [](std::vector<double>& u) {
        u[0] -= 2.0 * u[2];
        u[1] -= 2.0 * u[2];
        u[2] = 0.0;
    };
    pin_scale(best.x);
    for (int round = 0; round < opts.polish_rounds; ++round) {
        nm.initial_step = 0.25;
        NelderMeadResult res = nelder_mead(objective, best.x, nm);
        if (res.value < best.value) best = std::move(res);
    }
    if (!std::isfinite(best.value)) throw NumericalError("fit_epr: no finite fit found");
    pin_scale(best.x);

    EprFit fit;
    fit.params = epr_from_unconstrained(best.x);
    fit.kl = objective(best.x);
    return fit;
}

double PolynomialFit::eval(double t) const noexcept {
    const double x = 2.0 * t - 1.0;
    double y = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) y = y * x + *it;
    return y;
}

namespace {

// min ||A c - y|| for a column-major n x k design via Householder QR.
std::vector<double> least_squares(std::vector<std::vector<double>> cols, std::vector<double> y) {
    const std::size_t n = y.size();
    const std::size_t k = cols.size();
    require(n >= k, "least squares: more unknowns than points");
    for (std::size_t j = 0; j < k; ++j) {
        auto& a = cols[j];
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += a[i] * a[i];
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericalError("least squares: rank-deficient design");
        const double alpha = a[j] > 0 ? -norm : norm;
        std::vector<double> v(n, 0.0);
        for (std::size_t i = j; i < n; ++i) v[i] = a[i];
        v[j] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = j; i < n; ++i) vnorm2 += v[i] * v[i];
        auto reflect = [&](std::vector<double>& x) {
            double dot = 0.0;
            for (std::size_t i = j; i < n; ++i) dot += v[i] * x[i];
            const double s = 2.0 * dot / vnorm2;
            for (std::size_t i = j; i < n; ++i) x[i] -= s * v[i];
        };
        for (std::size_t jj = j; jj < k; ++jj) reflect(cols[jj]);
        reflect(y);
    }
    std::vector<double> c(k);
    for (std::size_t j = k; j-- > 0;) {
        double s = y[j];
        for (std::size_t jj = j + 1; jj < k; ++jj) s -= cols[jj][j] * c[jj];
        c[j] = s / cols[j][j];
    }
    return c;
}

}  // namespace

PolynomialFit fit_polynomial(const Scatter& scatter, int degree) {
    require(degree >= 0, "fit_polynomial: degree must be >= 0");
    require(static_cast<int>(scatter.size()) > degree, "fit_polynomial: too few scatter points");
    const std::size_t n = scatter.size();
    std::vector<std::vector<double>> cols(degree + 1, std::vector<double>(n));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = 2.0 * scatter[i].t - 1.0;
        double pw = 1.0;
        for (int d = 0; d <= degree; ++d) {
            cols[d][i] = pw;
            pw *= x;
        }
        y[i] = scatter[i].p_hat;
    }
    PolynomialFit fit;
    fit.coeffs = least_squares(std::move(cols), std::move(y));
    fit.density = TabulatedDensity([&fit](double t) { return std::max(fit.eval(t), 0.0); });
    return fit;
}

void save_fit(const std::filesystem::path& path, const EprFit& fit, const Scatter& scatter) {
    nlohmann::ordered_json j;
    const auto& p = fit.params;
    j["params"] = {{"a", p.a}, {"b", p.b}, {"A", p.A}, {"kappa", p.kappa}, {"r", p.r}, {"q", p.q}, {"m", p.m}};
    j["kl"] = fit.kl;
    j["degenerate"] = fit.degenerate;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : scatter) arr.push_back({{"t", s.t}, {"g", s.g_hat}, {"v", s.v_hat}, {"p", s.p_hat}});
    j["scatter"] = std::move(arr);
    j["grid_size"] = scatter.size();
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

LoadedFit load_fit(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot read " + path.string());
    LoadedFit out;
    try {
        const auto j = nlohmann::json::parse(in);
        const auto& p = j.at("params");
        out.fit.params = {p.at("a").get<double>(), p.at("b").get<double>(), p.at("A").get<double>(),
                          p.at("kappa").get<double>(), p.at("r").get<double>(), p.at("q").get<double>(),
                          p.at("m").get<double>()};
        out.fit.kl = j.at("kl").get<double>();
        out.fit.degenerate = j.value("degenerate", false);
        for (const auto& s : j.at("scatter")) {
            out.scatter.push_back({s.at("t").get<double>(), s.at("g").get<double>(), s.at("v").get<double>(),
                                   s.at("p").get<double>()});
        }
        out.grid_size = j.at("grid_size").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("fit file " + path.string() + ": " + e.what());
    }
    out.fit.params.validate();
    return out;
}

}  // namespace mdmvar
