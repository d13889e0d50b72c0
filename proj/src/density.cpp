#include "mdmvar/density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mdmvar/epr.hpp"
#include "mdmvar/error.hpp"

namespace mdmvar {

namespace {

constexpr double kGlNodes[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                0.9602898564975363};
constexpr double kGlWeights[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                  0.1012285362903763};

}  // namespace

double integrate(const ScalarFn& f, double lo, double hi, int panels) {
    require(panels >= 1, "integrate: panels must be >= 1");
    const double h = (hi - lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = lo + (p + 0.5) * h;
        const double half = 0.5 * h;
        double s = 0.0;
        for (int k = 0; k < 4; ++k) {
            s += kGlWeights[k] * (f(mid - half * kGlNodes[k]) + f(mid + half * kGlNodes[k]));
        }
        total += s * half;
    }
    return total;
}

double integrate(const ScalarFn& f, int panels) { return integrate(f, 0.0, 1.0, panels); }

// --- EPRParams -------------------------------------------------------------

bool EPRParams::valid() const noexcept {
    for (double x : as_array()) {
        if (!std::isfinite(x)) return false;
    }
    return a > 0 && b > 0 && A > 0 && kappa > 0 && r >= 0 && q >= 0 && m > 1;
}

void EPRParams::validate() const {
    require(valid(), "EPR parameters violate a, b, A, kappa > 0; r, q >= 0; m > 1");
}

double EPRParams::shape(double t) const noexcept {
    const double gt = g(t);
    return std::sqrt(gt * gt + v(t));
}

// --- PiecewiseDensity --------------------------------------------------------

PiecewiseDensity PiecewiseDensity::uniform(int bins) {
    require(bins >= 1, "PiecewiseDensity: bins must be >= 1");
    return equal_bins(std::vector<double>(bins, 1.0 / bins));
}

PiecewiseDensity PiecewiseDensity::equal_bins(std::vector<double> probs) {
    require(!probs.empty(), "PiecewiseDensity: no bins");
    PiecewiseDensity d;
    const int n = static_cast<int>(probs.size());
    d.edges.resize(n + 1);
    for (int k = 0; k <= n; ++k) d.edges[k] = static_cast<double>(k) / n;
    d.probs = std::move(probs);
    return d;
}

double PiecewiseDensity::pdf(double t) const noexcept {
    if (t < edges.front() || t > edges.back()) return 0.0;
    auto it = std::upper_bound(edges.begin(), edges.end(), t);
    int k = static_cast<int>(it - edges.begin()) - 1;
    k = std::clamp(k, 0, bins() - 1);
    return probs[k] / width(k);
}

void PiecewiseDensity::validate() const {
    require(edges.size() == probs.size() + 1 && !probs.empty(), "PiecewiseDensity: edge/bin count mismatch");
    require(edges.front() == 0.0 && edges.back() == 1.0, "PiecewiseDensity: edges must span [0, 1]");
    for (int k = 0; k < bins(); ++k) {
        require(edges[k + 1] > edges[k], "PiecewiseDensity: empty or unsorted bin");
        require(probs[k] >= 0.0 && std::isfinite(probs[k]), "PiecewiseDensity: negative mass");
    }
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    require(std::abs(total - 1.0) <= 1e-12, "PiecewiseDensity: masses must sum to 1");
}

double PiecewiseDensity::sample(RngStream& rng) const {
    double u = rng.uniform();
    for (int k = 0; k < bins(); ++k) {
        if (u < probs[k] || k == bins() - 1) {
            const double frac = probs[k] > 0 ? std::min(u / probs[k], 1.0) : 0.0;
            return edges[k] + frac * width(k);
        }
        u -= probs[k];
    }
    return edges.back();
}

// --- TabulatedDensity --------------------------------------------------------

TabulatedDensity::TabulatedDensity(const ScalarFn& f, int grid, double floor_ratio) {
    require(grid >= 2, "TabulatedDensity: grid must be >= 2");
    require(floor_ratio >= 0.0 && floor_ratio < 1.0, "TabulatedDensity: floor ratio must lie in [0, 1)");
    h_ = 1.0 / (grid - 1);
    nodes_.resize(grid);
    for (int i = 0; i < grid; ++i) {
        const double y = f(i * h_);
        require(std::isfinite(y) && y >= 0.0, "TabulatedDensity: density must be finite and >= 0");
        nodes_[i] = y;
    }
    auto trapezoid = [&] {
        double s = 0.0;
        for (int i = 0; i + 1 < grid; ++i) s += 0.5 * (nodes_[i] + nodes_[i + 1]) * h_;
        return s;
    };
    const double mean = trapezoid();
    if (!(mean > 0.0) || !std::isfinite(mean)) throw ValidationError("TabulatedDensity: density is not normalizable");
    const double floor = floor_ratio * mean;
    for (double& y : nodes_) y = std::max(y, floor);
    const double z = trapezoid();
    for (double& y : nodes_) y /= z;

    cum_.resize(grid);
    cum_[0] = 0.0;
    for (int i = 0; i + 1 < grid; ++i) cum_[i + 1] = cum_[i] + 0.5 * (nodes_[i] + nodes_[i + 1]) * h_;
    // Absorb the last rounding ulps so quantile(u) stays inside [0, 1].
    const double total = cum_.back();
    for (double& c : cum_) c /= total;
    for (double& y : nodes_) y /= total;
}

double TabulatedDensity::pdf(double t) const noexcept {
    if (t < 0.0 || t > 1.0) return 0.0;
    const int last = grid() - 1;
    int i = std::min(static_cast<int>(t / h_), last - 1);
    const double s = (t - i * h_) / h_;
    return nodes_[i] + s * (nodes_[i + 1] - nodes_[i]);
}

double TabulatedDensity::cdf(double t) const noexcept {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const int last = grid() - 1;
    int i = std::min(static_cast<int>(t / h_), last - 1);
    const double s = t - i * h_;
    const double slope = (nodes_[i + 1] - nodes_[i]) / h_;
    return cum_[i] + nodes_[i] * s + 0.5 * slope * s * s;
}

double TabulatedDensity::quantile(double u) const noexcept {
    u = std::clamp(u, 0.0, 1.0);
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    int i = static_cast<int>(it - cum_.begin()) - 1;
    i = std::clamp(i, 0, grid() - 2);
    const double p0 = nodes_[i];
    const double a = 0.5 * (nodes_[i + 1] - p0) / h_;
    const double rem = u - cum_[i];
    double s;
    // Solve a s^2 + p0 s = rem on [0, h] with the cancellation-free root.
    const double disc = p0 * p0 + 4.0 * a * rem;
    if (disc <= 0.0) {
        s = (a != 0.0) ? -p0 / (2.0 * a) : 0.0;
    } else {
        const double denom = p0 + std::sqrt(disc);
        s = denom > 0.0 ? 2.0 * rem / denom : 0.0;
    }
    s = std::clamp(s, 0.0, h_);
    return std::min(i * h_ + s, 1.0);
}

}  // namespace mdmvar
