#include "mdmvar/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdmvar/error.hpp"

namespace mdmvar {

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> start, const NelderMeadOptions& opts) {
    const int n = static_cast<int>(start.size());
    require(n >= 1, "nelder_mead: empty start point");
    const double alpha = 1.0;
    const double gamma = 1.0 + 2.0 / n;
    const double rho = 0.75 - 0.5 / n;
    const double sigma = 1.0 - 1.0 / n;

    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> pts(n + 1, start);
    for (int i = 0; i < n; ++i) pts[i + 1][i] += opts.initial_step;
    std::vector<double> vals(n + 1);
    for (int i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    std::vector<int> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    bool converged = false;
    while (evals < opts.max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        const int best = order[0];
        const int worst = order[n];
        const int second = order[n - 1];

        double diam = 0.0;
        for (int i = 0; i <= n; ++i) {
            for (int k = 0; k < n; ++k) diam = std::max(diam, std::abs(pts[i][k] - pts[best][k]));
        }
        if (std::abs(vals[worst] - vals[best]) <= opts.ftol && diam <= opts.xtol) {
            converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (int i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (int k = 0; k < n; ++k) centroid[k] += pts[i][k];
        }
        for (double& c : centroid) c /= n;

        for (int k = 0; k < n; ++k) xr[k] = centroid[k] + alpha * (centroid[k] - pts[worst][k]);
        const double fr = eval(xr);
        if (fr < vals[best]) {
            for (int k = 0; k < n; ++k) xe[k] = centroid[k] + gamma * (xr[k] - centroid[k]);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        for (int k = 0; k < n; ++k) {
            xc[k] = outside ? centroid[k] + rho * (xr[k] - centroid[k])
                            : centroid[k] + rho * (pts[worst][k] - centroid[k]);
        }
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for (int i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (int k = 0; k < n; ++k) pts[i][k] = pts[best][k] + sigma * (pts[i][k] - pts[best][k]);
            vals[i] = eval(pts[i]);
        }
    }

    const int best = static_cast<int>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    return {pts[best], vals[best], evals, converged};
}

}  // namespace mdmvar
