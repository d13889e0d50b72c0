#include "mdmvar/syrm.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mdmvar/density.hpp"
#include "mdmvar/error.hpp"

namespace mdmvar {

using nlohmann::ordered_json;

namespace {

double min_eig_sym2(double a, double b, double d) {
    const double mean = 0.5 * (a + d);
    const double r = std::hypot(0.5 * (a - d), b);
    return mean - r;
}

struct GroupSums {
    int P = 0;
    double sigma2 = 0.0;  // Σ σ_i²
    double mu2 = 0.0;     // Σ μ_i²
    double rho = 0.0;     // Σ_{i<j} ρ_ij
};

GroupSums group_sums(const GroupModel& gm, SyrmStrategy strategy) {
    const double pr = gm.P_R, pc = gm.P_C;
    GroupSums s;
    if (strategy == SyrmStrategy::resp) {
        s.P = gm.P_R;
        s.sigma2 = pr * gm.sigma2_R;
        s.mu2 = pr * gm.mu_R * gm.mu_R;
        s.rho = 0.5 * pr * (pr - 1) * gm.rho_RR;
    } else {
        s.P = gm.P_R + gm.P_C;
        s.sigma2 = pr * gm.sigma2_R + pc * gm.sigma2_C;
        s.mu2 = pr * gm.mu_R * gm.mu_R + pc * gm.mu_C * gm.mu_C;
        s.rho = 0.5 * pr * (pr - 1) * gm.rho_RR + 0.5 * pc * (pc - 1) * gm.rho_CC + pr * pc * gm.rho_RC;
    }
    return s;
}

}  // namespace

double GroupModel::min_eigenvalue() const {
    // Eigenvectors orthogonal to the group indicator inside each group, plus
    // the 2x2 block acting on the normalized group indicators.
    double m = min_eig_sym2(sigma2_R + (P_R - 1) * rho_RR, std::sqrt(double(P_R) * P_C) * rho_RC,
                            sigma2_C + (P_C - 1) * rho_CC);
    if (P_R > 1) m = std::min(m, sigma2_R - rho_RR);
    if (P_C > 1) m = std::min(m, sigma2_C - rho_CC);
    return m;
}

void GroupModel::validate() const {
    require(P_R >= 1 && P_C >= 1, "GroupModel: P_R and P_C must be >= 1");
    for (double x : {mu_R, mu_C, sigma2_R, sigma2_C, rho_RR, rho_CC, rho_RC}) {
        require(std::isfinite(x), "GroupModel: non-finite statistic");
    }
    require(sigma2_R >= 0 && sigma2_C >= 0, "GroupModel: variances must be nonnegative");
    const double scale = std::max({sigma2_R, sigma2_C, 1e-300});
    require(min_eigenvalue() >= -1e-12 * scale, "GroupModel: implied covariance is not positive semidefinite");
    require(rho_RR >= 0 && rho_CC >= 0 && std::abs(rho_RC) <= std::sqrt(rho_RR * rho_CC) * (1 + 1e-12),
            "GroupModel: |rho_RC| must not exceed sqrt(rho_RR rho_CC)");
}

std::vector<double> GroupModel::covariance() const {
    const int P = P_R + P_C;
    std::vector<double> S(std::size_t(P) * P);
    for (int i = 0; i < P; ++i) {
        for (int j = 0; j < P; ++j) {
            const bool ri = i < P_R, rj = j < P_R;
            double v;
            if (i == j) v = ri ? sigma2_R : sigma2_C;
            else if (ri && rj) v = rho_RR;
            else if (!ri && !rj) v = rho_CC;
            else v = rho_RC;
            S[std::size_t(i) * P + j] = v;
        }
    }
    return S;
}

std::string GroupModel::to_json() const {
    ordered_json j{{"P_R", P_R},         {"P_C", P_C},           {"mu_R", mu_R},     {"mu_C", mu_C},
                   {"sigma2_R", sigma2_R}, {"sigma2_C", sigma2_C}, {"rho_RR", rho_RR}, {"rho_CC", rho_CC},
                   {"rho_RC", rho_RC}};
    return j.dump(2);
}

GroupModel GroupModel::from_json(const std::string& text) {
    GroupModel gm;
    try {
        const auto j = ordered_json::parse(text);
        require(j.is_object(), "GroupModel: expected a JSON object");
        for (const auto& [k, v] : j.items()) {
            if (k == "P_R") gm.P_R = v.get<int>();
            else if (k == "P_C") gm.P_C = v.get<int>();
            else if (k == "mu_R") gm.mu_R = v.get<double>();
            else if (k == "mu_C") gm.mu_C = v.get<double>();
            else if (k == "sigma2_R") gm.sigma2_R = v.get<double>();
            else if (k == "sigma2_C") gm.sigma2_C = v.get<double>();
            else if (k == "rho_RR") gm.rho_RR = v.get<double>();
            else if (k == "rho_CC") gm.rho_CC = v.get<double>();
            else if (k == "rho_RC") gm.rho_RC = v.get<double>();
            else throw ValidationError("GroupModel: unknown key '" + k + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("GroupModel: ") + e.what());
    }
    gm.validate();
    return gm;
}

double batch_loss_variance(const GroupModel& gm, SyrmStrategy strategy, double t) {
    require(t > 0.0 && t <= 1.0, "batch_loss_variance: t must lie in (0, 1]");
    const GroupSums s = group_sums(gm, strategy);
    const double P2 = double(s.P) * s.P;
    return s.sigma2 / (P2 * t) + (1 - t) * s.mu2 / (P2 * t) + 2 * s.rho / P2;
}

double TDist::mean_inv() const {
    require(0.0 < lo && lo < hi && hi <= 1.0, "TDist: need 0 < lo < hi <= 1");
    return std::log(hi / lo) / (hi - lo);
}

double TDist::mean_one_minus_over() const { return mean_inv() - 1.0; }

double TDist::draw(RngStream& rng) const { return rng.uniform(lo, hi); }

double mask_noise_quadrature(const GroupModel& gm, SyrmStrategy strategy, const TDist& dist) {
    (void)dist.mean_inv();  // range check
    const double width = dist.hi - dist.lo;
    return integrate([&](double t) { return batch_loss_variance(gm, strategy, t) / width; }, dist.lo, dist.hi, 256);
}

double mask_noise_closed_form(const GroupModel& gm, SyrmStrategy strategy, const TDist& dist) {
    const GroupSums s = group_sums(gm, strategy);
    const double P2 = double(s.P) * s.P;
    return dist.mean_inv() * s.sigma2 / P2 + dist.mean_one_minus_over() * s.mu2 / P2 + 2 * s.rho / P2;
}

BatchLossSimulator::BatchLossSimulator(GroupModel gm) : gm_(gm), P_(gm.P_R + gm.P_C) {
    gm_.validate();
    const std::vector<double> S = gm_.covariance();
    chol_.assign(S.size(), 0.0);
    // Cholesky that tolerates singular PSD input: zero pivots give zero columns.
    for (int j = 0; j < P_; ++j) {
        double d = S[std::size_t(j) * P_ + j];
        for (int k = 0; k < j; ++k) d -= chol_[std::size_t(j) * P_ + k] * chol_[std::size_t(j) * P_ + k];
        const double ljj = d > 1e-14 * std::max(1.0, S[std::size_t(j) * P_ + j]) ? std::sqrt(d) : 0.0;
        chol_[std::size_t(j) * P_ + j] = ljj;
        for (int i = j + 1; i < P_; ++i) {
            double v = S[std::size_t(i) * P_ + j];
            for (int k = 0; k < j; ++k) v -= chol_[std::size_t(i) * P_ + k] * chol_[std::size_t(j) * P_ + k];
            chol_[std::size_t(i) * P_ + j] = ljj > 0 ? v / ljj : 0.0;
        }
    }
}

BatchLossSimulator::Draw BatchLossSimulator::draw(double t, RngStream& rng) const {
    require(t > 0.0 && t <= 1.0, "simulate: t must lie in (0, 1]");
    std::vector<double> z(P_);
    for (auto& x : z) x = rng.normal();
    double sR = 0.0, sC = 0.0;
    for (int i = 0; i < P_; ++i) {
        const bool masked = rng.uniform() < t;
        if (!masked) continue;
        double y = i < gm_.P_R ? gm_.mu_R : gm_.mu_C;
        for (int k = 0; k <= i; ++k) y += chol_[std::size_t(i) * P_ + k] * z[k];
        (i < gm_.P_R ? sR : sC) += y;
    }
    Draw d;
    d.L_resp = sR / (gm_.P_R * t);
    d.L_coord = sC / (gm_.P_C * t);
    d.L_syrm = (sR + sC) / (P_ * t);
    d.alpha = double(gm_.P_R) / P_;
    return d;
}

RunningStats BatchLossSimulator::simulate(SyrmStrategy strategy, double t, int draws, const RngStream& stream) const {
    require(draws >= 2, "simulate: need at least two draws");
    RunningStats stats;
    for (int k = 0; k < draws; ++k) {
        RngStream rng = stream.derive("draw", k);
        const Draw d = draw(t, rng);
        stats.add(strategy == SyrmStrategy::resp ? d.L_resp : d.L_syrm);
    }
    return stats;
}

RunningStats BatchLossSimulator::simulate(SyrmStrategy strategy, const TDist& dist, int draws,
                                          const RngStream& stream) const {
    require(draws >= 2, "simulate: need at least two draws");
    RunningStats stats;
    for (int k = 0; k < draws; ++k) {
        RngStream rng = stream.derive("draw", k);
        const double t = dist.draw(rng);
        const Draw d = draw(t, rng);
        stats.add(strategy == SyrmStrategy::resp ? d.L_resp : d.L_syrm);
    }
    return stats;
}

std::string DominanceResult::to_json() const {
    ordered_json j;
    j["assumptions_ok"] = assumptions_ok;
    j["violations"] = violations;
    if (assumptions_ok) j["holds"] = holds;
    else j["holds"] = nullptr;
    j["A_syrm"] = A_syrm;
    j["A_resp"] = A_resp;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["w_R"] = w_R;
    j["B"] = B;
    j["margin_lhs"] = margin_lhs;
    j["margin_rhs"] = margin_rhs;
    return j.dump(2);
}

DominanceResult check_syrm_dominance(const GroupModel& gm, const DominanceOptions& opts) {
    require(opts.threshold > 0.0 && opts.threshold < 1.0, "check_syrm_dominance: threshold must lie in (0, 1)");
    DominanceResult r;
    r.B = opts.dist.mean_inv();
    r.w_R = double(gm.P_R) / (gm.P_R + gm.P_C);
    if (gm.P_R < 1 || gm.P_C < 1) r.violations.push_back("counts");
    if (gm.min_eigenvalue() < -1e-12 * std::max({gm.sigma2_R, gm.sigma2_C, 1e-300})) r.violations.push_back("psd");
    // Group-homogeneous statistics hold by construction.
    if (!(gm.sigma2_R > 0) || gm.sigma2_C > opts.threshold * gm.sigma2_R || std::abs(gm.mu_C) > std::abs(gm.mu_R)) {
        r.violations.push_back("syntax_noise");
    }
    if (!(gm.rho_RR > 0) || gm.rho_CC > opts.threshold * gm.rho_RR) r.violations.push_back("syntax_correlation");
    if (gm.rho_CC < 0 || gm.rho_RR < 0 || std::abs(gm.rho_RC) > std::sqrt(std::max(0.0, gm.rho_RR * gm.rho_CC))) {
        r.violations.push_back("cross_correlation");
    }
    if (gm.sigma2_R > 0 && gm.rho_RR > 0) {
        r.alpha = gm.sigma2_C / gm.sigma2_R;
        r.beta = gm.rho_CC / gm.rho_RR;
        r.margin_lhs = 2 * r.w_R * r.beta;
        r.margin_rhs = (1 - r.alpha) * (gm.P_R - 1) * gm.rho_RR / (gm.sigma2_R * r.B) + (1 - r.beta);
        if (r.margin_lhs > r.margin_rhs) r.violations.push_back("margin");
    }
    r.assumptions_ok = r.violations.empty();
    if (r.assumptions_ok || std::find(r.violations.begin(), r.violations.end(), "psd") == r.violations.end()) {
        r.A_syrm = mask_noise_quadrature(gm, SyrmStrategy::syrm, opts.dist);
        r.A_resp = mask_noise_quadrature(gm, SyrmStrategy::resp, opts.dist);
    }
    r.holds = r.assumptions_ok && r.A_syrm < r.A_resp;
    return r;
}

GroupModel random_group_model(RngStream& rng) {
    GroupModel gm;
    gm.P_R = 2 + static_cast<int>(rng.below(15));
    gm.P_C = 1 + static_cast<int>(rng.below(8));
    gm.sigma2_R = rng.uniform(0.5, 2.0);
    gm.sigma2_C = rng.uniform(0.0, 0.5) * gm.sigma2_R;
    gm.rho_RR = rng.uniform(0.05, 0.9) * gm.sigma2_R;
    gm.rho_CC = std::min(rng.uniform(0.0, 0.5) * gm.rho_RR, gm.sigma2_C);
    gm.rho_RC = rng.uniform(-1.0, 1.0) * std::sqrt(gm.rho_RR * gm.rho_CC);
    gm.mu_R = rng.uniform(0.0, 3.0);
    gm.mu_C = rng.uniform(0.0, 1.0) * gm.mu_R;
    return gm;
}

double optimum_shift_bound(double alpha, double lambda_min, double grad_coord_norm) {
    require(lambda_min > 0.0, "optimum_shift_bound: lambda_min must be positive");
    require(grad_coord_norm >= 0.0, "optimum_shift_bound: gradient norm must be nonnegative");
    return (1.0 - alpha) / lambda_min * grad_coord_norm;
}

ShiftCheck quadratic_shift(const Quadratic2& resp, const Quadratic2& coord, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "quadratic_shift: alpha must lie in [0, 1]");
    Mat2 H;
    for (int k = 0; k < 4; ++k) H[k] = alpha * resp.H[k] + (1 - alpha) * coord.H[k];
    const double lmin = min_eig_sym2(H[0], H[1], H[3]);
    if (!(lmin > 0.0)) throw ValidationError("quadratic_shift: combined Hessian is not positive definite");
    auto mul = [](const Mat2& M, const Vec2& v) { return Vec2{M[0] * v[0] + M[1] * v[1], M[2] * v[0] + M[3] * v[1]}; };
    const Vec2 hr = mul(resp.H, resp.center), hc = mul(coord.H, coord.center);
    const Vec2 rhs{alpha * hr[0] + (1 - alpha) * hc[0], alpha * hr[1] + (1 - alpha) * hc[1]};
    const double det = H[0] * H[3] - H[1] * H[2];
    ShiftCheck out;
    out.theta_resp = resp.center;
    out.theta_syrm = {(H[3] * rhs[0] - H[1] * rhs[1]) / det, (H[0] * rhs[1] - H[2] * rhs[0]) / det};
    const Vec2 g = mul(coord.H, Vec2{resp.center[0] - coord.center[0], resp.center[1] - coord.center[1]});
    out.grad_coord_norm = std::hypot(g[0], g[1]);
    out.lambda_min = lmin;
    out.exact_shift = std::hypot(out.theta_syrm[0] - out.theta_resp[0], out.theta_syrm[1] - out.theta_resp[1]);
    out.bound = optimum_shift_bound(alpha, lmin, out.grad_coord_norm);
    return out;
}

}  // namespace mdmvar
