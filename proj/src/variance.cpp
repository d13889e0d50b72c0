#include "mdmvar/variance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mdmvar/error.hpp"
#include "mdmvar/parallel.hpp"
#include "mdmvar/tsampler.hpp"

namespace mdmvar {

void RunningStats::add(double x) noexcept {
    const double n1 = static_cast<double>(n_);
    ++n_;
    const double n = static_cast<double>(n_);
    const double delta = x - mean_;
    const double dn = delta / n;
    const double dn2 = dn * dn;
    const double term1 = delta * dn * n1;
    mean_ += dn;
    m4_ += term1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * m2_ - 4 * dn * m3_;
    m3_ += term1 * dn * (n - 2) - 3 * dn * m2_;
    m2_ += term1;
}

double RunningStats::variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

double RunningStats::stderr_mean() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

double RunningStats::stderr_variance() const noexcept {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double s2 = m2_ / n;
    const double kurt = m4_ / n - s2 * s2;
    return std::sqrt(std::max(kurt, 0.0) / n);
}

void PairStats::add(double x, double y) noexcept {
    ++n_;
    ++dof_;
    const double n = static_cast<double>(n_);
    const double dx = x - mx_;
    mx_ += dx / n;
    const double dy = y - my_;
    my_ += dy / n;
    sxx_ += dx * (x - mx_);
    syy_ += dy * (y - my_);
    sxy_ += dx * (y - my_);
}

void PairStats::pool(const PairStats& group) noexcept {
    pooled_ = true;
    n_ += group.n_;
    dof_ += group.n_ - 1;
    sxx_ += group.sxx_;
    syy_ += group.syy_;
    sxy_ += group.sxy_;
}

double PairStats::var_x() const noexcept {
    const std::int64_t d = pooled_ ? dof_ : n_ - 1;
    return d > 0 ? sxx_ / static_cast<double>(d) : 0.0;
}

double PairStats::var_y() const noexcept {
    const std::int64_t d = pooled_ ? dof_ : n_ - 1;
    return d > 0 ? syy_ / static_cast<double>(d) : 0.0;
}

double PairStats::covariance() const noexcept {
    const std::int64_t d = pooled_ ? dof_ : n_ - 1;
    return d > 0 ? sxy_ / static_cast<double>(d) : 0.0;
}

double PairStats::correlation() const noexcept {
    const double den = std::sqrt(sxx_ * syy_);
    return den > 0 ? sxy_ / den : 0.0;
}

double VarianceReport::combined_stderr() const noexcept {
    return std::sqrt(stderr_A * stderr_A + stderr_B * stderr_B + stderr_C * stderr_C +
                     stderr_total * stderr_total);
}

std::string VarianceReport::to_json() const {
    nlohmann::ordered_json j;
    j["comp_A"] = comp_A;
    j["comp_B"] = comp_B;
    j["comp_C"] = comp_C;
    j["total"] = total;
    j["stderr_A"] = stderr_A;
    j["stderr_B"] = stderr_B;
    j["stderr_C"] = stderr_C;
    j["stderr_total"] = stderr_total;
    j["combined_stderr"] = combined_stderr();
    j["a"] = a;
    j["b"] = b;
    j["c"] = c;
    return j.dump(2);
}

namespace {

double bessel_var(const double* x, int n) {
    double mean = 0.0;
    for (int k = 0; k < n; ++k) mean += x[k];
    mean /= n;
    double ss = 0.0;
    for (int k = 0; k < n; ++k) ss += (x[k] - mean) * (x[k] - mean);
    return ss / (n - 1);
}

// Per-sequence summaries; every component is a function of these, which makes
// the delete-one jackknife cheap.
struct SeqSummary {
    double A = 0.0;      // mean within-cell variance
    double B = 0.0;      // bias-corrected rate variance
    double h = 0.0;      // mean loss
    double noise = 0.0;  // estimated Var(h | x0)
    double s = 0.0;      // Σ (l - K)
    double q = 0.0;      // Σ (l - K)^2
};

struct Components {
    double A, B, C, total;
};

Components components(const std::vector<SeqSummary>& seqs, int skip, double cells_per_seq) {
    double sa = 0.0, sb = 0.0, sh = 0.0, sn = 0.0, ss = 0.0, sq = 0.0;
    int m = 0;
    for (int i = 0; i < static_cast<int>(seqs.size()); ++i) {
        if (i == skip) continue;
        const auto& r = seqs[i];
        sa += r.A;
        sb += r.B;
        sh += r.h;
        sn += r.noise;
        ss += r.s;
        sq += r.q;
        ++m;
    }
    const double hbar = sh / m;
    double vh = 0.0;
    for (int i = 0; i < static_cast<int>(seqs.size()); ++i) {
        if (i == skip) continue;
        vh += (seqs[i].h - hbar) * (seqs[i].h - hbar);
    }
    vh /= (m - 1);
    const double n = cells_per_seq * m;
    return {sa / m, sb / m, vh - sn / m, (sq - ss * ss / n) / (n - 1)};
}

}  // namespace

VarianceReport decompose(const CellLoss& loss, int num_sequences, int a, int b, int c, const RngStream& stream,
                         RateDesign design, int threads) {
    require(a >= 3, "decompose: need a >= 3 sequences for jackknife errors");
    require(b >= 2, "decompose: need b >= 2 rates per sequence");
    require(c >= 2, "decompose: need c >= 2 masks per cell");
    require(num_sequences >= a, "decompose: corpus smaller than a");

    const std::size_t cells = std::size_t(a) * b;
    std::vector<double> losses(cells * c);
    parallel_for(static_cast<int>(cells), threads, [&](int idx) {
        const int i = idx / b;
        const int j = idx % b;
        RngStream cell = stream.derive("x0", i).derive("t", j);
        double t = 0.0;
        do {
            const double u = cell.uniform();
            t = design == RateDesign::stratified ? (j + u) / b : u;
        } while (t < kMinT);
        double* out = losses.data() + std::size_t(idx) * c;
        for (int k = 0; k < c; ++k) {
            out[k] = loss(i, t, cell.derive("mask", k));
            if (!std::isfinite(out[k])) throw NumericalError("decompose: non-finite loss");
        }
    });

    const double K = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    std::vector<SeqSummary> seqs(a);
    std::vector<double> cell_mean(b);
    for (int i = 0; i < a; ++i) {
        SeqSummary& r = seqs[i];
        for (int j = 0; j < b; ++j) {
            const double* l = losses.data() + (std::size_t(i) * b + j) * c;
            cell_mean[j] = std::accumulate(l, l + c, 0.0) / c;
            r.A += bessel_var(l, c);
            for (int k = 0; k < c; ++k) {
                r.s += l[k] - K;
                r.q += (l[k] - K) * (l[k] - K);
            }
        }
        r.A /= b;
        r.h = std::accumulate(cell_mean.begin(), cell_mean.end(), 0.0) / b;
        const double vm = bessel_var(cell_mean.data(), b);
        if (design == RateDesign::stratified) {
            r.B = (b - 1.0) / b * (vm - r.A / c);
            r.noise = r.A / (double(b) * c);
        } else {
            r.B = vm - r.A / c;
            r.noise = vm / b;
        }
    }

    const double per_seq = double(b) * c;
    const Components full = components(seqs, -1, per_seq);
    std::vector<Components> jack(a);
    for (int i = 0; i < a; ++i) jack[i] = components(seqs, i, per_seq);
    auto jack_se = [&](double Components::*field) {
        double mean = 0.0;
        for (const auto& x : jack) mean += x.*field;
        mean /= a;
        double ss = 0.0;
        for (const auto& x : jack) ss += (x.*field - mean) * (x.*field - mean);
        return std::sqrt((a - 1.0) / a * ss);
    };

    VarianceReport rep;
    rep.comp_A = full.A;
    rep.comp_B = full.B;
    rep.comp_C = full.C;
    rep.total = full.total;
    rep.stderr_A = jack_se(&Components::A);
    rep.stderr_B = jack_se(&Components::B);
    rep.stderr_C = jack_se(&Components::C);
    rep.stderr_total = jack_se(&Components::total);
    rep.a = a;
    rep.b = b;
    rep.c = c;
    return rep;
}

VarianceReport decompose(const DenoiserParams& params, const Corpus& corpus, int a, int b, int c,
                         const RngStream& stream, EligibilityMode mode, RateDesign design, int threads) {
    return decompose(denoiser_cell_loss(params, corpus, mode), static_cast<int>(corpus.size()), a, b, c, stream,
                     design, threads);
}

void OnlineVarAccumulator::update(double loss, double weight) {
    require(weight > 0.0 && std::isfinite(weight), "online_update: weight must be positive");
    require(std::isfinite(loss), "online_update: loss must be finite");
    const double wl = weight * loss;
    s1 += wl;
    s2 += wl * loss;
    s12 += wl * wl;
    ++n;
}

void OnlineVarAccumulator::merge(const OnlineVarAccumulator& other) noexcept {
    s1 += other.s1;
    s2 += other.s2;
    s12 += other.s12;
    n += other.n;
}

double OnlineVarAccumulator::variance() const {
    require(n >= 2, "online variance: need at least two updates");
    const double nn = static_cast<double>(n);
    // S2/n - (S1^2 - S12)/(n(n-1)) over a common denominator
    return ((nn - 1.0) * s2 - (s1 * s1 - s12)) / (nn * (nn - 1.0));
}

OnlineVarAccumulator online_update(OnlineVarAccumulator acc, double loss, double weight) {
    acc.update(loss, weight);
    return acc;
}

EmaBinState::EmaBinState(int bins, double eta, double eps) : m_(bins), eta_(eta), eps_(eps) {
    require(bins >= 1, "EmaBinState: need at least one bin");
    require(eta > 0.0 && eta < 1.0, "EmaBinState: eta must lie in (0, 1)");
    require(eps > 0.0, "EmaBinState: eps must be positive");
    state_.resize(bins);
}

int EmaBinState::bin_of(double t) const {
    require(t > 0.0 && t <= 1.0, "ema: t outside (0, 1]");
    const int j = static_cast<int>(std::ceil(t * m_)) - 1;
    return std::clamp(j, 0, m_ - 1);
}

double EmaBinState::coefficient(double t) const {
    const Bin& s = state_[bin_of(t)];
    return (s.M_LH - s.mu_L * s.mu_H) / (s.M_HH - s.mu_H * s.mu_H + eps_);
}

double EmaBinState::baseline(double t) const { return state_[bin_of(t)].baseline; }

double EmaBinState::adjust(double t, double loss) const {
    const Bin& s = state_[bin_of(t)];
    const double cj = (s.M_LH - s.mu_L * s.mu_H) / (s.M_HH - s.mu_H * s.mu_H + eps_);
    return loss - cj * s.baseline;
}

void EmaBinState::update(double t, double loss) {
    require(std::isfinite(loss), "ema: non-finite loss");
    Bin& s = state_[bin_of(t)];
    const double h = s.baseline;
    s.mu_L = (1 - eta_) * s.mu_L + eta_ * loss;
    s.mu_H = (1 - eta_) * s.mu_H + eta_ * h;
    s.M_LH = (1 - eta_) * s.M_LH + eta_ * loss * h;
    s.M_HH = (1 - eta_) * s.M_HH + eta_ * h * h;
    s.baseline = (1 - eta_) * s.baseline + eta_ * loss;
}

double ema_adjust(EmaBinState& state, double t, double loss) {
    const double adjusted = state.adjust(t, loss);
    state.update(t, loss);
    return adjusted;
}

int suggest_bins(std::int64_t train_size, int batch_per_worker, double eta) {
    require(train_size > 0 && batch_per_worker > 0 && eta > 0.0, "suggest_bins: inputs must be positive");
    const double m = std::round(0.1 * eta * static_cast<double>(train_size) / batch_per_worker);
    return static_cast<int>(std::clamp(m, 2.0, 64.0));
}

}  // namespace mdmvar
