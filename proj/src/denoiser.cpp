#include "mdmvar/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mdmvar/error.hpp"

namespace mdmvar {

DenoiserParams::DenoiserParams(const DenoiserShape& shape) : shape_(shape), values_(shape.count(), 0.0) {
    require(shape.vocab >= 2 && shape.max_len >= 1 && shape.d >= 1 && shape.h >= 1,
            "denoiser shape must be positive");
    require(shape.mask_id >= 0 && shape.mask_id < shape.vocab, "mask id outside vocabulary");
}

DenoiserParams DenoiserParams::random(const DenoiserShape& shape, const RngStream& stream,
                                      double scale) {
    DenoiserParams p(shape);
    RngStream rng = stream.derive("init", 0);
    for (double& v : p.values_) v = rng.uniform(-scale, scale);
    return p;
}

void DenoiserParams::set_zero() noexcept { std::fill(values_.begin(), values_.end(), 0.0); }

bool DenoiserParams::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void DenoiserParams::axpy(double scale, const DenoiserParams& other) {
    require(shape_ == other.shape_, "parameter shapes differ");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

namespace {

// Forward state shared by every position of one noised sequence.
struct Context {
    std::vector<double> mean;  // d
    std::vector<int> unmasked;
};

Context pooled_context(const DenoiserParams& p, std::span<const TokenId> xt) {
    const auto& s = p.shape();
    Context c;
    c.mean.assign(s.d, 0.0);
    for (int j = 0; j < static_cast<int>(xt.size()); ++j) {
        if (xt[j] == s.mask_id) continue;
        c.unmasked.push_back(j);
        const double* e = p.tok(xt[j]);
        for (int k = 0; k < s.d; ++k) c.mean[k] += e[k];
    }
    if (!c.unmasked.empty()) {
        const double inv = 1.0 / static_cast<double>(c.unmasked.size());
        for (double& v : c.mean) v *= inv;
    }
    return c;
}

// in, z and log-softmax for one position.
struct PositionState {
    std::vector<double> in;      // 4d
    std::vector<double> z;       // h
    std::vector<double> logp;    // vocab
};

void forward_position(const DenoiserParams& p, std::span<const TokenId> xt, int i,
                      const Context& ctx, PositionState& st) {
    const auto& s = p.shape();
    st.in.assign(s.in_dim(), 0.0);
    const double* e = p.tok(xt[i]);
    const double* ps = p.pos(i);
    const int n = static_cast<int>(xt.size());
    const double* left = i > 0 ? p.tok(xt[i - 1]) : nullptr;
    const double* right = i + 1 < n ? p.tok(xt[i + 1]) : nullptr;
    for (int k = 0; k < s.d; ++k) {
        st.in[k] = e[k] + ps[k];
        if (left) st.in[s.d + k] = left[k];
        if (right) st.in[2 * s.d + k] = right[k];
        st.in[3 * s.d + k] = ctx.mean[k];
    }
    st.z.assign(p.b1(), p.b1() + s.h);
    const double* w1 = p.w1();
    for (int r = 0; r < s.in_dim(); ++r) {
        const double x = st.in[r];
        const double* row = w1 + std::size_t(r) * s.h;
        for (int c = 0; c < s.h; ++c) st.z[c] += x * row[c];
    }
    for (double& v : st.z) v = std::tanh(v);

    st.logp.assign(p.b2(), p.b2() + s.vocab);
    const double* w2 = p.w2();
    for (int r = 0; r < s.h; ++r) {
        const double x = st.z[r];
        const double* row = w2 + std::size_t(r) * s.vocab;
        for (int c = 0; c < s.vocab; ++c) st.logp[c] += x * row[c];
    }
    const double mx = *std::max_element(st.logp.begin(), st.logp.end());
    double sum = 0.0;
    for (double v : st.logp) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (double& v : st.logp) v -= lse;
}

void check_input(const DenoiserParams& p, std::span<const TokenId> xt) {
    require(static_cast<int>(xt.size()) <= p.shape().max_len, "sequence longer than denoiser max_len");
    for (TokenId id : xt) require(id >= 0 && id < p.shape().vocab, "token id outside vocabulary");
}

void check_pattern(const TokenSeq& x0, const MaskPattern& pattern) {
    require(pattern.t > 0.0, "loss: masking rate t must be > 0");
    require(pattern.num_eligible >= 1 || pattern.masked.empty(), "loss: empty eligible set");
    for (int pos : pattern.masked) require(pos >= 0 && pos < x0.size(), "mask position out of range");
}

}  // namespace

LogProbs log_probs(const DenoiserParams& params, std::span<const TokenId> xt) {
    check_input(params, xt);
    const Context ctx = pooled_context(params, xt);
    LogProbs out;
    out.len = static_cast<int>(xt.size());
    out.vocab = params.shape().vocab;
    out.values.resize(std::size_t(out.len) * out.vocab);
    PositionState st;
    for (int i = 0; i < out.len; ++i) {
        forward_position(params, xt, i, ctx, st);
        std::copy(st.logp.begin(), st.logp.end(), out.values.begin() + std::size_t(i) * out.vocab);
    }
    return out;
}

double loss_only(const DenoiserParams& params, const TokenSeq& x0, const MaskPattern& pattern) {
    check_pattern(x0, pattern);
    if (pattern.masked.empty()) return 0.0;
    const auto xt = apply_mask(x0, pattern, params.shape().mask_id);
    check_input(params, xt);
    const Context ctx = pooled_context(params, xt);
    PositionState st;
    double sum = 0.0;
    for (std::size_t k = 0; k < pattern.masked.size(); ++k) {
        const int i = pattern.masked[k];
        forward_position(params, xt, i, ctx, st);
        sum += pattern.weight_at(k) * st.logp[x0.tokens[i]];
    }
    return -sum / (pattern.num_eligible * pattern.t);
}

double accumulate_loss_grad(const DenoiserParams& params, const TokenSeq& x0,
                            const MaskPattern& pattern, double scale, Gradients& grad) {
    check_pattern(x0, pattern);
    require(grad.shape() == params.shape(), "gradient buffer shape mismatch");
    if (pattern.masked.empty()) return 0.0;
    const auto& s = params.shape();
    const auto xt = apply_mask(x0, pattern, s.mask_id);
    check_input(params, xt);
    const Context ctx = pooled_context(params, xt);
    const double norm = 1.0 / (pattern.num_eligible * pattern.t);

    PositionState st;
    std::vector<double> dlogit(s.vocab), dpre(s.h), din(s.in_dim());
    std::vector<double> dctx(s.d, 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < pattern.masked.size(); ++k) {
        const int i = pattern.masked[k];
        forward_position(params, xt, i, ctx, st);
        const double w = pattern.weight_at(k);
        const TokenId target = x0.tokens[i];
        sum += w * st.logp[target];

        // d(-coef * log p_target)/d logits = coef * (softmax - onehot)
        const double coef = scale * w * norm;
        for (int v = 0; v < s.vocab; ++v) dlogit[v] = coef * std::exp(st.logp[v]);
        dlogit[target] -= coef;

        double* gb2 = grad.b2();
        double* gw2 = grad.w2();
        const double* w2 = params.w2();
        for (int v = 0; v < s.vocab; ++v) gb2[v] += dlogit[v];
        for (int r = 0; r < s.h; ++r) {
            const double* wrow = w2 + std::size_t(r) * s.vocab;
            double* grow = gw2 + std::size_t(r) * s.vocab;
            double dz = 0.0;
            for (int v = 0; v < s.vocab; ++v) {
                grow[v] += st.z[r] * dlogit[v];
                dz += wrow[v] * dlogit[v];
            }
            dpre[r] = dz * (1.0 - st.z[r] * st.z[r]);
        }

        double* gb1 = grad.b1();
        double* gw1 = grad.w1();
        const double* w1 = params.w1();
        for (int c = 0; c < s.h; ++c) gb1[c] += dpre[c];
        for (int r = 0; r < s.in_dim(); ++r) {
            const double* wrow = w1 + std::size_t(r) * s.h;
            double* grow = gw1 + std::size_t(r) * s.h;
            double acc = 0.0;
            for (int c = 0; c < s.h; ++c) {
                grow[c] += st.in[r] * dpre[c];
                acc += wrow[c] * dpre[c];
            }
            din[r] = acc;
        }

        double* gtok = grad.tok(xt[i]);
        double* gpos = grad.pos(i);
        double* gleft = i > 0 ? grad.tok(xt[i - 1]) : nullptr;
        double* gright = i + 1 < static_cast<int>(xt.size()) ? grad.tok(xt[i + 1]) : nullptr;
        for (int k2 = 0; k2 < s.d; ++k2) {
            gtok[k2] += din[k2];
            gpos[k2] += din[k2];
            if (gleft) gleft[k2] += din[s.d + k2];
            if (gright) gright[k2] += din[2 * s.d + k2];
            dctx[k2] += din[3 * s.d + k2];
        }
    }

    if (!ctx.unmasked.empty()) {
        const double inv = 1.0 / static_cast<double>(ctx.unmasked.size());
        for (int j : ctx.unmasked) {
            double* g = grad.tok(xt[j]);
            for (int k2 = 0; k2 < s.d; ++k2) g[k2] += dctx[k2] * inv;
        }
    }
    return -sum * norm;
}

LossGrad loss_and_grad(const DenoiserParams& params, const TokenSeq& x0, const MaskPattern& pattern) {
    LossGrad out{0.0, Gradients(params.shape())};
    out.loss = accumulate_loss_grad(params, x0, pattern, 1.0, out.grad);
    return out;
}

DenoiserParams sgd_step(const DenoiserParams& params, const Gradients& grad, double lr) {
    require(lr >= 0.0 && std::isfinite(lr), "sgd_step: learning rate must be finite and >= 0");
    if (!grad.all_finite()) throw NumericalError("sgd_step: non-finite gradient");
    DenoiserParams next = params;
    next.axpy(-lr, grad);
    return next;
}

namespace {

constexpr char kMagic[8] = {'M', 'D', 'M', 'V', 'C', 'K', 'P', 'T'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    require(static_cast<bool>(in), "checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params) {
    const auto& s = params.shape();
    nlohmann::ordered_json header;
    header["format"] = "mdmvar-checkpoint";
    header["version"] = 1;
    header["vocab"] = s.vocab;
    header["max_len"] = s.max_len;
    header["d"] = s.d;
    header["h"] = s.h;
    header["mask_id"] = s.mask_id;
    header["blocks"] = nlohmann::ordered_json::array({
        {{"name", "token_embeddings"}, {"shape", {s.vocab, s.d}}},
        {{"name", "position_embeddings"}, {"shape", {s.max_len, s.d}}},
        {{"name", "hidden_weight"}, {"shape", {s.in_dim(), s.h}}},
        {{"name", "hidden_bias"}, {"shape", {s.h}}},
        {{"name", "output_weight"}, {"shape", {s.h, s.vocab}}},
        {{"name", "output_bias"}, {"shape", {s.vocab}}},
    });
    header["count"] = params.size();
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u64_le(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : params.values()) write_u64_le(out, std::bit_cast<std::uint64_t>(v));
    require(static_cast<bool>(out), "failed writing " + path.string());
}

DenoiserParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot read " + path.string());
    char magic[8];
    in.read(magic, 8);
    require(in && std::memcmp(magic, kMagic, 8) == 0, "not a checkpoint: " + path.string());
    const std::uint64_t len = read_u64_le(in);
    require(len < (1u << 20), "checkpoint header too large");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    require(static_cast<bool>(in), "checkpoint truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint header: ") + e.what());
    }
    DenoiserShape s;
    try {
        s.vocab = header.at("vocab").get<int>();
        s.max_len = header.at("max_len").get<int>();
        s.d = header.at("d").get<int>();
        s.h = header.at("h").get<int>();
        s.mask_id = header.at("mask_id").get<TokenId>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint header: ") + e.what());
    }
    DenoiserParams params(s);
    require(header.value("count", std::size_t{0}) == params.size(), "checkpoint count mismatch");
    for (double& v : params.values()) v = std::bit_cast<double>(read_u64_le(in));
    return params;
}

}  // namespace mdmvar
