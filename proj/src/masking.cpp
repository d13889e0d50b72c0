#include "mdmvar/masking.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "mdmvar/error.hpp"

namespace mdmvar {

namespace {

void check_rate(double t) {
    require(t > 0.0 && t <= 1.0, "masking rate t must lie in (0, 1]");
}

double position_uniform(const RngStream& stream, int pos) {
    return stream.child_uniform("u", static_cast<std::uint64_t>(pos));
}

MaskPattern empty_pattern(const std::vector<int>& eligible, double t, MaskScheme scheme) {
    MaskPattern p;
    p.t = t;
    p.num_eligible = static_cast<int>(eligible.size());
    p.scheme = scheme;
    return p;
}

}  // namespace

std::string_view to_string(MaskScheme s) noexcept {
    switch (s) {
        case MaskScheme::standard: return "standard";
        case MaskScheme::mirror_a: return "mirror_a";
        case MaskScheme::mirror_b: return "mirror_b";
        case MaskScheme::multisample: return "multisample";
        case MaskScheme::isad: return "isad";
    }
    return "?";
}

bool MaskPattern::contains(int pos) const noexcept {
    return std::binary_search(masked.begin(), masked.end(), pos);
}

MaskPattern mask_standard(const std::vector<int>& eligible, double t, const RngStream& stream) {
    check_rate(t);
    MaskPattern p = empty_pattern(eligible, t, MaskScheme::standard);
    for (int pos : eligible) {
        if (position_uniform(stream, pos) < t) p.masked.push_back(pos);
    }
    return p;
}

std::pair<MaskPattern, MaskPattern> mask_mirror(const std::vector<int>& eligible, double t,
                                                const RngStream& stream) {
    check_rate(t);
    MaskPattern a = empty_pattern(eligible, t, MaskScheme::mirror_a);
    MaskPattern b = empty_pattern(eligible, t, MaskScheme::mirror_b);
    for (int pos : eligible) {
        const double u = position_uniform(stream, pos);
        if (u < t) a.masked.push_back(pos);
        if (u > 1.0 - t) b.masked.push_back(pos);
    }
    return {std::move(a), std::move(b)};
}

std::vector<MaskPattern> mask_multisample(const std::vector<int>& eligible, double t, int k,
                                          const RngStream& stream) {
    require(k >= 1, "multisample: k must be >= 1");
    check_rate(t);
    std::vector<MaskPattern> out;
    out.reserve(k);
    for (int j = 0; j < k; ++j) {
        MaskPattern p = mask_standard(eligible, t, stream.derive("ms", j));
        p.scheme = MaskScheme::multisample;
        out.push_back(std::move(p));
    }
    return out;
}

MaskPattern mask_isad(const TokenSeq& seq, const std::vector<int>& eligible, double t, double delta,
                      const RngStream& stream) {
    check_rate(t);
    require(delta > 0.0 && delta < 1.0, "isad: delta must lie in (0, 1)");
    MaskPattern p = empty_pattern(eligible, t, MaskScheme::isad);
    const double q_rare = std::min(1.0, t + delta);
    for (int pos : eligible) {
        const bool rare = std::binary_search(seq.rare_positions.begin(), seq.rare_positions.end(), pos);
        const double q = rare ? q_rare : t;
        if (position_uniform(stream, pos) < q) {
            p.masked.push_back(pos);
            p.token_weights.push_back(rare ? t / q : 1.0);
        }
    }
    return p;
}

std::vector<TokenId> apply_mask(const TokenSeq& seq, const MaskPattern& pattern, TokenId mask_id) {
    std::vector<TokenId> xt = seq.tokens;
    for (int pos : pattern.masked) xt[pos] = mask_id;
    return xt;
}

std::string MaskingSpec::str() const {
    switch (kind) {
        case Kind::standard: return "standard";
        case Kind::mirror: return "mirror";
        case Kind::multisample: return "multisample:" + std::to_string(k);
        case Kind::isad: {
            std::ostringstream ss;
            ss.precision(17);
            ss << "isad:" << delta;
            return ss.str();
        }
    }
    return "?";
}

MaskingSpec parse_masking(std::string_view spec) {
    MaskingSpec m;
    const auto colon = spec.find(':');
    const std::string_view head = spec.substr(0, colon);
    const std::string_view arg = colon == std::string_view::npos ? "" : spec.substr(colon + 1);
    if (head == "standard" && arg.empty()) {
        m.kind = MaskingSpec::Kind::standard;
    } else if (head == "mirror" && arg.empty()) {
        m.kind = MaskingSpec::Kind::mirror;
    } else if (head == "multisample") {
        m.kind = MaskingSpec::Kind::multisample;
        int k = 0;
        auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
        require(ec == std::errc{} && ptr == arg.data() + arg.size() && k >= 1,
                "masking: multisample needs an integer k >= 1");
        m.k = k;
    } else if (head == "isad") {
        m.kind = MaskingSpec::Kind::isad;
        if (!arg.empty()) {
            try {
                std::size_t used = 0;
                m.delta = std::stod(std::string(arg), &used);
                require(used == arg.size(), "masking: bad isad delta");
            } catch (const std::logic_error&) {
                throw ValidationError("masking: bad isad delta");
            }
        }
        require(m.delta > 0.0 && m.delta < 1.0, "masking: isad delta must lie in (0, 1)");
    } else {
        throw ValidationError("unknown masking scheme: " + std::string(spec));
    }
    return m;
}

}  // namespace mdmvar
