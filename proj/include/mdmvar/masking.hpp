#pragma once

// Mask-pattern samplers. Every sampler reads position i's uniform from the
// child stream derive("u", i) of the stream it is handed, so a pattern is a
// pure function of (eligible set, t, stream).

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdmvar/corpus.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

enum class MaskScheme { standard, mirror_a, mirror_b, multisample, isad };

[[nodiscard]] std::string_view to_string(MaskScheme s) noexcept;

struct MaskPattern {
    double t = 1.0;
    /// Sorted masked positions, a subset of the eligible set.
    std::vector<int> masked;
    /// Per-masked-position loss weight, aligned with `masked`. Empty means all 1.
    std::vector<double> token_weights;
    /// Size of the eligible set the pattern was drawn from (P in the loss normalizer).
    int num_eligible = 0;
    MaskScheme scheme = MaskScheme::standard;

    [[nodiscard]] double weight_at(std::size_t k) const noexcept {
        return token_weights.empty() ? 1.0 : token_weights[k];
    }
    [[nodiscard]] bool contains(int pos) const noexcept;
};

/// Position i masked iff U_i < t.
[[nodiscard]] MaskPattern mask_standard(const std::vector<int>& eligible, double t,
                                        const RngStream& stream);

/// Same U_i for both patterns: A masks U_i < t, B masks U_i > 1 - t.
[[nodiscard]] std::pair<MaskPattern, MaskPattern> mask_mirror(const std::vector<int>& eligible,
                                                              double t, const RngStream& stream);

/// k patterns with independent uniforms (pattern j reads derive("ms", j)).
[[nodiscard]] std::vector<MaskPattern> mask_multisample(const std::vector<int>& eligible, double t,
                                                        int k, const RngStream& stream);

/// Delimiter-boosted masking: rare positions are masked with q = min(1, t + delta)
/// and carry token weight t / q so the 1/(P t) normalizer becomes 1/(P q).
[[nodiscard]] MaskPattern mask_isad(const TokenSeq& seq, const std::vector<int>& eligible, double t,
                                    double delta, const RngStream& stream);

/// The clean sequence with masked positions replaced by mask_id.
[[nodiscard]] std::vector<TokenId> apply_mask(const TokenSeq& seq, const MaskPattern& pattern,
                                              TokenId mask_id);

/// Parsed `masking = standard|mirror|multisample:k|isad[:delta]` config value.
struct MaskingSpec {
    enum class Kind { standard, mirror, multisample, isad } kind = Kind::standard;
    int k = 1;
    double delta = 0.2;

    /// Model evaluations per training sample.
    [[nodiscard]] int evaluations() const noexcept {
        return kind == Kind::mirror ? 2 : kind == Kind::multisample ? k : 1;
    }
    [[nodiscard]] std::string str() const;
};

[[nodiscard]] MaskingSpec parse_masking(std::string_view spec);

}  // namespace mdmvar
