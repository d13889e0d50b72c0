#pragma once

// Synthetic prompt/response corpora.
//
// Token layout for a vocabulary of size V:
//   0            [MASK]
//   1            answer delimiter (rare)
//   2..5         prompt syntax tokens
//   6..V-1       ordinary tokens
//
// A prompt holds two seed tokens (positions 0 and 1) followed by ordinary
// filler with 2-4 syntax tokens scattered through it. The response is a
// modular chain over the ordinary sub-vocabulary,
//   c[0] = (o(p0) + step) mod K,  c[k+1] = (c[k] + step) mod K,
//   step = 1 + o(p1) mod 2,
// where o() is the ordinary offset and K the number of ordinary ids. The last
// two response slots are the delimiter and the answer (the next chain value).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mdmvar/rng.hpp"

namespace mdmvar {

using TokenId = std::int32_t;

struct Vocab {
    int size = 32;
    TokenId mask_id = 0;
    std::vector<TokenId> delimiter_ids{1};
    std::vector<TokenId> syntax_ids{2, 3, 4, 5};

    [[nodiscard]] TokenId first_ordinary() const noexcept { return 6; }
    [[nodiscard]] int num_ordinary() const noexcept { return size - first_ordinary(); }
    [[nodiscard]] bool is_delimiter(TokenId id) const noexcept;
    [[nodiscard]] bool is_syntax(TokenId id) const noexcept;
    [[nodiscard]] bool is_ordinary(TokenId id) const noexcept {
        return id >= first_ordinary() && id < size;
    }

    /// Throws ValidationError when the id classes overlap or size is too small.
    void validate() const;
};

struct TokenSeq {
    std::vector<TokenId> tokens;
    int prompt_len = 0;
    /// Absolute positions inside the prompt holding syntax ids.
    std::vector<int> syntax_positions;
    /// Absolute positions inside the response holding delimiter ids.
    std::vector<int> rare_positions;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(tokens.size()); }
    [[nodiscard]] int response_len() const noexcept { return size() - prompt_len; }
};

using Corpus = std::vector<TokenSeq>;

enum class EligibilityMode { pretrain, sft, syrm };

[[nodiscard]] EligibilityMode parse_eligibility(std::string_view name);
[[nodiscard]] std::string_view to_string(EligibilityMode mode) noexcept;

/// Sequence `index` of a corpus; depends only on (stream, index).
[[nodiscard]] TokenSeq generate_sequence(const Vocab& vocab, int seq_len, const RngStream& stream,
                                         std::uint64_t index);

[[nodiscard]] Corpus generate_corpus(const Vocab& vocab, int n, int seq_len,
                                     const RngStream& stream);

/// Sorted positions that may be masked under `mode`.
[[nodiscard]] std::vector<int> eligibility(const TokenSeq& seq, EligibilityMode mode);

/// Checks the TokenSeq invariants against a vocabulary.
void validate_sequence(const TokenSeq& seq, const Vocab& vocab);

// Line-delimited corpus files: a header row, then one tab-separated record per
// sequence with space-separated id lists.
//   tokens  prompt_len  syntax_positions  rare_positions
void write_corpus(std::ostream& out, const Corpus& corpus);
[[nodiscard]] Corpus read_corpus(std::istream& in);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
[[nodiscard]] Corpus load_corpus(const std::filesystem::path& path);

}  // namespace mdmvar
