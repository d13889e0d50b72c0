#pragma once

// A two-layer MLP masked-token predictor with hand-written gradients.
//
// For position i of a noised sequence x_t the input feature is
//   [ E[x_t(i)] + Pos[i] ; E[x_t(i-1)] ; E[x_t(i+1)] ; mean_{j unmasked} E[x_t(j)] ]   (4d)
// where a neighbour outside the sequence contributes zeros,
// followed by z = tanh(W1^T in + b1) and logits = W2^T z + b2.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mdmvar/corpus.hpp"
#include "mdmvar/masking.hpp"
#include "mdmvar/rng.hpp"

namespace mdmvar {

struct DenoiserShape {
    int vocab = 32;
    int max_len = 64;
    int d = 16;
    int h = 64;
    TokenId mask_id = 0;

    [[nodiscard]] std::size_t tok_offset() const noexcept { return 0; }
    [[nodiscard]] std::size_t pos_offset() const noexcept { return tok_offset() + std::size_t(vocab) * d; }
    [[nodiscard]] std::size_t w1_offset() const noexcept { return pos_offset() + std::size_t(max_len) * d; }
    [[nodiscard]] int in_dim() const noexcept { return 4 * d; }
    [[nodiscard]] std::size_t b1_offset() const noexcept { return w1_offset() + std::size_t(in_dim()) * h; }
    [[nodiscard]] std::size_t w2_offset() const noexcept { return b1_offset() + std::size_t(h); }
    [[nodiscard]] std::size_t b2_offset() const noexcept { return w2_offset() + std::size_t(h) * vocab; }
    [[nodiscard]] std::size_t count() const noexcept { return b2_offset() + std::size_t(vocab); }

    friend bool operator==(const DenoiserShape&, const DenoiserShape&) = default;
};

/// All weights in one flat buffer; the blocks are laid out in the order
/// token_embeddings [V x d], position_embeddings [L x d], hidden W1 [4d x h],
/// hidden bias [h], output W2 [h x V], output bias [V], each row-major.
class DenoiserParams {
public:
    DenoiserParams() = default;
    /// Zero-initialized.
    explicit DenoiserParams(const DenoiserShape& shape);

    /// Uniform(-scale, scale) entries drawn from `stream`.
    static DenoiserParams random(const DenoiserShape& shape, const RngStream& stream,
                                 double scale = 0.05);

    [[nodiscard]] const DenoiserShape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    double* tok(TokenId id) noexcept { return values_.data() + shape_.tok_offset() + std::size_t(id) * shape_.d; }
    const double* tok(TokenId id) const noexcept { return values_.data() + shape_.tok_offset() + std::size_t(id) * shape_.d; }
    double* pos(int i) noexcept { return values_.data() + shape_.pos_offset() + std::size_t(i) * shape_.d; }
    const double* pos(int i) const noexcept { return values_.data() + shape_.pos_offset() + std::size_t(i) * shape_.d; }
    double* w1() noexcept { return values_.data() + shape_.w1_offset(); }
    const double* w1() const noexcept { return values_.data() + shape_.w1_offset(); }
    double* b1() noexcept { return values_.data() + shape_.b1_offset(); }
    const double* b1() const noexcept { return values_.data() + shape_.b1_offset(); }
    double* w2() noexcept { return values_.data() + shape_.w2_offset(); }
    const double* w2() const noexcept { return values_.data() + shape_.w2_offset(); }
    double* b2() noexcept { return values_.data() + shape_.b2_offset(); }
    const double* b2() const noexcept { return values_.data() + shape_.b2_offset(); }

    void set_zero() noexcept;
    [[nodiscard]] bool all_finite() const noexcept;

    /// this += scale * other
    void axpy(double scale, const DenoiserParams& other);

    friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;

private:
    DenoiserShape shape_;
    std::vector<double> values_;
};

using Gradients = DenoiserParams;

/// Row-major [len x vocab] log-probabilities.
struct LogProbs {
    int len = 0;
    int vocab = 0;
    std::vector<double> values;

    [[nodiscard]] double at(int i, int v) const noexcept { return values[std::size_t(i) * vocab + v]; }
    [[nodiscard]] std::span<const double> row(int i) const noexcept {
        return {values.data() + std::size_t(i) * vocab, std::size_t(vocab)};
    }
};

/// Per-position log p(. | x_t). Throws ValidationError when xt is longer than max_len.
[[nodiscard]] LogProbs log_probs(const DenoiserParams& params, std::span<const TokenId> xt);

struct LossGrad {
    double loss = 0.0;
    Gradients grad;
};

/// l = -(1/(P t)) sum_{i masked} w_i log p(x0(i) | x_t) with P = pattern.num_eligible.
[[nodiscard]] double loss_only(const DenoiserParams& params, const TokenSeq& x0,
                               const MaskPattern& pattern);

[[nodiscard]] LossGrad loss_and_grad(const DenoiserParams& params, const TokenSeq& x0,
                                     const MaskPattern& pattern);

/// Adds scale * d(loss)/d(params) into `grad` and returns the loss.
double accumulate_loss_grad(const DenoiserParams& params, const TokenSeq& x0,
                            const MaskPattern& pattern, double scale, Gradients& grad);

/// params - lr * grad. Throws ValidationError for lr <= 0, NumericalError on non-finite grad.
[[nodiscard]] DenoiserParams sgd_step(const DenoiserParams& params, const Gradients& grad, double lr);

// Checkpoint layout: 8-byte magic "MDMVCKPT", little-endian u64 header length,
// a JSON header describing the shape and blocks, then count() little-endian
// IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& params);
[[nodiscard]] DenoiserParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mdmvar
