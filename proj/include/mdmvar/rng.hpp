#pragma once

// Counter-based random streams.
//
// A stream is identified by a root seed and a derivation path of
// (label, index) pairs. The path is hashed into a 64-bit key; the n-th draw
// of the stream is mix(key, n). Two streams with equal (root, path) produce
// identical sequences no matter which thread derives them or in which order,
// so per-sample randomness never depends on batch order.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mdmvar {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// FNV-1a over the label bytes.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t label_hash,
                                   std::uint64_t index) noexcept {
    return mix64(parent ^ mix64(label_hash + 0x9E3779B97F4A7C15ULL * (index + 1)));
}

/// Maps 64 random bits to a double in [0, 1) with 53 bits of resolution.
constexpr double bits_to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

class RngStream {
public:
    using PathEntry = std::pair<std::string, std::uint64_t>;

    explicit RngStream(std::uint64_t root_seed);

    /// Child stream at path + (label, index). Throws ValidationError on an empty label.
    [[nodiscard]] RngStream derive(std::string_view label, std::uint64_t index) const;

    /// First uniform of derive(label, index) without materializing the child.
    [[nodiscard]] double child_uniform(std::string_view label, std::uint64_t index) const noexcept {
        return bits_to_unit(mix64(derive_key(key_, hash_label(label), index) +
                                  0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(key_ + 0x9E3779B97F4A7C15ULL * counter_);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return bits_to_unit(next_u64()); }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() noexcept;

    [[nodiscard]] std::uint64_t root_seed() const noexcept { return root_; }
    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t position() const noexcept { return counter_; }
    [[nodiscard]] const std::vector<PathEntry>& path() const noexcept { return path_; }

    /// "42/mask:0/pos:3"
    [[nodiscard]] std::string describe() const;

    friend bool operator==(const RngStream& a, const RngStream& b) noexcept {
        return a.root_ == b.root_ && a.key_ == b.key_ && a.counter_ == b.counter_ &&
               a.path_ == b.path_;
    }

private:
    std::uint64_t root_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::vector<PathEntry> path_;
};

/// Fisher-Yates shuffle driven by a stream.
template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace mdmvar
