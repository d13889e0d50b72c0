#include "mdmvar/rng.hpp"

#include <cmath>
#include <numbers>

#include "mdmvar/error.hpp"

namespace mdmvar {

RngStream::RngStream(std::uint64_t root_seed) : root_(root_seed), key_(mix64(root_seed)) {}

RngStream RngStream::derive(std::string_view label, std::uint64_t index) const {
    require(!label.empty(), "RngStream::derive: label must be non-empty");
    RngStream child(*this);
    child.key_ = derive_key(key_, hash_label(label), index);
    child.counter_ = 0;
    child.path_.emplace_back(std::string(label), index);
    return child;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string RngStream::describe() const {
    std::string out = std::to_string(root_);
    for (const auto& [label, index] : path_) {
        out += '/';
        out += label;
        out += ':';
        out += std::to_string(index);
    }
    return out;
}

}  // namespace mdmvar
