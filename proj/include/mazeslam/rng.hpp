#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace mazeslam {

/// Counter-based random stream. Every stream is identified by a key derived
/// from (master seed, stream tag, index); the i-th draw is a pure function of
/// (key, i), so streams never depend on the order in which they are created.
class Rng {
public:
    using result_type = std::uint64_t;

    Rng() = default;
    explicit Rng(std::uint64_t key) noexcept : key_(key) {}

    /// Stream for tag/index under a master seed.
    static Rng stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) noexcept {
        return Rng(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ mix(tag + 0x3c6ef372fe94f82bULL) ^
                       mix(index * 0x9e3779b97f4a7c15ULL + 0xbb67ae8584caa73bULL)));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes exactly two raw draws, no caching.
    double gaussian() noexcept;

    /// N(0, sigma²). Always consumes the draws, even for sigma == 0, so the
    /// stream position never depends on noise settings.
    double gaussian(double sigma) noexcept {
        const double g = gaussian();
        return sigma == 0.0 ? 0.0 : sigma * g;
    }

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_{0};
    std::uint64_t counter_{0};
};

/// FNV-1a; turns stream names into tags.
constexpr std::uint64_t stream_tag(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mazeslam
