#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace omcast {

using Engine = std::mt19937_64;

/// Independent random streams inside one replication. Every draw is keyed by
/// (seed, stream, a, b) so the result does not depend on call order.
enum class Stream : std::uint64_t {
    channel = 1,
    csi_error = 2,
    traffic = 3,
    snr = 4,
    backoff = 5,
    session = 6,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept
{
    std::uint64_t h = mix64(seed);
    for (auto k : keys) {
        h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    }
    return h;
}

/// Counter-based SplitMix64 generator: cheap to construct, for draws that
/// need a fresh keyed stream each time (channel realizations).
class SplitMix {
public:
    using result_type = std::uint64_t;

    explicit SplitMix(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept
    {
        const auto out = mix64(state_);
        state_ += 0x9e3779b97f4a7c15ULL;
        return out;
    }

private:
    std::uint64_t state_;
};

inline SplitMix make_light_engine(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0)
{
    return SplitMix{derive_seed(seed, {static_cast<std::uint64_t>(stream), a, b})};
}

inline Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0)
{
    return Engine{derive_seed(seed, {static_cast<std::uint64_t>(stream), a, b})};
}

} // namespace omcast
