#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sapgnn
{
    /// Stream id used by the server (holders use their holder index).
    inline constexpr std::uint64_t kServerStream = 0xFFFF'FFFF'FFFF'0001ULL;

    /// Seeded random stream. Identical (seed, stream) pairs produce identical draw sequences.
    class Rng
    {
    public:
        Rng(std::uint64_t seed, std::uint64_t stream);

        std::uint64_t seed() const noexcept { return seed_; }
        std::uint64_t stream() const noexcept { return stream_; }

        std::uint64_t next_u64() { return engine_(); }
        /// Uniform in [0, 1).
        double uniform();
        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
        /// Uniform integer in [0, n).
        std::uint64_t below(std::uint64_t n);
        double normal();
        bool bernoulli(double p) { return uniform() < p; }

        /// Independent child stream, stable in (seed, stream, tag).
        Rng fork(std::string_view tag) const;

        std::mt19937_64& engine() noexcept { return engine_; }

    private:
        std::uint64_t seed_;
        std::uint64_t stream_;
        std::mt19937_64 engine_;
    };

    /// FNV-1a over the bytes of `s`; stable across platforms and runs.
    std::uint64_t stable_hash(std::string_view s) noexcept;

} // namespace sapgnn
