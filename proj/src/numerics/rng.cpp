#include "sapgnn/rng.hpp"

#include <cmath>
#include <numbers>

namespace sapgnn
{
    namespace
    {
        std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream)
        {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
            return std::mt19937_64(seq);
        }
    } // namespace

    Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

    double Rng::uniform()
    {
        // 53 random mantissa bits; does not depend on the standard library's distribution code.
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    std::uint64_t Rng::below(std::uint64_t n)
    {
        // Lemire-style rejection keeps the result unbiased.
        const std::uint64_t limit = (0 - n) % n;
        while (true)
        {
            const std::uint64_t x = engine_();
            if (x >= limit)
            {
                return x % n;
            }
        }
    }

    double Rng::normal()
    {
        // Box-Muller, one value per call.
        double u1 = uniform();
        while (u1 <= 0.0)
        {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    Rng Rng::fork(std::string_view tag) const
    {
        return Rng(seed_ ^ stable_hash(tag), stream_ * 0x9E37'79B9'7F4A'7C15ULL + 1);
    }

    std::uint64_t stable_hash(std::string_view s) noexcept
    {
        std::uint64_t h = 0xCBF2'9CE4'8422'2325ULL;
        for (const char c : s)
        {
            h ^= static_cast<unsigned char>(c);
            h *= 0x0000'0100'0000'01B3ULL;
        }
        return h;
    }

} // namespace sapgnn
