#include "sapgnn/mpc.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <bit>
#include <cmath>
#include <stdexcept>

namespace sapgnn
{
    namespace
    {
        void require_parties(std::size_t parties, std::size_t minimum, const char* who)
        {
            if (parties < minimum)
            {
                throw ShareError(std::string(who) + ": need at least " + std::to_string(minimum) + " parties");
            }
        }

        template <class S>
        void check_party_ids(std::span<const S> shares, std::size_t parties, const char* who)
        {
            if (shares.size() != parties)
            {
                throw ShareError(std::string(who) + ": expected " + std::to_string(parties) + " shares, got " +
                                 std::to_string(shares.size()));
            }
            std::vector<bool> seen(parties, false);
            for (const auto& s : shares)
            {
                if (s.party >= parties)
                {
                    throw ShareError(std::string(who) + ": party id " + std::to_string(s.party) + " out of range");
                }
                if (seen[s.party])
                {
                    throw ShareError(std::string(who) + ": duplicate party id " + std::to_string(s.party));
                }
                seen[s.party] = true;
            }
        }
    } // namespace

    FixedPoint FixedPoint::encode(double x, unsigned frac_bits)
    {
        if (frac_bits >= 63)
        {
            throw std::out_of_range("FixedPoint: too many fraction bits");
        }
        const double limit = std::ldexp(1.0, 63 - static_cast<int>(frac_bits));
        if (!std::isfinite(x) || std::abs(x) >= limit)
        {
            throw std::out_of_range("FixedPoint: value outside the representable range");
        }
        const auto scaled = static_cast<std::int64_t>(std::llround(std::ldexp(x, static_cast<int>(frac_bits))));
        return {static_cast<std::uint64_t>(scaled), frac_bits};
    }

    double FixedPoint::decode() const noexcept
    {
        return std::ldexp(static_cast<double>(signed_raw()), -static_cast<int>(frac_bits));
    }

    std::vector<AdditiveShare> share_additive(std::uint64_t secret, std::size_t parties, Rng& rng, Ring ring)
    {
        require_parties(parties, 2, "share_additive");
        std::vector<AdditiveShare> out(parties);
        std::uint64_t acc = 0;
        for (std::size_t p = 0; p + 1 < parties; ++p)
        {
            out[p] = {p, ring.reduce(rng.next_u64())};
            acc += out[p].value;
        }
        out.back() = {parties - 1, ring.reduce(secret - acc)};
        return out;
    }

    std::vector<AdditiveShare> share_additive(const FixedPoint& x, std::size_t parties, Rng& rng)
    {
        return share_additive(x.raw, parties, rng);
    }

    std::uint64_t reconstruct_additive(std::span<const AdditiveShare> shares, std::size_t parties, Ring ring)
    {
        check_party_ids(shares, parties, "reconstruct_additive");
        std::uint64_t acc = 0;
        for (const auto& s : shares)
        {
            acc += s.value;
        }
        return ring.reduce(acc);
    }

    FixedPoint reconstruct_fixed(std::span<const AdditiveShare> shares, std::size_t parties, unsigned frac_bits)
    {
        return {reconstruct_additive(shares, parties), frac_bits};
    }

    std::vector<RealShare> share_real(double x, std::size_t parties, Rng& rng)
    {
        require_parties(parties, 2, "share_real");
        std::vector<RealShare> out(parties);
        double acc = 0.0;
        for (std::size_t p = 0; p + 1 < parties; ++p)
        {
            out[p] = {p, rng.uniform(-1.0, 1.0)};
            acc += out[p].value;
        }
        out.back() = {parties - 1, x - acc};
        return out;
    }

    double reconstruct_real(std::span<const RealShare> shares, std::size_t parties)
    {
        check_party_ids(shares, parties, "reconstruct_real");
        std::vector<double> by_party(parties);
        for (const auto& s : shares)
        {
            by_party[s.party] = s.value;
        }
        double acc = 0.0;
        for (const double v : by_party)
        {
            acc += v;
        }
        return acc;
    }

    std::vector<BooleanShare> share_boolean(std::span<const std::uint8_t> bits, std::size_t parties, Rng& rng)
    {
        require_parties(parties, 1, "share_boolean");
        std::vector<BooleanShare> out(parties);
        std::vector<std::uint8_t> acc(bits.begin(), bits.end());
        for (auto& b : acc)
        {
            if (b > 1)
            {
                throw ShareError("share_boolean: secret entries must be 0 or 1");
            }
        }
        for (std::size_t p = 0; p + 1 < parties; ++p)
        {
            out[p].party = p;
            out[p].bits.resize(bits.size());
            std::uint64_t word = 0;
            for (std::size_t i = 0; i < bits.size(); ++i)
            {
                if (i % 64 == 0)
                {
                    word = rng.next_u64();
                }
                out[p].bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1U);
                acc[i] ^= out[p].bits[i];
            }
        }
        out.back() = {parties - 1, std::move(acc)};
        return out;
    }

    std::vector<std::uint8_t> reconstruct_boolean(std::span<const BooleanShare> shares, std::size_t parties)
    {
        check_party_ids(shares, parties, "reconstruct_boolean");
        std::vector<std::uint8_t> out(shares.front().bits.size(), 0);
        for (const auto& s : shares)
        {
            if (s.bits.size() != out.size())
            {
                throw ShareError("reconstruct_boolean: shares differ in length");
            }
            for (std::size_t i = 0; i < out.size(); ++i)
            {
                out[i] ^= s.bits[i];
            }
        }
        return out;
    }

    std::uint64_t order_key(double x) noexcept
    {
        const auto u = std::bit_cast<std::uint64_t>(x);
        return (u >> 63) != 0 ? ~u : u | (std::uint64_t{1} << 63);
    }

    double from_order_key(std::uint64_t k) noexcept
    {
        const std::uint64_t u = (k >> 63) != 0 ? k & ~(std::uint64_t{1} << 63) : ~k;
        return std::bit_cast<double>(u);
    }

    ChiSquare chi_square_uniform(std::span<const std::size_t> counts, double alpha)
    {
        if (counts.size() < 2)
        {
            throw std::invalid_argument("chi_square_uniform: need at least two buckets");
        }
        double total = 0.0;
        for (const auto c : counts)
        {
            total += static_cast<double>(c);
        }
        const double expected = total / static_cast<double>(counts.size());
        ChiSquare r;
        for (const auto c : counts)
        {
            const double d = static_cast<double>(c) - expected;
            r.statistic += d * d / expected;
        }
        const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
        r.critical = boost::math::quantile(boost::math::complement(dist, alpha));
        r.uniform = r.statistic <= r.critical;
        return r;
    }

} // namespace sapgnn
