#include "sapgnn/mpc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace sapgnn;

TEST(FixedPoint, RoundTripWithinResolution)
{
    const auto pi = FixedPoint::encode(std::numbers::pi);
    EXPECT_LE(std::abs(pi.decode() - std::numbers::pi), std::ldexp(1.0, -20));
    EXPECT_EQ(FixedPoint::encode(-1.5).decode(), -1.5);
    EXPECT_EQ(FixedPoint::encode(-1.5).signed_raw(), -(3 << 19));
    EXPECT_THROW(FixedPoint::encode(std::ldexp(1.0, 43)), std::out_of_range);
    EXPECT_NO_THROW(FixedPoint::encode(std::ldexp(1.0, 42)));
}

TEST(Additive, ZeroSharesSumToZero)
{
    Rng rng(1, 1);
    for (std::size_t P = 2; P <= 5; ++P)
    {
        const auto s = share_additive(std::uint64_t{0}, P, rng);
        EXPECT_EQ(reconstruct_additive(s, P), 0u);
    }
}

TEST(Additive, ToyRingHandExample)
{
    const std::vector<AdditiveShare> s{{0, 200}, {1, 61}};
    EXPECT_EQ(reconstruct_additive(s, 2, Ring{8}), 5u);
}

TEST(Additive, RoundTripsExactly)
{
    Rng rng(7, 1);
    for (std::size_t P = 2; P <= 8; ++P)
        for (int i = 0; i < 2000; ++i)
        {
            const std::uint64_t x = rng.next_u64();
            EXPECT_EQ(reconstruct_additive(share_additive(x, P, rng), P), x);
        }
}

TEST(Additive, ToyRingExhaustive)
{
    Rng rng(3, 3);
    for (std::size_t P = 2; P <= 4; ++P)
        for (std::uint64_t x = 0; x < 256; ++x)
        {
            const auto s = share_additive(x, P, rng, Ring{8});
            for (const auto& sh : s)
                EXPECT_LT(sh.value, 256u);
            EXPECT_EQ(reconstruct_additive(s, P, Ring{8}), x);
        }
}

TEST(Additive, FlippedBitGivesWrongSecret)
{
    Rng rng(2, 2);
    auto s = share_additive(FixedPoint::encode(2.5), 3, rng);
    s[1].value ^= 1U << 5;
    EXPECT_NE(reconstruct_fixed(s, 3).decode(), 2.5);
}

TEST(Additive, Homomorphic)
{
    Rng rng(5, 5);
    const auto a = share_additive(std::uint64_t{123456789}, 3, rng);
    const auto b = share_additive(~std::uint64_t{0}, 3, rng);
    std::vector<AdditiveShare> c;
    for (std::size_t i = 0; i < 3; ++i)
        c.push_back({i, a[i].value + b[i].value});
    EXPECT_EQ(reconstruct_additive(c, 3), 123456788u);
}

TEST(Additive, PartyIdErrors)
{
    Rng rng(1, 1);
    EXPECT_THROW(share_additive(std::uint64_t{1}, 1, rng), ShareError);
    auto s = share_additive(std::uint64_t{1}, 3, rng);
    auto dup = s;
    dup[2].party = 0;
    EXPECT_THROW(reconstruct_additive(dup, 3), ShareError);
    s.pop_back();
    EXPECT_THROW(reconstruct_additive(s, 3), ShareError);
}

TEST(Additive, ShareMarginalsLookUniform)
{
    Rng rng(11, 1);
    for (const Ring ring : {Ring{64}, Ring{8}})
    {
        std::vector<std::vector<std::size_t>> counts(2, std::vector<std::size_t>(256));
        for (int i = 0; i < 100000; ++i)
        {
            const auto s = share_additive(std::uint64_t{42}, 3, rng, ring);
            for (std::size_t p = 0; p < 2; ++p)
                ++counts[p][ring.bits == 64 ? s[p].value >> 56 : s[p].value];
        }
        for (const auto& c : counts)
            EXPECT_TRUE(chi_square_uniform(c, 0.01).uniform);
    }
}

TEST(ChiSquare, RejectsSkewedCounts)
{
    std::vector<std::size_t> c(256, 100);
    c[0] = 400;
    const auto r = chi_square_uniform(c, 0.01);
    EXPECT_NEAR(r.critical, 310.457, 0.01);
    EXPECT_FALSE(r.uniform);
}

TEST(RealShares, RoundTripClosely)
{
    Rng rng(1, 9);
    for (int i = 0; i < 100; ++i)
    {
        const double x = rng.normal();
        EXPECT_NEAR(reconstruct_real(share_real(x, 4, rng), 4), x, 1e-14);
    }
}

TEST(Boolean, XorReconstructsAndRerandomizes)
{
    Rng rng(4, 4);
    const std::vector<std::uint8_t> secret{1, 0, 1, 1, 0, 0, 1};
    const auto a = share_boolean(secret, 3, rng);
    const auto b = share_boolean(secret, 3, rng);
    EXPECT_EQ(reconstruct_boolean(a, 3), secret);
    EXPECT_EQ(reconstruct_boolean(b, 3), secret);
    EXPECT_NE(a[0].bits, b[0].bits);
}

TEST(OrderKey, PreservesOrderAndRoundTrips)
{
    const std::vector<double> xs{kNegInf, -1e300, -2.5, -0.0, 0.0, 1e-300, 3.0, 1e300};
    for (std::size_t i = 0; i < xs.size(); ++i)
    {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(from_order_key(order_key(xs[i]))), std::bit_cast<std::uint64_t>(xs[i]));
        if (i > 0)
        {
            EXPECT_LT(order_key(xs[i - 1]), order_key(xs[i]));
        }
    }
}

TEST(SecureAggregate, ZeroVectorsSumToZero)
{
    Rng rng(1, 1);
    const std::vector<std::vector<double>> v(3, std::vector<double>(5, 0.0));
    const auto r = secure_aggregate(v, rng);
    for (const auto& t : r.totals)
        for (const double x : t)
            EXPECT_EQ(x, 0.0);
}

TEST(SecureAggregate, DyadicValuesAreExact)
{
    Rng rng(1, 2);
    const std::vector<std::vector<double>> v{{1.5, -3.0}, {2.25, 0.125}};
    const auto r = secure_aggregate(v, rng);
    for (const auto& t : r.totals)
    {
        EXPECT_EQ(t[0], 3.75);
        EXPECT_EQ(t[1], -2.875);
    }
}

TEST(SecureAggregate, MatchesPlaintextSumAndTotalsAgree)
{
    Rng rng(8, 8);
    std::vector<std::vector<double>> v(4, std::vector<double>(64));
    for (auto& x : v)
        for (double& e : x)
            e = rng.uniform(-10.0, 10.0);
    for (const auto mode : {ShareMode::FixedPoint, ShareMode::Real})
    {
        const auto r = secure_aggregate(v, rng, {.mode = mode});
        for (std::size_t k = 0; k < 64; ++k)
        {
            const double plain = v[0][k] + v[1][k] + v[2][k] + v[3][k];
            EXPECT_NEAR(r.totals[0][k], plain, mode == ShareMode::Real ? 1e-12 : 4 * std::ldexp(1.0, -20));
        }
        for (const auto& t : r.totals)
            EXPECT_EQ(t, r.totals[0]);
        // P(P-1) share vectors plus P(P-1) partial sums
        EXPECT_EQ(r.words_sent, 2u * 4u * 3u * 64u);
        for (const auto& rec : r.log.records())
        {
            EXPECT_NE(rec.to, kServerParty);
            EXPECT_FALSE(rec.plaintext);
        }
    }
}

TEST(SecureAggregate, OppositeVectorsCancel)
{
    Rng rng(3, 1);
    const std::vector<std::vector<double>> v{{0.7, -2.0}, {-0.7, 2.0}};
    const auto r = secure_aggregate(v, rng);
    EXPECT_EQ(r.totals[0], (std::vector<double>{0.0, 0.0}));
}

TEST(SecureAggregate, LengthMismatchThrows)
{
    Rng rng(3, 1);
    const std::vector<std::vector<double>> v{{1.0}, {1.0, 2.0}};
    EXPECT_THROW(secure_aggregate(v, rng), std::invalid_argument);
}

TEST(SecureArgmax, HandExamplesAndTies)
{
    Rng rng(1, 1);
    AuditLog log;
    const std::vector<FixedPoint> v{FixedPoint::encode(3.0), FixedPoint::encode(7.0), FixedPoint::encode(1.0)};
    EXPECT_EQ(reconstruct_boolean(secure_argmax(v, rng, log), 3), (std::vector<std::uint8_t>{0, 1, 0}));
    const std::vector<FixedPoint> tie{FixedPoint::encode(5.0), FixedPoint::encode(5.0)};
    EXPECT_EQ(reconstruct_boolean(secure_argmax(tie, rng, log), 2), (std::vector<std::uint8_t>{1, 0}));
    const std::vector<FixedPoint> one{FixedPoint::encode(5.0)};
    EXPECT_THROW(secure_argmax(one, rng, log), ShareError);
    for (const auto& r : log.records())
    {
        EXPECT_FALSE(r.plaintext);
        EXPECT_TRUE(r.kind == "EmbeddingShares" || r.kind == "IndexShares");
    }
}

TEST(SecureArgmax, NegativeValuesCompareSigned)
{
    Rng rng(1, 2);
    AuditLog log;
    const std::vector<FixedPoint> v{FixedPoint::encode(-3.0), FixedPoint::encode(-0.5), FixedPoint::encode(-7.0)};
    EXPECT_EQ(reconstruct_boolean(secure_argmax(v, rng, log), 3), (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(SecureMaxEvaluator, PoolsLikePlaintext)
{
    Rng rng(6, 6);
    const Salt salt = salt_from_seed(1);
    // holder 0 holds ids 0..4, holder 1 holds ids 3..7
    std::vector<std::vector<Digest>> lists(2);
    for (NodeId i = 0; i < 5; ++i)
        lists[0].push_back(node_digest(salt, i));
    for (NodeId i = 3; i < 8; ++i)
        lists[1].push_back(node_digest(salt, i));
    SecureMaxEvaluator ev(9, 2);
    ev.register_holder(0, lists[0]);
    ev.register_holder(1, lists[1]);
    EXPECT_EQ(ev.universe_size(), 8u);

    std::vector<Matrix> t;
    std::vector<PoolingInput> inputs;
    for (std::size_t p = 0; p < 2; ++p)
    {
        Matrix m(5, 3);
        for (double& x : m.data())
            x = rng.normal();
        t.push_back(m);
        inputs.push_back({p, std::vector<RowState>(5, RowState::Aggregated), share_order_keys(m, 2, rng)});
    }
    const auto out = ev.pool(inputs, 3);

    const auto layout = align_universe(lists);
    Matrix expect(8, 3, kNegInf);
    for (std::size_t p = 0; p < 2; ++p)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t c = 0; c < 3; ++c)
            {
                double& e = expect(layout.row_of[p][i], c);
                e = std::max(e, t[p](i, c));
            }
    EXPECT_EQ(out.pooled, expect);
    const auto one_hot = reconstruct_boolean(out.index_shares, 2);
    ASSERT_EQ(one_hot.size(), 8u * 3u * 2u);
    for (std::size_t e = 0; e < 24; ++e)
        EXPECT_EQ(one_hot[2 * e] + one_hot[2 * e + 1], 1);
}
