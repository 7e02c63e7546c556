#include "sapgnn/mpc.hpp"

namespace sapgnn
{
    std::vector<BooleanShare> secure_argmax(std::span<const FixedPoint> values, Rng& rng, AuditLog& log)
    {
        const std::size_t P = values.size();
        if (P < 2)
        {
            throw ShareError("secure_argmax: need at least 2 parties");
        }

        // Inputs cross into the evaluator only as additive shares.
        std::vector<std::vector<AdditiveShare>> submitted;
        for (std::size_t p = 0; p < P; ++p)
        {
            submitted.push_back(share_additive(values[p], P, rng));
            log.append({.from = holder_party(p),
                        .to = kSecureMaxParty,
                        .kind = "EmbeddingShares",
                        .schema = "u64[" + std::to_string(P) + "]",
                        .bytes = 8 * P});
        }

        // Inside the boundary.
        std::size_t best = 0;
        std::int64_t best_raw = 0;
        for (std::size_t p = 0; p < P; ++p)
        {
            const auto raw = static_cast<std::int64_t>(reconstruct_additive(submitted[p], P));
            if (p == 0 || raw > best_raw)
            {
                best = p;
                best_raw = raw;
            }
        }
        std::vector<std::uint8_t> one_hot(P, 0);
        one_hot[best] = 1;
        auto shares = share_boolean(one_hot, P, rng);

        for (std::size_t p = 0; p < P; ++p)
        {
            log.append({.from = kSecureMaxParty,
                        .to = holder_party(p),
                        .kind = "IndexShares",
                        .schema = "bit[" + std::to_string(P) + "]",
                        .bytes = P});
        }
        return shares;
    }

    std::vector<std::vector<std::uint64_t>> share_order_keys(const Matrix& t, std::size_t parties, Rng& rng)
    {
        if (parties == 0)
        {
            throw ShareError("share_order_keys: need at least 1 party");
        }
        std::vector<std::vector<std::uint64_t>> out(parties, std::vector<std::uint64_t>(t.size()));
        for (std::size_t e = 0; e < t.size(); ++e)
        {
            const std::uint64_t key = order_key(t.data()[e]);
            if (parties == 1)
            {
                out[0][e] = key;
                continue;
            }
            const auto s = share_additive(key, parties, rng);
            for (std::size_t j = 0; j < parties; ++j)
            {
                out[j][e] = s[j].value;
            }
        }
        return out;
    }

    SecureMaxEvaluator::SecureMaxEvaluator(std::uint64_t seed, std::size_t holders)
        : holders_(holders), rng_(seed, stable_hash(kSecureMaxParty)), lists_(holders)
    {
        if (holders == 0)
        {
            throw std::invalid_argument("SecureMaxEvaluator: need at least one holder");
        }
    }

    void SecureMaxEvaluator::register_holder(std::size_t holder, std::vector<Digest> digests)
    {
        if (holder >= holders_)
        {
            throw std::invalid_argument("SecureMaxEvaluator: holder id out of range");
        }
        lists_[holder] = std::move(digests);
        build_universe();
    }

    void SecureMaxEvaluator::build_universe()
    {
        auto layout = align_universe(lists_);
        universe_ = std::move(layout.digests);
        row_of_ = std::move(layout.row_of);
    }

    PoolingOutput SecureMaxEvaluator::pool(std::span<const PoolingInput> inputs, std::size_t cols)
    {
        if (inputs.size() != holders_)
        {
            throw std::invalid_argument("SecureMaxEvaluator::pool: expected one input per holder");
        }
        const std::size_t N = universe_.size();
        std::vector<Matrix> stacks_t(holders_, Matrix(N, cols, kNegInf));
        std::vector<std::vector<RowState>> stacks_state(holders_, std::vector<RowState>(N, RowState::Absent));
        for (const auto& in : inputs)
        {
            const std::size_t p = in.holder;
            const std::size_t rows = row_of_.at(p).size();
            if (in.state.size() != rows || in.key_shares.size() != holders_)
            {
                throw std::invalid_argument("SecureMaxEvaluator::pool: malformed input from " + holder_party(p));
            }
            for (const auto& s : in.key_shares)
            {
                if (s.size() != rows * cols)
                    throw std::invalid_argument("SecureMaxEvaluator::pool: share length mismatch");
            }
            for (std::size_t i = 0; i < rows; ++i)
            {
                const std::size_t u = row_of_[p][i];
                stacks_state[p][u] = in.state[i];
                for (std::size_t c = 0; c < cols; ++c)
                {
                    std::uint64_t key = 0;
                    for (const auto& s : in.key_shares)
                        key += s[i * cols + c];
                    stacks_t[p](u, c) = from_order_key(key);
                }
            }
        }

        std::vector<LocalStack> stacks;
        for (std::size_t p = 0; p < holders_; ++p)
        {
            stacks.push_back({&stacks_t[p], &stacks_state[p]});
        }
        PoolingOutput out;
        std::vector<std::uint32_t> winner;
        pool_max(stacks, out.pooled, winner);

        std::vector<std::uint8_t> one_hot(winner.size() * holders_, 0);
        for (std::size_t e = 0; e < winner.size(); ++e)
        {
            one_hot[e * holders_ + winner[e]] = 1;
        }
        out.index_shares = share_boolean(one_hot, holders_, rng_);
        return out;
    }

} // namespace sapgnn
