#include "sapgnn/mpc.hpp"

#include <bit>

namespace sapgnn
{
    const char* to_string(ShareMode m) noexcept
    {
        return m == ShareMode::Real ? "real" : "fixed-point";
    }

    ShareMode share_mode_from_string(const std::string& s)
    {
        if (s == "real")
            return ShareMode::Real;
        if (s == "fixed-point")
            return ShareMode::FixedPoint;
        throw std::invalid_argument("unknown share mode '" + s + "'");
    }

    void MemoryShareChannel::send(std::size_t from, std::size_t to, ShareStage stage, std::vector<std::uint64_t> words)
    {
        words_sent_ += words.size();
        if (log_ != nullptr)
        {
            AuditRecord r;
            r.from = holder_party(from);
            r.to = holder_party(to);
            r.kind = stage == ShareStage::GradShare ? "GradShare" : "PartialSum";
            r.schema = "u64[" + std::to_string(words.size()) + "]";
            r.bytes = 8 * words.size();
            log_->append(std::move(r));
        }
        boxes_[{from, to, stage}].push_back(std::move(words));
    }

    std::vector<std::uint64_t> MemoryShareChannel::receive(std::size_t to, std::size_t from, ShareStage stage)
    {
        auto it = boxes_.find({from, to, stage});
        if (it == boxes_.end() || it->second.empty())
        {
            throw std::runtime_error("MemoryShareChannel: nothing to receive from " + holder_party(from));
        }
        auto words = std::move(it->second.front());
        it->second.pop_front();
        return words;
    }

    std::vector<std::vector<double>> secure_aggregate(std::span<const std::vector<double>> local_values,
                                                      std::span<Rng> holder_rngs, ShareChannel& channel,
                                                      const AggregateOptions& opts)
    {
        const std::size_t P = local_values.size();
        if (P == 0 || holder_rngs.size() != P)
        {
            throw std::invalid_argument("secure_aggregate: need one value vector and one rng per holder");
        }
        const std::size_t n = local_values.front().size();
        for (const auto& v : local_values)
        {
            if (v.size() != n)
            {
                throw std::invalid_argument("secure_aggregate: vector length mismatch");
            }
        }
        if (P == 1)
        {
            return {local_values.front()};
        }
        const bool real = opts.mode == ShareMode::Real;

        // held[j][i] = share that holder i produced for holder j
        std::vector<std::vector<std::vector<std::uint64_t>>> held(P, std::vector<std::vector<std::uint64_t>>(P));
        for (std::size_t i = 0; i < P; ++i)
        {
            std::vector<std::vector<std::uint64_t>> out(P, std::vector<std::uint64_t>(n));
            for (std::size_t k = 0; k < n; ++k)
            {
                if (real)
                {
                    const auto s = share_real(local_values[i][k], P, holder_rngs[i]);
                    for (std::size_t j = 0; j < P; ++j)
                        out[j][k] = std::bit_cast<std::uint64_t>(s[j].value);
                }
                else
                {
                    const auto s =
                        share_additive(FixedPoint::encode(local_values[i][k], opts.frac_bits), P, holder_rngs[i]);
                    for (std::size_t j = 0; j < P; ++j)
                        out[j][k] = s[j].value;
                }
            }
            for (std::size_t j = 0; j < P; ++j)
            {
                if (j == i)
                    held[i][i] = std::move(out[j]);
                else
                    channel.send(i, j, ShareStage::GradShare, std::move(out[j]));
            }
        }

        std::vector<std::vector<std::uint64_t>> partial(P, std::vector<std::uint64_t>(n));
        for (std::size_t j = 0; j < P; ++j)
        {
            for (std::size_t i = 0; i < P; ++i)
            {
                if (i != j)
                    held[j][i] = channel.receive(j, i, ShareStage::GradShare);
            }
            for (std::size_t k = 0; k < n; ++k)
            {
                if (real)
                {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < P; ++i)
                        acc += std::bit_cast<double>(held[j][i][k]);
                    partial[j][k] = std::bit_cast<std::uint64_t>(acc);
                }
                else
                {
                    std::uint64_t acc = 0;
                    for (std::size_t i = 0; i < P; ++i)
                        acc += held[j][i][k];
                    partial[j][k] = acc;
                }
            }
            for (std::size_t q = 0; q < P; ++q)
            {
                if (q != j)
                    channel.send(j, q, ShareStage::PartialSum, partial[j]);
            }
        }

        std::vector<std::vector<double>> totals(P, std::vector<double>(n));
        for (std::size_t q = 0; q < P; ++q)
        {
            std::vector<std::vector<std::uint64_t>> parts(P);
            for (std::size_t j = 0; j < P; ++j)
                parts[j] = j == q ? partial[q] : channel.receive(q, j, ShareStage::PartialSum);
            for (std::size_t k = 0; k < n; ++k)
            {
                if (real)
                {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < P; ++j)
                        acc += std::bit_cast<double>(parts[j][k]);
                    totals[q][k] = acc;
                }
                else
                {
                    std::uint64_t acc = 0;
                    for (std::size_t j = 0; j < P; ++j)
                        acc += parts[j][k];
                    totals[q][k] = FixedPoint{acc, opts.frac_bits}.decode();
                }
            }
        }
        return totals;
    }

    AggregateResult secure_aggregate(std::span<const std::vector<double>> local_values, Rng& rng,
                                     const AggregateOptions& opts)
    {
        AggregateResult r;
        MemoryShareChannel channel(&r.log);
        std::vector<Rng> rngs;
        for (std::size_t p = 0; p < local_values.size(); ++p)
        {
            rngs.push_back(rng.fork(holder_party(p)));
        }
        r.totals = secure_aggregate(local_values, rngs, channel, opts);
        r.words_sent = channel.words_sent();
        return r;
    }

} // namespace sapgnn
