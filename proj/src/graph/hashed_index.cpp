#include "sapgnn/graph.hpp"
#include "sapgnn/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>

namespace sapgnn
{
    Digest node_digest(const Salt& salt, NodeId id)
    {
        std::array<std::uint8_t, 32 + 8> msg{};
        std::copy(salt.begin(), salt.end(), msg.begin());
        for (int i = 0; i < 8; ++i)
        {
            msg[32 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(id >> (56 - 8 * i));
        }
        std::array<unsigned char, EVP_MAX_MD_SIZE> full{};
        unsigned int len = 0;
        if (EVP_Digest(msg.data(), msg.size(), full.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        {
            throw std::runtime_error("node_digest: SHA-256 failed");
        }
        Digest d{};
        std::copy_n(full.begin(), d.size(), d.begin());
        return d;
    }

    std::string to_hex(const Digest& d)
    {
        static constexpr char kHex[] = "0123456789abcdef";
        std::string s;
        s.reserve(d.size() * 2);
        for (const auto b : d)
        {
            s.push_back(kHex[b >> 4]);
            s.push_back(kHex[b & 0xF]);
        }
        return s;
    }

    const Digest& HashedIndex::digest(NodeId id) const
    {
        const auto it = digests_.find(id);
        if (it == digests_.end())
        {
            throw GraphError("hashed index: unknown node " + std::to_string(id));
        }
        return it->second;
    }

    std::vector<Digest> HashedIndex::sorted_digests() const
    {
        std::vector<Digest> out;
        out.reserve(digests_.size());
        for (const auto& [id, d] : digests_)
        {
            out.push_back(d);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    HashedIndex build_hashed_index(const std::vector<LocalGraph>& holders, const Salt& salt, HashedIndex::DigestFn fn)
    {
        HashedIndex index;
        std::map<Digest, NodeId> owner;
        for (const auto& h : holders)
        {
            for (const NodeId id : h.graph.node_ids)
            {
                if (index.digests_.contains(id))
                {
                    continue;
                }
                const Digest d = fn(salt, id);
                const auto [it, inserted] = owner.emplace(d, id);
                if (!inserted)
                {
                    throw DigestCollision("digest collision between node ids " + std::to_string(it->second) + " and " +
                                          std::to_string(id));
                }
                index.digests_.emplace(id, d);
            }
        }
        return index;
    }

    Salt salt_from_seed(std::uint64_t seed)
    {
        Rng rng(seed, 0x5A17);
        Salt s{};
        for (std::size_t i = 0; i < s.size(); i += 8)
        {
            const std::uint64_t w = rng.next_u64();
            for (std::size_t k = 0; k < 8; ++k)
            {
                s[i + k] = static_cast<std::uint8_t>(w >> (8 * k));
            }
        }
        return s;
    }

    UniverseLayout align_universe(const std::vector<std::vector<Digest>>& lists)
    {
        UniverseLayout u;
        for (const auto& l : lists)
        {
            u.digests.insert(u.digests.end(), l.begin(), l.end());
        }
        std::sort(u.digests.begin(), u.digests.end());
        u.digests.erase(std::unique(u.digests.begin(), u.digests.end()), u.digests.end());
        for (const auto& l : lists)
        {
            auto& rows = u.row_of.emplace_back();
            rows.reserve(l.size());
            for (const auto& d : l)
            {
                rows.push_back(static_cast<std::size_t>(
                    std::lower_bound(u.digests.begin(), u.digests.end(), d) - u.digests.begin()));
            }
        }
        return u;
    }

} // namespace sapgnn
