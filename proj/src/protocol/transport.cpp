#include "sapgnn/protocol.hpp"

namespace sapgnn
{
    namespace
    {
        std::string direction(PartyId from, PartyId to)
        {
            const bool fh = from.role == PartyId::Role::Holder;
            const bool th = to.role == PartyId::Role::Holder;
            if (fh && th)
                return "peer";
            if (fh)
                return "up";
            if (th)
                return "down";
            return "internal";
        }
    } // namespace

    std::string PartyId::name() const
    {
        switch (role)
        {
        case Role::Server:
            return kServerParty;
        case Role::SecureMax:
            return kSecureMaxParty;
        case Role::Holder:
            break;
        }
        return holder_party(index);
    }

    void CommStats::add(const CommKey& key, std::size_t bytes)
    {
        bytes_[key] += bytes;
        ++messages_;
    }

    std::size_t CommStats::total() const
    {
        std::size_t n = 0;
        for (const auto& [k, b] : bytes_)
            n += b;
        return n;
    }

    std::size_t CommStats::total_kind(const std::string& kind) const
    {
        std::size_t n = 0;
        for (const auto& [k, b] : bytes_)
            n += k.kind == kind ? b : 0;
        return n;
    }

    std::size_t CommStats::total_for_epoch(std::uint64_t epoch) const
    {
        std::size_t n = 0;
        for (const auto& [k, b] : bytes_)
            n += k.epoch == epoch ? b : 0;
        return n;
    }

    std::size_t CommStats::bytes(const CommKey& key) const
    {
        const auto it = bytes_.find(key);
        return it == bytes_.end() ? 0 : it->second;
    }

    void CommStats::write_csv(std::ostream& out) const
    {
        std::map<std::tuple<std::uint64_t, std::string, std::string>, std::size_t> rows;
        for (const auto& [k, b] : bytes_)
            rows[{k.epoch, k.kind, k.direction}] += b;
        out << "epoch,kind,direction,bytes\n";
        for (const auto& [k, b] : rows)
            out << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k) << ',' << b << '\n';
    }

    void Transport::send(PartyId from, PartyId to, const ProtocolMessage& m)
    {
        auto bytes = encode(m);
        const std::int64_t layer = message_layer(m);
        std::lock_guard lock(mu_);
        comm_.add({epoch_, kind_name(m), direction(from, to), layer}, bytes.size());
        audit_.append({.epoch = epoch_,
                       .layer = layer,
                       .from = from.name(),
                       .to = to.name(),
                       .kind = kind_name(m),
                       .schema = schema_id(m),
                       .bytes = bytes.size(),
                       .plaintext = carries_plaintext(m)});
        queues_[{from, to}].push_back(std::move(bytes));
    }

    ProtocolMessage Transport::receive(PartyId to, PartyId from)
    {
        std::vector<std::uint8_t> bytes;
        {
            std::lock_guard lock(mu_);
            auto it = queues_.find({from, to});
            if (it == queues_.end() || it->second.empty())
            {
                throw ProtocolError("protocol desync: " + to.name() + " has no pending message from " + from.name());
            }
            bytes = std::move(it->second.front());
            it->second.pop_front();
        }
        return decode(bytes);
    }

    std::size_t Transport::pending() const
    {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& [k, q] : queues_)
            n += q.size();
        return n;
    }

    void Transport::inject(AuditRecord r)
    {
        r.epoch = epoch_;
        audit_.append(std::move(r));
    }

    void TransportShareChannel::send(std::size_t from, std::size_t to, ShareStage stage, std::vector<std::uint64_t> words)
    {
        const auto f = static_cast<std::uint32_t>(from);
        const auto t = static_cast<std::uint32_t>(to);
        if (stage == ShareStage::GradShare)
            transport_.send(PartyId::holder(from), PartyId::holder(to), GradShare{f, t, std::move(words)});
        else
            transport_.send(PartyId::holder(from), PartyId::holder(to), PartialSum{f, t, std::move(words)});
    }

    std::vector<std::uint64_t> TransportShareChannel::receive(std::size_t to, std::size_t from, ShareStage stage)
    {
        if (stage == ShareStage::GradShare)
            return transport_.receive_as<GradShare>(PartyId::holder(to), PartyId::holder(from)).words;
        return transport_.receive_as<PartialSum>(PartyId::holder(to), PartyId::holder(from)).words;
    }

} // namespace sapgnn
