#include "sapgnn/protocol.hpp"

#include <algorithm>
#include <set>

namespace sapgnn
{
    Parties::Parties(const ProtocolConfig& c) : cfg(c), transport(audit, comm) {}

    double ForwardResult::total_loss() const
    {
        double s = 0.0;
        for (const double l : losses)
            s += l;
        return s;
    }

    std::unique_ptr<Parties> init_parties(const ProtocolConfig& cfg, std::vector<LocalGraph> holders)
    {
        cfg.model.validate();
        if (holders.empty())
            throw ProtocolError("need at least one data holder");
        const std::size_t P = holders.size();
        for (std::size_t p = 0; p < P; ++p)
        {
            if (holders[p].holder_id != p)
                throw ProtocolError("holder ids must be 0..P-1 in order");
            if (holders[p].graph.feature_dim() != cfg.model.input_dim)
                throw ProtocolError(holder_party(p) + ": feature width mismatch");
        }

        auto parties = std::make_unique<Parties>(cfg);
        parties->server = std::make_unique<Server>(cfg, P);
        if (cfg.mode == PoolingMode::SecurePooling)
            parties->evaluator = std::make_unique<SecureMaxEvaluator>(cfg.server_seed ^ stable_hash("secure-max"), P);
        parties->holders.reserve(P);
        for (auto& g : holders)
            parties->holders.emplace_back(std::move(g), cfg, P);

        auto& tr = parties->transport;
        tr.set_epoch(0);
        for (auto& h : parties->holders)
        {
            const auto list = h.node_list();
            tr.send(PartyId::holder(h.id()), PartyId::server(), list);
            if (parties->evaluator)
                tr.send(PartyId::holder(h.id()), PartyId::secure_max(), list);
        }
        for (std::size_t p = 0; p < P; ++p)
        {
            parties->server->register_holder(tr.receive_as<HashedNodeList>(PartyId::server(), PartyId::holder(p)));
            if (parties->evaluator)
            {
                auto l = tr.receive_as<HashedNodeList>(PartyId::secure_max(), PartyId::holder(p));
                parties->evaluator->register_holder(p, std::move(l.digests));
            }
        }
        if (parties->server->universe_size() == 0)
            throw ProtocolError("no nodes registered");
        return parties;
    }

    ForwardResult forward_pass(Parties& parties, bool train)
    {
        auto& tr = parties.transport;
        auto& server = *parties.server;
        const std::size_t P = parties.holders.size();
        const auto S = PartyId::server();
        server.begin_forward(train);
        for (auto& h : parties.holders)
            h.begin_forward();

        for (std::size_t l = 0; l < parties.cfg.model.layers; ++l)
        {
            if (parties.cfg.mode == PoolingMode::Naive)
            {
                for (auto& h : parties.holders)
                    tr.send(PartyId::holder(h.id()), S, h.compute_local(l));
                std::vector<LocalEmbedding> locals;
                for (std::size_t p = 0; p < P; ++p)
                    locals.push_back(tr.receive_as<LocalEmbedding>(S, PartyId::holder(p)));
                server.pool_plain(l, locals);
            }
            else
            {
                const auto E = PartyId::secure_max();
                for (auto& h : parties.holders)
                    tr.send(PartyId::holder(h.id()), E, h.share_local(h.compute_local(l)));
                std::vector<PoolingInput> inputs;
                std::size_t cols = 0;
                for (std::size_t p = 0; p < P; ++p)
                {
                    auto es = tr.receive_as<EmbeddingShares>(E, PartyId::holder(p));
                    if (es.layer != l || es.holder != p)
                        throw ProtocolError("secure-max: embedding shares out of order");
                    cols = es.cols;
                    inputs.push_back({p, std::move(es.state), std::move(es.shares)});
                }
                auto out = parties.evaluator->pool(inputs, cols);
                tr.send(E, S, PooledEmbedding{static_cast<std::uint32_t>(l), std::move(out.pooled)});
                for (auto& s : out.index_shares)
                    tr.send(E, S,
                            IndexShares{static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(s.party),
                                        std::move(s.bits)});
                const auto pooled = tr.receive_as<PooledEmbedding>(S, E);
                std::vector<IndexShares> shares;
                for (std::size_t p = 0; p < P; ++p)
                    shares.push_back(tr.receive_as<IndexShares>(S, E));
                server.pool_secure(l, pooled, shares);
            }
            for (std::size_t p = 0; p < P; ++p)
                tr.send(S, PartyId::holder(p), server.global_for(l, p));
            for (auto& h : parties.holders)
                h.accept_global(tr.receive_as<GlobalEmbedding>(PartyId::holder(h.id()), S));
        }

        ForwardResult r;
        for (auto& h : parties.holders)
            r.losses.push_back(h.compute_loss());
        return r;
    }

    BackwardResult backward_pass(Parties& parties)
    {
        auto& tr = parties.transport;
        auto& server = *parties.server;
        const std::size_t P = parties.holders.size();
        const auto S = PartyId::server();

        server.begin_backward();
        for (auto& h : parties.holders)
            tr.send(PartyId::holder(h.id()), S, h.pred_grad());
        std::vector<PredGrad> pg;
        for (std::size_t p = 0; p < P; ++p)
            pg.push_back(tr.receive_as<PredGrad>(S, PartyId::holder(p)));
        server.accept_pred_grads(pg);

        for (std::size_t l = parties.cfg.model.layers; l-- > 0;)
        {
            for (auto& g : server.backward_layer(l))
                tr.send(S, PartyId::holder(g.holder), g);
            for (auto& h : parties.holders)
            {
                auto in = h.accept_local_grad(tr.receive_as<LocalEmbGrad>(PartyId::holder(h.id()), S));
                if (in)
                    tr.send(PartyId::holder(h.id()), S, *in);
            }
            if (l > 0)
            {
                std::vector<InputGrad> ig;
                for (std::size_t p = 0; p < P; ++p)
                    ig.push_back(tr.receive_as<InputGrad>(S, PartyId::holder(p)));
                server.accept_input_grads(l, ig);
            }
        }

        BackwardResult r;
        for (const auto& h : parties.holders)
            r.local_grads.push_back(h.gradients());
        r.global_grads = server.gradients();
        return r;
    }

    std::vector<double> weight_update(Parties& parties)
    {
        parties.server->apply_update();

        const std::size_t P = parties.holders.size();
        std::vector<std::vector<double>> values;
        std::vector<Rng> rngs;
        for (auto& h : parties.holders)
        {
            values.push_back(h.gradients().flatten());
            rngs.push_back(h.share_rng());
        }
        TransportShareChannel channel(parties.transport);
        const auto totals =
            secure_aggregate(values, rngs, channel, AggregateOptions{parties.cfg.share_mode, kDefaultFracBits});
        for (std::size_t p = 0; p < P; ++p)
        {
            parties.holders[p].share_rng() = rngs[p];
            parties.holders[p].apply_update(totals[p]);
        }
        const auto ref = parties.holders.front().weights().flatten();
        for (std::size_t p = 1; p < P; ++p)
        {
            if (parties.holders[p].weights().flatten() != ref)
                throw ReplicationError("local weights diverged at " + holder_party(p));
        }
        return totals.front();
    }

    // ---- privacy audit --------------------------------------------------------------

    std::string AuditFinding::describe() const
    {
        return rule + ": " + kind + " delivered to " + party + " (record " + std::to_string(seq) + ")";
    }

    AuditReport verify_privacy_audit(const std::vector<AuditRecord>& log, PoolingMode mode)
    {
        const auto& kinds = schema_kinds();
        const std::set<std::string> known(kinds.begin(), kinds.end());
        const std::set<std::string> server_inbound{"HashedNodeList", "LocalEmbedding", "PredGrad",
                                                   "InputGrad",      "PooledEmbedding", "IndexShares"};
        auto is_holder = [](const std::string& party) { return party.rfind("holder-", 0) == 0; };

        AuditReport r;
        r.records = log.size();
        for (const auto& rec : log)
        {
            const bool to_server = rec.to == kServerParty;
            const bool share = rec.kind == "GradShare" || rec.kind == "PartialSum";
            if (to_server && rec.kind == "LocalEmbedding")
                ++r.server_plaintext_embeddings;

            // One finding per record: the first rule it breaks.
            std::string rule;
            if (!known.contains(rec.kind))
                rule = "closed-schema";
            else if (to_server && share)
                rule = "server-saw-gradient-share";
            else if (rec.kind == "LocalEmbedding" && !to_server)
                rule = "local-embedding-left-holder";
            else if (mode == PoolingMode::SecurePooling && to_server && rec.kind == "LocalEmbedding")
                rule = "server-saw-plaintext-embedding";
            else if (to_server && !server_inbound.contains(rec.kind))
                rule = "server-inbound-kind";
            else if (share && (!is_holder(rec.from) || !is_holder(rec.to)))
                rule = "share-outside-holders";
            if (!rule.empty())
                r.findings.push_back({rule, rec.to, rec.kind, rec.seq});
        }
        return r;
    }

} // namespace sapgnn
