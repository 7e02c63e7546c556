#include "sapgnn/protocol.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace sapgnn;

namespace
{
    Graph small_graph(std::uint64_t seed = 3)
    {
        SyntheticSpec s;
        s.n_nodes = 36;
        s.n_classes = 3;
        s.feat_dim = 5;
        s.intra_class_edge_prob = 0.25;
        s.inter_class_edge_prob = 0.05;
        s.train_per_class = 4;
        s.seed = seed;
        return generate_synthetic(s);
    }

    ProtocolConfig config_for(const Graph& g, PoolingMode mode = PoolingMode::Naive, double dropout = 0.0)
    {
        ProtocolConfig c;
        c.model.input_dim = g.feature_dim();
        c.model.num_classes = g.num_classes;
        c.model.hidden = 6;
        c.model.layers = 2;
        c.model.dropout = dropout;
        c.mode = mode;
        c.shared_seed = 21;
        c.server_seed = 22;
        c.salt = salt_from_seed(5);
        return c;
    }

    std::vector<LocalGraph> split(const Graph& g, std::size_t P, double dup = 0.0)
    {
        UniformSplitOptions o;
        o.holders = P;
        o.seed = 9;
        o.duplicate_fraction = dup;
        return split_edges_uniform(g, o);
    }

    /// graph row for every universe row
    std::vector<std::size_t> universe_to_graph(const Graph& g, const Salt& salt, const UniverseLayout& layout)
    {
        std::vector<std::size_t> out;
        for (const auto& d : layout.digests)
        {
            std::size_t row = g.num_nodes();
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
            {
                if (node_digest(salt, g.node_ids[i]) == d)
                    row = i;
            }
            out.push_back(row);
        }
        return out;
    }

    double max_abs_diff(std::span<const double> a, std::span<const double> b)
    {
        EXPECT_EQ(a.size(), b.size());
        double m = 0.0;
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
            m = std::max(m, std::abs(a[i] - b[i]));
        return m;
    }

    std::vector<double> summed_local_grads(const BackwardResult& b)
    {
        std::vector<double> s = b.local_grads.front().flatten();
        for (std::size_t p = 1; p < b.local_grads.size(); ++p)
        {
            const auto f = b.local_grads[p].flatten();
            for (std::size_t i = 0; i < s.size(); ++i)
                s[i] += f[i];
        }
        return s;
    }
} // namespace

TEST(Wire, EveryKindRoundTrips)
{
    Matrix m(2, 3, 0.0);
    m(0, 1) = -1.5;
    m(1, 2) = kNegInf;
    const std::vector<ProtocolMessage> msgs{
        HashedNodeList{1, {node_digest(Salt{}, 1), node_digest(Salt{}, 2)}},
        LocalEmbedding{1, 2, {RowState::Absent, RowState::Aggregated}, m},
        GlobalEmbedding{0, 1, m},
        PredGrad{3, m},
        LocalEmbGrad{1, 0, m},
        InputGrad{1, 1, m},
        GradShare{0, 1, {1, 2, ~0ULL}},
        PartialSum{1, 0, {}},
        EmbeddingShares{0, 1, 3, {RowState::NoNeighbors}, {{1, 2, 3}, {4, 5, 6}}},
        PooledEmbedding{1, m},
        IndexShares{0, 2, {1, 0, 1, 1, 0, 0, 0, 1, 1}},
    };
    ASSERT_EQ(msgs.size(), schema_kinds().size());
    for (const auto& msg : msgs)
    {
        const auto bytes = encode(msg);
        const auto back = decode(bytes);
        EXPECT_EQ(back.index(), msg.index());
        EXPECT_EQ(encode(back), bytes) << kind_name(msg);
    }
}

TEST(Wire, MalformedInputIsRejected)
{
    auto bytes = encode(GlobalEmbedding{0, 1, Matrix(2, 2, 1.0)});
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(decode(truncated), ProtocolError);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode(trailing), ProtocolError);
    auto bad_tag = bytes;
    bad_tag[0] = 200;
    EXPECT_THROW(decode(bad_tag), ProtocolError);
    auto bad_state = encode(LocalEmbedding{0, 0, {RowState::Aggregated}, Matrix(1, 1)});
    bad_state[9 + 4 + 4 + 8] = 7;
    EXPECT_THROW(decode(bad_state), ProtocolError);
}

TEST(Wire, FloatsAreLittleEndianBinary64)
{
    const auto bytes = encode(PooledEmbedding{0, Matrix(1, 1, 1.0)});
    // tag, length, layer, rows, cols, value
    ASSERT_EQ(bytes.size(), 1u + 8 + 4 + 8 + 8 + 8);
    EXPECT_EQ(bytes[0], 9);
    const std::vector<std::uint8_t> one{0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    EXPECT_TRUE(std::equal(one.begin(), one.end(), bytes.end() - 8));
}

TEST(Transport, DesyncAndKindMismatchThrow)
{
    AuditLog log;
    CommStats comm;
    Transport t(log, comm);
    EXPECT_THROW(t.receive(PartyId::server(), PartyId::holder(0)), ProtocolError);
    t.send(PartyId::holder(0), PartyId::server(), PredGrad{0, Matrix(1, 1)});
    EXPECT_THROW(t.receive_as<LocalEmbedding>(PartyId::server(), PartyId::holder(0)), ProtocolError);
    EXPECT_EQ(log.size(), 1u);
    EXPECT_EQ(comm.total_kind("PredGrad"), encode(PredGrad{0, Matrix(1, 1)}).size());
    EXPECT_EQ(t.pending(), 0u);
}

class ProtocolIdentity : public ::testing::TestWithParam<std::size_t>
{
};

TEST_P(ProtocolIdentity, MatchesCentralizedEmbeddingsAndGradients)
{
    const std::size_t P = GetParam();
    const Graph g = small_graph();
    const auto cfg = config_for(g);
    auto parties = init_parties(cfg, split(g, P, 0.5));
    const auto fwd = forward_pass(*parties, true);
    const auto bwd = backward_pass(*parties);

    const ModelWeights w{parties->holders.front().weights(), parties->server->weights()};
    EXPECT_EQ(w, init_weights(cfg.model, cfg.shared_seed, cfg.server_seed));
    const auto labelled = train_rows(g);
    const auto ref = centralized_forward_backward(g, w, cfg.model, labelled);

    const auto rows = universe_to_graph(g, cfg.salt, parties->server->layout());
    ASSERT_EQ(rows.size(), g.num_nodes());
    const auto emb = parties->server->embeddings();
    for (std::size_t l = 0; l < cfg.model.layers; ++l)
    {
        double dev = 0.0;
        for (std::size_t u = 0; u < rows.size(); ++u)
            dev = std::max(dev, max_abs_diff(emb[l].row(u), ref.embeddings[l + 1].row(rows[u])));
        EXPECT_LT(dev, 1e-9) << "layer " << l;
    }
    EXPECT_NEAR(fwd.total_loss(), ref.loss, 1e-9);

    EXPECT_LT(max_abs_diff(summed_local_grads(bwd), ref.grads.local.flatten()), 1e-9);
    for (std::size_t l = 0; l < cfg.model.layers; ++l)
        EXPECT_LT(max_abs_diff(bwd.global_grads.layers[l].data(), ref.grads.global.layers[l].data()), 1e-9);

    const auto aggregated = weight_update(*parties);
    EXPECT_LT(max_abs_diff(aggregated, ref.grads.local.flatten()), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Holders, ProtocolIdentity, ::testing::Values(1, 2, 3, 4));

TEST(Protocol, FixedPointAggregationWithinTolerance)
{
    const Graph g = small_graph();
    auto cfg = config_for(g);
    cfg.share_mode = ShareMode::FixedPoint;
    auto parties = init_parties(cfg, split(g, 3));
    forward_pass(*parties, true);
    const auto bwd = backward_pass(*parties);
    const auto exact = summed_local_grads(bwd);
    const auto aggregated = weight_update(*parties);
    EXPECT_LT(max_abs_diff(aggregated, exact), 1e-4);
}

TEST(Protocol, SecurePoolingEqualsNaive)
{
    const Graph g = small_graph();
    auto naive = init_parties(config_for(g, PoolingMode::Naive, 0.5), split(g, 3, 0.3));
    auto secure = init_parties(config_for(g, PoolingMode::SecurePooling, 0.5), split(g, 3, 0.3));
    for (int epoch = 0; epoch < 3; ++epoch)
    {
        const auto a = forward_pass(*naive, true);
        const auto b = forward_pass(*secure, true);
        EXPECT_EQ(a.losses, b.losses);
        EXPECT_EQ(naive->server->embeddings(), secure->server->embeddings());
        backward_pass(*naive);
        backward_pass(*secure);
        weight_update(*naive);
        weight_update(*secure);
    }
    EXPECT_EQ(naive->holders[1].weights(), secure->holders[1].weights());
    EXPECT_EQ(naive->server->weights(), secure->server->weights());
}

TEST(Protocol, DropoutMasksMatchCentralizedInUniverseOrder)
{
    const Graph g = small_graph();
    const auto cfg = config_for(g, PoolingMode::Naive, 0.5);
    auto parties = init_parties(cfg, split(g, 2));
    const auto fwd = forward_pass(*parties, true);
    const auto rows = universe_to_graph(g, cfg.salt, parties->server->layout());
    DropoutMasks masks;
    for (const auto& m : parties->server->dropout_masks())
    {
        Matrix graph_order(m.rows(), m.cols());
        for (std::size_t u = 0; u < rows.size() && !m.empty(); ++u)
            std::copy_n(m.row(u).begin(), m.cols(), graph_order.row(rows[u]).begin());
        masks.push_back(m.empty() ? Matrix() : graph_order);
    }
    ASSERT_FALSE(masks.front().empty());
    const ModelWeights w{parties->holders.front().weights(), parties->server->weights()};
    const auto ref = centralized_forward_backward(g, w, cfg.model, train_rows(g), &masks);
    EXPECT_NEAR(fwd.total_loss(), ref.loss, 1e-9);
}

TEST(Protocol, InferenceDisablesDropout)
{
    const Graph g = small_graph();
    auto parties = init_parties(config_for(g, PoolingMode::Naive, 0.5), split(g, 2));
    const auto a = forward_pass(*parties, false);
    const auto b = forward_pass(*parties, false);
    EXPECT_EQ(a.losses, b.losses);
    for (const auto& m : parties->server->dropout_masks())
        EXPECT_TRUE(m.empty());
}

TEST(Protocol, InitIsDeterministic)
{
    const Graph g = small_graph();
    auto a = init_parties(config_for(g), split(g, 3));
    auto b = init_parties(config_for(g), split(g, 3));
    EXPECT_EQ(a->server->layout().digests, b->server->layout().digests);
    EXPECT_EQ(a->server->weights(), b->server->weights());
    for (std::size_t p = 0; p < 3; ++p)
        EXPECT_EQ(a->holders[p].weights(), b->holders[p].weights());
}

TEST(Protocol, FeatureWidthMismatchIsRejected)
{
    const Graph g = small_graph();
    auto holders = split(g, 2);
    holders[1].graph.features = Matrix(holders[1].graph.num_nodes(), g.feature_dim() + 1);
    EXPECT_THROW(init_parties(config_for(g), std::move(holders)), ProtocolError);
}

TEST(Protocol, LocalWeightsStayReplicated)
{
    const Graph g = small_graph();
    auto parties = init_parties(config_for(g, PoolingMode::Naive, 0.5), split(g, 4));
    for (int epoch = 0; epoch < 4; ++epoch)
    {
        forward_pass(*parties, true);
        backward_pass(*parties);
        ASSERT_NO_THROW(weight_update(*parties));
    }
    const auto ref = parties->holders[0].weights().flatten();
    for (const auto& h : parties->holders)
        EXPECT_EQ(h.weights().flatten(), ref);
    EXPECT_NE(parties->holders[0].weights(), init_local_weights(parties->cfg.model, parties->cfg.shared_seed));
}

TEST(Audit, ProtocolRunsAreClean)
{
    const Graph g = small_graph();
    for (const auto mode : {PoolingMode::Naive, PoolingMode::SecurePooling})
    {
        auto parties = init_parties(config_for(g, mode), split(g, 3));
        forward_pass(*parties, true);
        backward_pass(*parties);
        weight_update(*parties);
        const auto report = verify_privacy_audit(parties->audit.records(), mode);
        EXPECT_TRUE(report.clean()) << (report.clean() ? "" : report.findings.front().describe());
        EXPECT_EQ(report.records, parties->audit.size());
        if (mode == PoolingMode::SecurePooling)
            EXPECT_EQ(report.server_plaintext_embeddings, 0u);
        else
            EXPECT_EQ(report.server_plaintext_embeddings, 2u * 3u);
    }
}

TEST(Audit, InjectedGradientShareToServerIsOneFinding)
{
    const Graph g = small_graph();
    auto parties = init_parties(config_for(g), split(g, 2));
    forward_pass(*parties, true);
    backward_pass(*parties);
    weight_update(*parties);
    AuditRecord r;
    r.from = holder_party(1);
    r.to = kServerParty;
    r.kind = "GradShare";
    r.schema = "u64[4]";
    r.bytes = 32;
    parties->transport.inject(r);
    const auto report = verify_privacy_audit(parties->audit.records(), PoolingMode::Naive);
    ASSERT_EQ(report.findings.size(), 1u);
    EXPECT_EQ(report.findings[0].rule, "server-saw-gradient-share");
    EXPECT_EQ(report.findings[0].party, kServerParty);
}

TEST(Audit, EachRuleFires)
{
    auto rec = [](std::string from, std::string to, std::string kind) {
        AuditRecord r;
        r.from = std::move(from);
        r.to = std::move(to);
        r.kind = std::move(kind);
        return r;
    };
    auto only_rule = [](const std::vector<AuditRecord>& log, PoolingMode mode) {
        const auto rep = verify_privacy_audit(log, mode);
        return rep.findings.size() == 1 ? rep.findings[0].rule : std::string("count=") + std::to_string(rep.findings.size());
    };
    EXPECT_EQ(only_rule({rec("holder-0", "server", "RawFeatures")}, PoolingMode::Naive), "closed-schema");
    EXPECT_EQ(only_rule({rec("holder-0", "holder-1", "LocalEmbedding")}, PoolingMode::Naive),
              "local-embedding-left-holder");
    EXPECT_EQ(only_rule({rec("holder-0", "server", "LocalEmbedding")}, PoolingMode::SecurePooling),
              "server-saw-plaintext-embedding");
    EXPECT_EQ(only_rule({rec("holder-0", "server", "GlobalEmbedding")}, PoolingMode::Naive), "server-inbound-kind");
    EXPECT_EQ(only_rule({rec("secure-max", "holder-1", "PartialSum")}, PoolingMode::Naive), "share-outside-holders");
    EXPECT_TRUE(verify_privacy_audit({rec("holder-0", "server", "LocalEmbedding")}, PoolingMode::Naive).clean());
}

TEST(Comm, EmbeddingTrafficCountsEveryMessage)
{
    const Graph g = small_graph();
    auto parties = init_parties(config_for(g), split(g, 2));
    parties->transport.set_epoch(1);
    forward_pass(*parties, true);
    const auto& c = parties->comm;
    std::size_t expect = 0;
    for (std::size_t l = 0; l < 2; ++l)
    {
        for (std::size_t p = 0; p < 2; ++p)
        {
            const std::size_t rows = parties->holders[p].local_graph().graph.num_nodes();
            // tag + length + layer + holder + state count + states + rows + cols + values
            const std::size_t d = parties->cfg.model.local_dim(l);
            expect += 1 + 8 + 4 + 4 + 8 + rows + 8 + 8 + 8 * rows * d;
        }
    }
    EXPECT_EQ(c.total_kind("LocalEmbedding"), expect);
    EXPECT_EQ(c.total_for_epoch(1), c.total() - c.total_for_epoch(0));
    std::ostringstream csv;
    c.write_csv(csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "epoch,kind,direction,bytes");
    EXPECT_NE(csv.str().find("1,LocalEmbedding,up,"), std::string::npos);
    EXPECT_NE(csv.str().find("1,GlobalEmbedding,down,"), std::string::npos);
}

TEST(Training, EarlyStopperKeepsBestEpoch)
{
    EarlyStopper s(2);
    ClassificationMetrics a{0.5, 0.5, 10}, b{0.7, 0.6, 10}, t{0.9, 0.9, 10};
    EXPECT_FALSE(s.observe(1, a, a));
    EXPECT_FALSE(s.observe(2, b, t));
    EXPECT_FALSE(s.observe(3, b, a));
    EXPECT_TRUE(s.observe(4, a, a));
    EXPECT_EQ(s.best_epoch(), 2u);
    EXPECT_DOUBLE_EQ(s.test_at_best().accuracy, 0.9);
}

TEST(Training, RunsAreDeterministicAndLearn)
{
    const Graph g = small_graph();
    TrainConfig tc;
    tc.max_epochs = 15;
    tc.patience = 100;
    auto cfg = config_for(g, PoolingMode::Naive, 0.5);
    const auto a = train_protocol(cfg, split(g, 2), tc);
    const auto b = train_protocol(cfg, split(g, 2), tc);
    std::ostringstream ma, mb, la, lb;
    write_metrics_csv(ma, a.outcome.history);
    write_metrics_csv(mb, b.outcome.history);
    a.audit.write_jsonl(la);
    b.audit.write_jsonl(lb);
    EXPECT_EQ(ma.str(), mb.str());
    EXPECT_EQ(la.str(), lb.str());
    EXPECT_EQ(a.outcome.epochs_run, 15u);
    EXPECT_EQ(a.outcome.history.size(), 45u);
    EXPECT_TRUE(a.audit_report.clean());
    EXPECT_LT(a.outcome.history[3 * 14].loss, a.outcome.history[0].loss);
}

TEST(Config, ParsesOverridesAndRejectsUnknownKeys)
{
    const std::string doc = R"({"dataset": {"synthetic": {"n_nodes": 30, "n_classes": 3}},
        "partition": {"kind": "label-skew", "P": 3, "q": 25},
        "model": {"layers": 2, "hidden": 8, "update_kind": "concat", "relu": true, "dropout": 0.0},
        "train": {"lr": 0.02, "max_epochs": 5, "patience": 3, "seed": 4},
        "mode": "secure-pooling", "share_mode": "fixed-point"})";
    const auto c = parse_run_config(doc, {"partition.P=4", "train.seed=11", "mode=naive"});
    EXPECT_EQ(c.partition.kind, PartitionKind::LabelSkew);
    EXPECT_EQ(c.partition.holders, 4u);
    EXPECT_DOUBLE_EQ(c.partition.q, 25.0);
    EXPECT_EQ(c.update, UpdateKind::Concat);
    EXPECT_EQ(c.train.seed, 11u);
    EXPECT_EQ(c.mode, PoolingMode::Naive);
    EXPECT_EQ(c.share_mode, ShareMode::FixedPoint);
    ASSERT_TRUE(c.dataset.inline_spec.has_value());
    EXPECT_EQ(c.dataset.inline_spec->n_nodes, 30u);

    const auto again = parse_run_config(run_config_to_json(c));
    EXPECT_EQ(run_config_to_json(again), run_config_to_json(c));

    EXPECT_THROW(parse_run_config(R"({"modle": {}})"), std::invalid_argument);
    EXPECT_THROW(parse_run_config(R"({"model": {"hiden": 3}})"), std::invalid_argument);
    EXPECT_THROW(parse_run_config("{}", {"partition.P=0"}), std::invalid_argument);
    EXPECT_THROW(parse_run_config("{}", {"bad-override"}), std::invalid_argument);
}

TEST(Config, RunTrainingEndToEnd)
{
    auto c = parse_run_config(R"({"dataset": {"synthetic": {"n_nodes": 30, "n_classes": 2, "train_per_class": 5}},
        "partition": {"P": 2}, "model": {"hidden": 4, "dropout": 0.0}, "train": {"max_epochs": 3}})");
    const auto r = run_training(c);
    EXPECT_EQ(r.outcome.epochs_run, 3u);
    EXPECT_TRUE(r.audit_report.clean());
    EXPECT_GT(r.comm.total_kind("GradShare"), 0u);
}
