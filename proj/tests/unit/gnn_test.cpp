#include "sapgnn/gnn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace sapgnn;

namespace
{
    Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c)
    {
        Matrix m(r, c);
        for (double& v : m.data())
            v = rng.normal();
        return m;
    }

    Graph six_node_graph(std::uint64_t seed, std::size_t feat = 3)
    {
        Graph g = generate_synthetic(6, 2, feat, 0.0, 0.0, seed);
        g.edges = {{g.node_ids[0], g.node_ids[1]}, {g.node_ids[1], g.node_ids[2]}, {g.node_ids[2], g.node_ids[3]},
                   {g.node_ids[3], g.node_ids[4]}, {g.node_ids[0], g.node_ids[4]}, {g.node_ids[1], g.node_ids[4]}};
        // node 5 stays isolated on purpose
        Rng rng(seed, 77);
        g.features = random_matrix(rng, 6, feat);
        for (std::size_t i = 0; i < 6; ++i)
            g.splits[i] = i < 4 ? Split::Train : Split::Test;
        return g;
    }

    double relative_error(double a, double n)
    {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
    }
} // namespace

TEST(Message, IdentityAndLinearVariants)
{
    const std::vector<double> hu{3.0, 5.0};
    EXPECT_EQ(message_construct({}, std::vector<double>{1.0, 2.0}, {}, MessageKind::Identity, Matrix{}),
              (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(message_construct({}, hu, {}, MessageKind::Linear, Matrix::identity(2)), hu);
    EXPECT_EQ(message_construct({}, hu, {}, MessageKind::Linear, Matrix(2, 2, {0, 1, 1, 0})),
              (std::vector<double>{5.0, 3.0}));
    EXPECT_THROW(message_construct({}, hu, {}, MessageKind::Linear, Matrix::identity(3)), std::invalid_argument);
}

TEST(AggregateMax, ElementwiseWithLowestIndexTies)
{
    const std::vector<std::vector<double>> a{{1, 4}, {3, 2}};
    const auto r = aggregate_max(a);
    EXPECT_EQ(r.value, (std::vector<double>{3, 4}));
    EXPECT_EQ(r.argmax, (std::vector<std::size_t>{1, 0}));

    const std::vector<std::vector<double>> single{{7, -1}};
    EXPECT_EQ(aggregate_max(single).argmax, (std::vector<std::size_t>{0, 0}));

    const std::vector<std::vector<double>> tie{{2, 2}, {2, 1}};
    EXPECT_EQ(aggregate_max(tie).argmax, (std::vector<std::size_t>{0, 0}));

    EXPECT_THROW(aggregate_max(std::span<const std::vector<double>>{}), std::invalid_argument);
}

TEST(AggregateMax, MatchesBruteForceScan)
{
    Rng rng(4, 4);
    std::vector<std::vector<double>> msgs(5, std::vector<double>(8));
    for (auto& m : msgs)
        for (double& v : m)
            v = rng.normal();
    const auto r = aggregate_max(msgs);
    for (std::size_t k = 0; k < 8; ++k)
    {
        double best = kNegInf;
        for (const auto& m : msgs)
            best = std::max(best, m[k]);
        EXPECT_EQ(r.value[k], best);
        EXPECT_EQ(msgs[r.argmax[k]][k], best);
    }
}

TEST(LocalEmbedding, SumUpdateByHand)
{
    // node 0 = v with neighbours 1 and 2
    const std::vector<std::vector<std::size_t>> adj{{1, 2}, {0}, {0}, {}};
    const Matrix h(4, 2, {2, 2, 1, 0, 0, 1, 9, 9});
    ModelConfig cfg{.input_dim = 2, .hidden = 2, .num_classes = 2, .layers = 1};
    const std::vector<bool> held{true, true, true, false};
    const auto tape = local_embedding(adj, held, h, LocalLayerWeights{}, cfg, 0);
    EXPECT_EQ(tape.t(0, 0), 3.0);
    EXPECT_EQ(tape.t(0, 1), 3.0);
    EXPECT_EQ(tape.state[0], RowState::Aggregated);
    EXPECT_EQ(tape.state[3], RowState::Absent);
    EXPECT_EQ(tape.t(3, 0), kNegInf);
    EXPECT_EQ(tape.t(3, 1), kNegInf);
}

TEST(LocalEmbedding, NoNeighboursFallsBackToSelf)
{
    const std::vector<std::vector<std::size_t>> adj{{}, {}};
    const Matrix h(2, 2, {1.5, -2.0, 0.0, 0.0});
    ModelConfig cfg{.input_dim = 2, .hidden = 2, .num_classes = 2, .layers = 1};
    const auto tape = local_embedding(adj, {true, true}, h, LocalLayerWeights{}, cfg, 0);
    EXPECT_EQ(tape.state[0], RowState::NoNeighbors);
    EXPECT_EQ(tape.t(0, 0), 1.5);
    EXPECT_EQ(tape.t(0, 1), -2.0);
}

TEST(LocalUpdate, KindsByHand)
{
    const std::vector<double> h{1.0, -1.0}, m{2.0, 3.0};
    EXPECT_EQ(local_update(UpdateKind::Sum, h, m, {}, {}), (std::vector<double>{3.0, 2.0}));
    EXPECT_EQ(local_update(UpdateKind::NegatedSum, h, m, {}, {}), (std::vector<double>{-1.0, -4.0}));
    EXPECT_EQ(local_update(UpdateKind::Concat, h, m, {}, {}), (std::vector<double>{1.0, -1.0, 2.0, 3.0}));
    // gate = relu(I h + 0) = (1, 0)
    EXPECT_EQ(local_update(UpdateKind::Gated, h, m, Matrix::identity(2), Matrix(1, 2)),
              (std::vector<double>{2.0, 0.0}));
}

TEST(GlobalEmbedding, SingleHolderIsPlainUpdate)
{
    Rng rng(1, 1);
    const Matrix t = random_matrix(rng, 5, 3);
    const std::vector<RowState> st(5, RowState::Aggregated);
    const Matrix w = random_matrix(rng, 2, 3);
    const LocalStack s{&t, &st};
    const auto tape = global_embedding(std::span(&s, 1), w, false, nullptr);
    EXPECT_EQ(tape.output, matmul_transposed(t, w));
}

TEST(GlobalEmbedding, SentinelHolderNeverWins)
{
    Rng rng(2, 1);
    const Matrix t1 = random_matrix(rng, 4, 3);
    const std::vector<RowState> s1(4, RowState::Aggregated);
    const Matrix t2(4, 3, kNegInf);
    const std::vector<RowState> s2(4, RowState::Absent);
    const Matrix w = random_matrix(rng, 3, 3);
    const std::vector<LocalStack> both{{&t1, &s1}, {&t2, &s2}};
    const LocalStack only{&t1, &s1};
    EXPECT_EQ(global_embedding(both, w, true, nullptr).output, global_embedding(std::span(&only, 1), w, true, nullptr).output);
}

TEST(GlobalEmbedding, IdentityWeightGivesElementwiseMax)
{
    Rng rng(3, 1);
    std::vector<Matrix> ts;
    for (int p = 0; p < 3; ++p)
        ts.push_back(random_matrix(rng, 6, 4));
    const std::vector<RowState> st(6, RowState::Aggregated);
    std::vector<LocalStack> stacks;
    for (const auto& t : ts)
        stacks.push_back({&t, &st});
    const auto tape = global_embedding(stacks, Matrix::identity(4), false, nullptr);
    EXPECT_EQ(tape.output, elementwise_max(elementwise_max(ts[0], ts[1]), ts[2]));
}

TEST(GlobalEmbedding, AllAbsentRowIsAnError)
{
    const Matrix t(2, 2, kNegInf);
    const std::vector<RowState> st{RowState::Absent, RowState::Absent};
    const LocalStack s{&t, &st};
    EXPECT_THROW(global_embedding(std::span(&s, 1), Matrix::identity(2), false, nullptr), PoolingError);
}

TEST(GlobalEmbedding, AggregatedBeatsNoNeighboursRow)
{
    const Matrix t1(1, 2, {10.0, 10.0});
    const std::vector<RowState> s1{RowState::NoNeighbors};
    const Matrix t2(1, 2, {1.0, 2.0});
    const std::vector<RowState> s2{RowState::Aggregated};
    const std::vector<LocalStack> stacks{{&t1, &s1}, {&t2, &s2}};
    Matrix pooled;
    std::vector<std::uint32_t> who;
    pool_max(stacks, pooled, who);
    EXPECT_EQ(pooled, t2);
    EXPECT_EQ(who, (std::vector<std::uint32_t>{1, 1}));
}

TEST(Predict, UniformLogitsCostLnTwo)
{
    const Matrix h(2, 1, {0.0, 0.0});
    const std::vector<LabelledRow> lab{{0, 0}, {1, 1}};
    const auto r = predict_and_loss(h, lab, Matrix(2, 1), Matrix(1, 2));
    EXPECT_NEAR(r.loss, 2.0 * std::log(2.0), 1e-15);
}

TEST(Predict, SaturatedCorrectPredictionCostsNothing)
{
    const Matrix h(1, 1, {1.0});
    const std::vector<LabelledRow> lab{{0, 0}};
    const auto r = predict_and_loss(h, lab, Matrix(2, 1, {1000.0, -1000.0}), Matrix(1, 2));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(Predict, ThreeNodeHandComputation)
{
    const Matrix h(3, 2, {1, 0, 0, 1, 1, 1});
    const Matrix psi(2, 2, {1, 0, 0, 2});
    const std::vector<LabelledRow> lab{{0, 0}, {1, 0}, {2, 1}};
    const auto r = predict_and_loss(h, lab, psi, Matrix(1, 2));
    // logits (1,0), (0,2), (1,2)
    const double expected = std::log(1 + std::exp(-1.0)) + std::log(1 + std::exp(2.0)) + std::log(1 + std::exp(-1.0));
    EXPECT_NEAR(r.loss, expected, 1e-12);
    EXPECT_THROW(predict_and_loss(h, std::vector<LabelledRow>{{0, 2}}, psi, Matrix(1, 2)), std::invalid_argument);
}

TEST(Centralized, TwoNodeSingleEdgeByHand)
{
    Graph g = generate_synthetic(2, 1, 2, 1.0, 0.0, 1);
    g.features = Matrix(2, 2, {1, 2, 3, 5});
    ModelConfig cfg{.input_dim = 2, .hidden = 2, .num_classes = 1, .layers = 1, .relu = false};
    ModelWeights w = init_weights(cfg, 1, 2);
    w.global.layers[0] = Matrix::identity(2);
    const auto r = centralized_forward_backward(g, w, cfg, {});
    EXPECT_EQ(r.embeddings[1], Matrix(2, 2, {4, 7, 4, 7}));
}

TEST(Centralized, NodePermutationPermutesOutputs)
{
    Graph g = generate_synthetic(30, 3, 5, 0.3, 0.05, 6);
    ModelConfig cfg{.input_dim = 5, .hidden = 4, .num_classes = 3, .layers = 2};
    const auto w = init_weights(cfg, 3, 4);
    const auto a = centralized_forward_backward(g, w, cfg, {});

    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(1, 1);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Graph h = g;
    for (std::size_t i = 0; i < 30; ++i)
    {
        h.node_ids[i] = g.node_ids[perm[i]];
        h.labels[i] = g.labels[perm[i]];
        h.splits[i] = g.splits[perm[i]];
        for (std::size_t k = 0; k < 5; ++k)
            h.features(i, k) = g.features(perm[i], k);
    }
    const auto b = centralized_forward_backward(h, w, cfg, {});
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            EXPECT_NEAR(b.embeddings[2](i, k), a.embeddings[2](perm[i], k), 1e-12);
}

class CentralizedGradient : public ::testing::TestWithParam<std::tuple<UpdateKind, MessageKind, bool>>
{
};

TEST_P(CentralizedGradient, MatchesFiniteDifferences)
{
    const auto [kind, message, relu] = GetParam();
    const Graph g = six_node_graph(11);
    ModelConfig cfg{.input_dim = 3, .hidden = 4, .num_classes = 2, .layers = 2, .update = kind, .message = message,
                    .relu = relu};
    ModelWeights w = init_weights(cfg, 5, 6);
    // Nonzero gate bias so its gradient is exercised.
    for (auto& l : w.local.layers)
        for (double& b : l.gate_bias.data())
            b = 0.1;
    const auto rows = train_rows(g);
    const auto r = centralized_forward_backward(g, w, cfg, rows);
    const auto analytic = r.grads.flatten();

    const auto numeric = finite_diff_grad(
        [&](std::span<const double> x) {
            ModelWeights v = w;
            v.unflatten(x);
            return centralized_forward_backward(g, v, cfg, rows).loss;
        },
        w.flatten(), 1e-6);
    ASSERT_EQ(analytic.size(), numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i)
        EXPECT_LT(relative_error(analytic[i], numeric[i]), 1e-5) << "param " << i;
}

INSTANTIATE_TEST_SUITE_P(
    Kinds, CentralizedGradient,
    ::testing::Values(std::make_tuple(UpdateKind::Sum, MessageKind::Identity, true),
                      std::make_tuple(UpdateKind::Sum, MessageKind::Identity, false),
                      std::make_tuple(UpdateKind::Concat, MessageKind::Identity, true),
                      std::make_tuple(UpdateKind::Gated, MessageKind::Identity, true),
                      std::make_tuple(UpdateKind::Sum, MessageKind::Linear, true),
                      std::make_tuple(UpdateKind::Gated, MessageKind::Linear, false),
                      std::make_tuple(UpdateKind::NegatedSum, MessageKind::Identity, true)));

TEST(Centralized, NonArgmaxPerturbationLeavesOutputUnchanged)
{
    Graph g = six_node_graph(3);
    // Node 2's neighbours are 1 and 3; make node 3 lose on every coordinate.
    for (std::size_t k = 0; k < 3; ++k)
        g.features(3, k) = g.features(1, k) - 1.0;
    ModelConfig cfg{.input_dim = 3, .hidden = 4, .num_classes = 2, .layers = 1, .relu = false};
    const auto w = init_weights(cfg, 1, 1);
    const auto base = centralized_forward_backward(g, w, cfg, {});
    Graph h = g;
    for (std::size_t k = 0; k < 3; ++k)
        h.features(3, k) -= 1e-3;
    const auto moved = centralized_forward_backward(h, w, cfg, {});
    for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(moved.embeddings[1](2, k), base.embeddings[1](2, k));
}

TEST(Weights, FlattenRoundTripAndSeedIndependence)
{
    ModelConfig cfg{.input_dim = 3, .hidden = 4, .num_classes = 2, .layers = 2, .update = UpdateKind::Gated,
                    .message = MessageKind::Linear};
    ModelWeights w = init_weights(cfg, 1, 2);
    ModelWeights v = init_weights(cfg, 9, 9);
    v.unflatten(w.flatten());
    EXPECT_EQ(v, w);
    EXPECT_EQ(init_weights(cfg, 1, 3).local, w.local);
    EXPECT_NE(init_weights(cfg, 1, 3).global, w.global);
    EXPECT_EQ(init_weights(cfg, 4, 2).global, w.global);
    EXPECT_NE(init_weights(cfg, 4, 2).local, w.local);
}

TEST(Monotone, CertifiedKindsHoldEverywhere)
{
    for (const auto kind : {UpdateKind::Sum, UpdateKind::Concat, UpdateKind::Gated})
    {
        Rng rng(2024, 1);
        const auto r = check_monotone_update(kind, 1000, rng);
        EXPECT_EQ(r.holds, 1000u) << to_string(kind);
    }
}

TEST(Monotone, NegatedSumIsCaught)
{
    Rng rng(2024, 2);
    const auto r = check_monotone_update(UpdateKind::NegatedSum, 1000, rng);
    EXPECT_LT(r.fraction(), 0.1);
    EXPECT_FALSE(is_monotone(UpdateKind::NegatedSum));
}
