#include "sapgnn/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sapgnn;

namespace
{
    const char* kRun = R"({"dataset": {"synthetic": {"n_nodes": 40, "n_classes": 3, "feat_dim": 6,
        "train_per_class": 4, "seed": 9}},
        "partition": {"P": 1}, "model": {"hidden": 6, "dropout": 0.5},
        "train": {"max_epochs": 12, "patience": 50, "seed": 17}})";

    std::filesystem::path scratch(const std::string& name)
    {
        const auto p = std::filesystem::temp_directory_path() / ("sapgnn-harness-" + name);
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p;
    }
} // namespace

TEST(Trainers, SingleHolderBaselinesAgree)
{
    const auto cfg = parse_run_config(kRun);
    const Graph g = load_run_dataset(cfg.dataset);
    const auto central = train_centralized(cfg, g);
    const auto sp = train_sp(partition_graph(g, cfg.partition), model_config(cfg, g), cfg.train, &g);
    const auto fed = run_training(cfg);

    ASSERT_EQ(sp.holders.size(), 1u);
    const auto& h = sp.holders.front().outcome;
    ASSERT_EQ(h.history.size(), central.outcome.history.size());
    for (std::size_t i = 0; i < h.history.size(); ++i)
    {
        EXPECT_EQ(h.history[i].metrics.accuracy, central.outcome.history[i].metrics.accuracy);
        EXPECT_EQ(h.history[i].loss, central.outcome.history[i].loss);
    }
    EXPECT_EQ(sp.mean_test.accuracy, central.outcome.test_at_best.accuracy);
    EXPECT_EQ(fed.outcome.best_epoch, central.outcome.best_epoch);
    EXPECT_EQ(fed.outcome.test_at_best.accuracy, central.outcome.test_at_best.accuracy);
}

TEST(Trainers, BestWeightsScoreTheBestEpoch)
{
    const auto cfg = parse_run_config(kRun);
    const Graph g = load_run_dataset(cfg.dataset);
    const auto run = train_centralized(cfg, g);
    const auto m = evaluate_test(g, run.best_weights, model_config(cfg, g));
    EXPECT_DOUBLE_EQ(m.accuracy, run.outcome.test_at_best.accuracy);
    EXPECT_DOUBLE_EQ(m.macro_f1, run.outcome.test_at_best.macro_f1);
}

TEST(Trainers, SpScoresTheSharedTestSet)
{
    auto cfg = parse_run_config(kRun, {"partition.kind=label-skew", "partition.P=3", "partition.q=0"});
    const Graph g = load_run_dataset(cfg.dataset);
    const auto sp = train_sp(partition_graph(g, cfg.partition), model_config(cfg, g), cfg.train, &g);
    for (const auto& h : sp.holders)
    {
        ASSERT_FALSE(h.skipped);
        // Each holder knows one class, so it cannot score above that class's share of the test set.
        EXPECT_LT(h.outcome.test_at_best.accuracy, 0.75);
    }
}

TEST(Sweep, ResumesAndRetriesMissingCells)
{
    const auto dir = scratch("resume");
    const auto csv = dir / "sweep.csv";
    auto spec = parse_experiment_spec(kRun, {"sweep.P=[1,2]", "sweep.methods=[\"sp\",\"sapgnn\"]", "sweep.repeats=2",
                                             "train.max_epochs=3"});
    const auto first = run_sweep(spec, csv);
    EXPECT_TRUE(first.failures.empty());
    EXPECT_EQ(first.computed, 8u);
    EXPECT_EQ(first.resumed, 0u);

    const auto second = run_sweep(spec, csv);
    EXPECT_EQ(second.computed, 0u);
    EXPECT_EQ(second.resumed, 8u);

    std::ifstream in(csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);)
        lines.push_back(l);
    in.close();
    ASSERT_EQ(lines.size(), 9u);
    EXPECT_EQ(lines.front(), kSweepHeader);
    const std::string dropped = lines.back();
    lines.pop_back();
    std::ofstream out(csv, std::ios::trunc);
    for (const auto& l : lines)
        out << l << '\n';
    out.close();

    const auto third = run_sweep(spec, csv);
    EXPECT_EQ(third.computed, 1u);
    EXPECT_EQ(third.resumed, 7u);
    EXPECT_EQ(format_sweep_row(third.rows.back()).substr(0, 20), dropped.substr(0, 20));
    EXPECT_EQ(read_sweep_csv(csv).size(), 8u);
    std::filesystem::remove_all(dir);
}

TEST(Sweep, CellSeedIgnoresMethodAndHolders)
{
    EXPECT_EQ(cell_seed(100, "cora", 0), cell_seed(100, "cora", 0));
    EXPECT_NE(cell_seed(100, "cora", 0), cell_seed(100, "cora", 1));
    EXPECT_NE(cell_seed(100, "cora", 0), cell_seed(100, "citeseer", 0));
}

TEST(Sweep, SpecRejectsBadSweepSection)
{
    EXPECT_THROW(parse_experiment_spec(kRun, {"sweep.repeat=2"}), std::invalid_argument);
    EXPECT_THROW(parse_experiment_spec(kRun, {"sweep.repeats=0"}), std::invalid_argument);
    EXPECT_THROW(parse_experiment_spec(kRun, {"sweep.q=[150]"}), std::invalid_argument);
    EXPECT_THROW(parse_experiment_spec(kRun, {"sweep.methods=[\"fedavg\"]"}), std::invalid_argument);
    EXPECT_THROW(parse_experiment_spec(kRun, {"sweep.P=[0]"}), std::invalid_argument);
}

TEST(Summary, MeanAndSampleStd)
{
    std::vector<SweepRow> rows(3);
    for (std::size_t i = 0; i < 3; ++i)
    {
        rows[i].method = "sapgnn";
        rows[i].dataset = "d";
        rows[i].holders = i < 2 ? 2 : 3;
        rows[i].repeat = i;
    }
    rows[0].accuracy = 0.5;
    rows[1].accuracy = 0.7;
    rows[2].accuracy = 0.9;
    const auto s = summarize(rows);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].n, 2u);
    EXPECT_DOUBLE_EQ(s[0].accuracy_mean, 0.6);
    EXPECT_NEAR(s[0].accuracy_std, std::sqrt(0.02), 1e-15);
    EXPECT_EQ(s[1].n, 1u);
    EXPECT_EQ(s[1].accuracy_std, 0.0);
}

TEST(Fit, RecoversLineAndR2)
{
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{3, 5, 7, 9};
    const auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    const std::vector<double> flat{2, 2, 2, 2};
    EXPECT_THROW(fit_line(flat, y), std::invalid_argument);
    EXPECT_THROW(fit_line(std::span<const double>(x).first(1), std::span<const double>(y).first(1)),
                 std::invalid_argument);
}

TEST(Audit, JsonlRoundTrip)
{
    auto cfg = parse_run_config(kRun, {"partition.P=2", "train.max_epochs=2", "mode=secure-pooling"});
    const auto r = run_training(cfg);
    std::stringstream ss;
    r.audit.write_jsonl(ss);
    const auto back = read_audit_jsonl(ss);
    EXPECT_EQ(back, r.audit.records());
    EXPECT_TRUE(verify_privacy_audit(back, PoolingMode::SecurePooling).clean());
}
