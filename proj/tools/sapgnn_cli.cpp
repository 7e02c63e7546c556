#include "sapgnn/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

using namespace sapgnn;

namespace
{
    constexpr int kExitOk = 0;
    constexpr int kExitError = 1;
    constexpr int kExitEquivalence = 2;
    constexpr int kExitAudit = 3;

    /// Flags that mirror run config keys; anything set becomes a --set override.
    struct RunFlags
    {
        std::string config;
        std::vector<std::string> sets;
        std::string dataset;
        std::optional<std::size_t> holders;
        std::optional<double> q;
        std::optional<double> duplicate_fraction;
        std::string partition_kind;
        std::string mode;
        std::string share_mode;
        std::string update_kind;
        std::optional<std::size_t> layers;
        std::optional<std::size_t> hidden;
        std::optional<double> dropout;
        std::optional<std::size_t> epochs;
        std::optional<std::size_t> patience;
        std::optional<std::uint64_t> seed;

        void attach(CLI::App* app)
        {
            app->add_option("--config", config, "Run config JSON file");
            app->add_option("--set", sets, "Override a config key, e.g. partition.P=3")->take_all();
            app->add_option("--dataset", dataset, "Dataset path (edge-list dir or synthetic spec JSON)");
            app->add_option("--P", holders, "Number of data holders");
            app->add_option("--q", q, "Label-skew mixing percentage");
            app->add_option("--duplicate-fraction", duplicate_fraction, "Fraction of edges given to a second holder");
            app->add_option("--partition", partition_kind, "uniform | label-skew");
            app->add_option("--mode", mode, "naive | secure-pooling");
            app->add_option("--share-mode", share_mode, "real | fixed-point");
            app->add_option("--update-kind", update_kind, "sum | concat | gated | negated-sum");
            app->add_option("--layers", layers);
            app->add_option("--hidden", hidden);
            app->add_option("--dropout", dropout);
            app->add_option("--epochs", epochs, "Maximum epochs");
            app->add_option("--patience", patience);
            app->add_option("--seed", seed, "Training seed");
        }

        std::vector<std::string> overrides() const
        {
            std::vector<std::string> o;
            auto str = [&](const std::string& key, const std::string& v) {
                if (!v.empty())
                    o.push_back(key + "=" + nlohmann::json(v).dump());
            };
            auto num = [&](const std::string& key, const auto& v) {
                if (v)
                    o.push_back(key + "=" + nlohmann::json(*v).dump());
            };
            str("dataset.path", dataset);
            num("partition.P", holders);
            num("partition.q", q);
            num("partition.duplicate_fraction", duplicate_fraction);
            str("partition.kind", partition_kind);
            str("mode", mode);
            str("share_mode", share_mode);
            str("model.update_kind", update_kind);
            num("model.layers", layers);
            num("model.hidden", hidden);
            num("model.dropout", dropout);
            num("train.max_epochs", epochs);
            num("train.patience", patience);
            num("train.seed", seed);
            o.insert(o.end(), sets.begin(), sets.end());
            return o;
        }

        RunConfig load() const
        {
            return config.empty() ? parse_run_config("{}", overrides()) : load_run_config(config, overrides());
        }
    };

    void print_metrics(const char* label, const ClassificationMetrics& m)
    {
        std::cout << label << " accuracy " << m.accuracy << "  macro-F1 " << m.macro_f1;
        if (m.total > 0)
            std::cout << "  (" << m.total << " nodes)";
        std::cout << '\n';
    }

    void write_tsv_labels(const std::filesystem::path& file, const LocalGraph& lg)
    {
        std::ofstream out(file, std::ios::binary);
        for (const auto& [id, label] : lg.train_labels)
            out << id << '\t' << label << '\n';
    }

    int cmd_gen_data(const std::string& spec_file, SyntheticSpec spec, const std::string& out)
    {
        if (!spec_file.empty())
            spec = synthetic_spec_from_json_file(spec_file);
        const Graph g = generate_synthetic(spec);
        write_dataset(out, g);
        std::cout << "wrote " << g.num_nodes() << " nodes, " << g.edges.size() << " edges, " << g.num_classes
                  << " classes to " << out << '\n';
        return kExitOk;
    }

    int cmd_partition(const RunConfig& cfg, const std::string& out)
    {
        const Graph g = load_run_dataset(cfg.dataset);
        const auto holders = partition_graph(g, cfg.partition);
        for (const auto& lg : holders)
        {
            std::set<std::int32_t> classes;
            for (const auto& [id, label] : lg.train_labels)
                classes.insert(label);
            std::cout << holder_party(lg.holder_id) << ": " << lg.graph.num_nodes() << " nodes, "
                      << lg.graph.edges.size() << " edges, " << lg.train_labels.size() << " train labels, "
                      << lg.eval_nodes.size() << " eval nodes, train classes {";
            bool first = true;
            for (const auto c : classes)
            {
                std::cout << (first ? "" : ",") << c;
                first = false;
            }
            std::cout << "}\n";
            if (!out.empty())
            {
                const auto dir = std::filesystem::path(out) / holder_party(lg.holder_id);
                write_dataset(dir, lg.graph);
                write_tsv_labels(dir / "train_labels.tsv", lg);
                std::ofstream ev(dir / "eval_nodes.tsv", std::ios::binary);
                for (const auto id : lg.eval_nodes)
                    ev << id << '\n';
            }
        }
        return kExitOk;
    }

    int cmd_train_centralized(const RunConfig& cfg, const std::string& out)
    {
        const Graph g = load_run_dataset(cfg.dataset);
        const auto run = train_centralized(cfg, g);
        if (!out.empty())
        {
            std::filesystem::create_directories(out);
            std::ofstream f(std::filesystem::path(out) / "metrics.csv", std::ios::binary);
            write_metrics_csv(f, run.outcome.history);
        }
        std::cout << "epochs " << run.outcome.epochs_run << ", best epoch " << run.outcome.best_epoch << '\n';
        print_metrics("val ", run.outcome.best_val);
        print_metrics("test", run.outcome.test_at_best);
        return kExitOk;
    }

    int cmd_train_sp(const RunConfig& cfg)
    {
        const Graph g = load_run_dataset(cfg.dataset);
        const auto sp = train_sp(partition_graph(g, cfg.partition), model_config(cfg, g), cfg.train, &g);
        for (const auto& h : sp.holders)
        {
            if (h.skipped)
            {
                std::cout << holder_party(h.holder) << ": skipped (" << h.reason << ")\n";
                continue;
            }
            std::cout << holder_party(h.holder) << ": ";
            print_metrics("test", h.outcome.test_at_best);
        }
        print_metrics("mean test", sp.mean_test);
        return kExitOk;
    }

    int cmd_train_sapgnn(const RunConfig& cfg, const std::string& out)
    {
        const auto r = run_training(cfg);
        if (!out.empty())
            write_run_outputs(out, r);
        std::cout << "epochs " << r.outcome.epochs_run << ", best epoch " << r.outcome.best_epoch << ", "
                  << r.comm.total() << " bytes exchanged\n";
        print_metrics("val ", r.outcome.best_val);
        print_metrics("test", r.outcome.test_at_best);
        if (!r.audit_report.clean())
        {
            for (const auto& f : r.audit_report.findings)
                std::cerr << "audit: " << f.describe() << '\n';
            return kExitAudit;
        }
        return kExitOk;
    }

    int cmd_verify(const RunConfig& cfg, std::size_t steps)
    {
        try
        {
            const auto rep = compare_equivalence(cfg, steps);
            rep.print(std::cout);
            return rep.pass ? kExitOk : kExitEquivalence;
        }
        catch (const PropositionViolation& e)
        {
            std::cerr << "refused: " << e.what() << '\n';
            return kExitEquivalence;
        }
    }

    int cmd_sweep(const std::string& spec_file, const std::vector<std::string>& sets, const std::string& out)
    {
        const auto spec = load_experiment_spec(spec_file, sets);
        const std::filesystem::path dir(out);
        const auto res = run_sweep(spec, dir / "sweep.csv", [](const SweepRow& r) {
            std::cout << r.method << " P=" << r.holders << " q=" << r.q << " repeat " << r.repeat << ": accuracy "
                      << r.accuracy << '\n';
        });
        std::ofstream summary(dir / "summary.csv", std::ios::binary);
        write_summary_csv(summary, summarize(res.rows));
        std::cout << res.computed << " cells computed, " << res.resumed << " resumed\n";
        for (const auto& f : res.failures)
            std::cerr << "failed cell " << f.key << ": " << f.error << '\n';
        return res.failures.empty() ? kExitOk : kExitError;
    }

    int cmd_audit(const std::string& log_file, const std::string& mode)
    {
        std::ifstream in(log_file, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot open " + log_file);
        const auto report = verify_privacy_audit(read_audit_jsonl(in), pooling_mode_from_string(mode));
        std::cout << report.records << " records, " << report.server_plaintext_embeddings
                  << " plaintext local embeddings at the server, " << report.findings.size() << " findings\n";
        for (const auto& f : report.findings)
            std::cout << "  " << f.describe() << '\n';
        return report.clean() ? kExitOk : kExitAudit;
    }
} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Split-learning GNN training with secure aggregation"};
    app.require_subcommand(1);

    std::string out;
    int code = kExitOk;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    std::string spec_file;
    SyntheticSpec spec;
    gen->add_option("--spec", spec_file, "Synthetic spec JSON");
    gen->add_option("--n-nodes", spec.n_nodes);
    gen->add_option("--n-classes", spec.n_classes);
    gen->add_option("--feat-dim", spec.feat_dim);
    gen->add_option("--p-in", spec.intra_class_edge_prob, "Intra-class edge probability");
    gen->add_option("--p-out", spec.inter_class_edge_prob, "Inter-class edge probability");
    gen->add_option("--train-per-class", spec.train_per_class);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--out", out, "Output directory")->required();
    gen->callback([&] { code = cmd_gen_data(spec_file, spec, out); });

    RunFlags part_flags, central_flags, sp_flags, sap_flags, eq_flags;

    auto* part = app.add_subcommand("partition", "Split a dataset across data holders");
    part_flags.attach(part);
    part->add_option("--out", out, "Write each holder's view here");
    part->callback([&] { code = cmd_partition(part_flags.load(), out); });

    auto* central = app.add_subcommand("train-centralized", "Train on the combined graph");
    central_flags.attach(central);
    central->add_option("--out", out, "Output directory");
    central->callback([&] { code = cmd_train_centralized(central_flags.load(), out); });

    auto* sp = app.add_subcommand("train-sp", "Train each holder separately");
    sp_flags.attach(sp);
    sp->callback([&] { code = cmd_train_sp(sp_flags.load()); });

    auto* sap = app.add_subcommand("train-sapgnn", "Run the split-learning protocol");
    sap_flags.attach(sap);
    sap->add_option("--out", out, "Output directory for metrics.csv, comm.csv, audit.jsonl");
    sap->callback([&] { code = cmd_train_sapgnn(sap_flags.load(), out); });

    auto* eq = app.add_subcommand("verify-equivalence", "Compare the protocol against the combined-graph model");
    eq_flags.attach(eq);
    std::size_t steps = 1;
    eq->add_option("--steps", steps, "Training steps to compare");
    eq->callback([&] { code = cmd_verify(eq_flags.load(), steps); });

    auto* sweep = app.add_subcommand("sweep", "Run a P x q x repeat sweep");
    std::string sweep_spec;
    std::vector<std::string> sweep_sets;
    sweep->add_option("--config", sweep_spec, "Sweep spec JSON (run config plus a sweep section)")->required();
    sweep->add_option("--set", sweep_sets, "Override, e.g. sweep.repeats=5")->take_all();
    sweep->add_option("--out", out, "Output directory")->required();
    sweep->callback([&] { code = cmd_sweep(sweep_spec, sweep_sets, out); });

    auto* audit = app.add_subcommand("audit", "Check an audit log against the privacy rules");
    std::string log_file;
    std::string mode = "naive";
    audit->add_option("--log", log_file, "audit.jsonl")->required();
    audit->add_option("--mode", mode, "naive | secure-pooling");
    audit->callback([&] { code = cmd_audit(log_file, mode); });

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        return app.exit(e);
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return code;
}
