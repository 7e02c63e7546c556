#include "sapgnn/protocol.hpp"

#include <fstream>
#include <iomanip>

namespace sapgnn
{
    bool EarlyStopper::observe(std::size_t epoch, const ClassificationMetrics& val, const ClassificationMetrics& test)
    {
        if (!seen_ || val.accuracy > best_val_.accuracy)
        {
            seen_ = true;
            best_epoch_ = epoch;
            best_val_ = val;
            test_at_best_ = test;
            since_best_ = 0;
            return false;
        }
        return ++since_best_ >= patience_;
    }

    namespace
    {
        ClassificationMetrics safe_metrics(const Confusion& c)
        {
            if (c.total() == 0)
                return {};
            return metrics(c);
        }
    } // namespace

    TrainingResult train_protocol(const ProtocolConfig& cfg, std::vector<LocalGraph> holders, const TrainConfig& train)
    {
        auto parties = init_parties(cfg, std::move(holders));
        EarlyStopper stopper(train.patience);
        TrainingResult r;
        const std::size_t C = cfg.model.num_classes;

        for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch)
        {
            parties->transport.set_epoch(epoch);
            const double train_loss = forward_pass(*parties, true).total_loss();
            backward_pass(*parties);
            weight_update(*parties);

            forward_pass(*parties, false);
            ClassificationMetrics by_split[3];
            double losses[3] = {train_loss, 0.0, 0.0};
            const Split splits[3] = {Split::Train, Split::Val, Split::Test};
            for (int s = 0; s < 3; ++s)
            {
                Confusion c(C);
                for (const auto& h : parties->holders)
                {
                    const auto counts = h.evaluate(splits[s]);
                    c += counts.confusion;
                    if (s > 0)
                        losses[s] += counts.loss;
                }
                by_split[s] = safe_metrics(c);
                r.outcome.history.push_back({epoch, splits[s], by_split[s], losses[s]});
            }
            r.outcome.epochs_run = epoch;
            if (stopper.observe(epoch, by_split[1], by_split[2]))
                break;
        }
        r.outcome.best_epoch = stopper.best_epoch();
        r.outcome.best_val = stopper.best_val();
        r.outcome.test_at_best = stopper.test_at_best();
        r.weights = {parties->holders.front().weights(), parties->server->weights()};
        r.comm = parties->comm;
        r.audit = parties->audit;
        r.audit_report = verify_privacy_audit(parties->audit.records(), cfg.mode);
        return r;
    }

    TrainingResult run_training(const RunConfig& cfg)
    {
        const Graph g = load_run_dataset(cfg.dataset);
        return train_protocol(protocol_config(cfg, g), partition_graph(g, cfg.partition), cfg.train);
    }

    void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& history)
    {
        out << "epoch,split,accuracy,macro_f1,loss\n";
        out << std::setprecision(17);
        for (const auto& m : history)
            out << m.epoch << ',' << to_string(m.split) << ',' << m.metrics.accuracy << ',' << m.metrics.macro_f1 << ','
                << m.loss << '\n';
    }

    void write_run_outputs(const std::filesystem::path& dir, const TrainingResult& r)
    {
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "metrics.csv", std::ios::binary);
            write_metrics_csv(out, r.outcome.history);
        }
        {
            std::ofstream out(dir / "comm.csv", std::ios::binary);
            r.comm.write_csv(out);
        }
        {
            std::ofstream out(dir / "audit.jsonl", std::ios::binary);
            r.audit.write_jsonl(out);
        }
    }

} // namespace sapgnn
