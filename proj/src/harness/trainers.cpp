#include "sapgnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sapgnn
{
    namespace
    {
        std::vector<Matrix*> all_tensors(ModelWeights& w)
        {
            auto out = w.local.tensors();
            for (Matrix* m : w.global.tensors())
                out.push_back(m);
            return out;
        }

        std::vector<const Matrix*> all_tensors(const ModelWeights& w)
        {
            auto out = w.local.tensors();
            for (const Matrix* m : w.global.tensors())
                out.push_back(m);
            return out;
        }

        ClassificationMetrics safe_metrics(const Confusion& c)
        {
            return c.total() == 0 ? ClassificationMetrics{} : metrics(c);
        }
    } // namespace

    std::vector<std::size_t> universe_rows(const Graph& g, const Salt& salt)
    {
        std::vector<std::pair<Digest, std::size_t>> d;
        d.reserve(g.num_nodes());
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
            d.emplace_back(node_digest(salt, g.node_ids[i]), i);
        std::sort(d.begin(), d.end());
        std::vector<std::size_t> out;
        out.reserve(d.size());
        for (const auto& [digest, row] : d)
            out.push_back(row);
        return out;
    }

    CentralizedRun train_centralized(const Graph& g, const ModelConfig& model, const TrainConfig& train,
                                     std::uint64_t shared_seed, std::uint64_t server_seed,
                                     const std::vector<std::size_t>* mask_order)
    {
        model.validate();
        const std::size_t N = g.num_nodes();
        if (mask_order != nullptr && mask_order->size() != N)
            throw std::invalid_argument("train_centralized: mask order does not cover the graph");

        CentralizedRun run;
        run.weights = init_weights(model, shared_seed, server_seed);
        AdamHyper hyper;
        hyper.lr = train.lr;
        std::vector<AdamState> adam;
        for (const Matrix* m : all_tensors(std::as_const(run.weights)))
            adam.emplace_back(hyper, m->rows(), m->cols());

        Rng dropout_rng = Rng(server_seed, kServerStream).fork("dropout");
        const auto labelled = train_rows(g);
        EarlyStopper stopper(train.patience);
        const Split splits[3] = {Split::Train, Split::Val, Split::Test};

        for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch)
        {
            DropoutMasks masks;
            if (model.dropout > 0.0)
            {
                masks = draw_dropout_masks(dropout_rng, model, N);
                if (mask_order != nullptr)
                {
                    for (Matrix& m : masks)
                    {
                        if (m.empty())
                            continue;
                        Matrix permuted(m.rows(), m.cols());
                        for (std::size_t u = 0; u < N; ++u)
                            std::copy_n(m.row(u).begin(), m.cols(), permuted.row((*mask_order)[u]).begin());
                        m = std::move(permuted);
                    }
                }
            }
            const auto step = centralized_forward_backward(g, run.weights, model, labelled, &masks);
            auto params = all_tensors(run.weights);
            const auto grads = all_tensors(step.grads);
            for (std::size_t i = 0; i < params.size(); ++i)
                adam_step(adam[i], *params[i], *grads[i]);

            const auto eval = centralized_forward_backward(g, run.weights, model, {});
            ClassificationMetrics by_split[3];
            for (int s = 0; s < 3; ++s)
            {
                Confusion c(model.num_classes);
                double loss = 0.0;
                for (std::size_t i = 0; i < N; ++i)
                {
                    if (g.splits[i] != splits[s])
                        continue;
                    const auto p = eval.probabilities.row(i);
                    const auto label = static_cast<std::size_t>(g.labels[i]);
                    c.add(label, static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
                    loss -= std::log(std::max(p[label], kProbabilityClamp));
                }
                by_split[s] = safe_metrics(c);
                run.outcome.history.push_back({epoch, splits[s], by_split[s], s == 0 ? step.loss : loss});
            }
            run.outcome.epochs_run = epoch;
            const bool stop = stopper.observe(epoch, by_split[1], by_split[2]);
            if (stopper.best_epoch() == epoch)
                run.best_weights = run.weights;
            if (stop)
                break;
        }
        run.outcome.best_epoch = stopper.best_epoch();
        run.outcome.best_val = stopper.best_val();
        run.outcome.test_at_best = stopper.test_at_best();
        return run;
    }

    CentralizedRun train_centralized(const RunConfig& cfg, const Graph& g)
    {
        const auto pc = protocol_config(cfg, g);
        const auto order = universe_rows(g, pc.salt);
        return train_centralized(g, pc.model, cfg.train, pc.shared_seed, pc.server_seed, &order);
    }

    ClassificationMetrics evaluate_test(const Graph& g, const ModelWeights& w, const ModelConfig& model)
    {
        const auto eval = centralized_forward_backward(g, w, model, {});
        Confusion c(model.num_classes);
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
        {
            if (g.splits[i] != Split::Test)
                continue;
            const auto p = eval.probabilities.row(i);
            c.add(static_cast<std::size_t>(g.labels[i]),
                  static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
        }
        return safe_metrics(c);
    }

    SpResult train_sp(const std::vector<LocalGraph>& holders, const ModelConfig& model, const TrainConfig& train,
                      const Graph* shared)
    {
        SpResult r;
        double acc = 0.0;
        double f1 = 0.0;
        std::size_t epochs = 0;
        std::size_t trained = 0;
        for (const auto& lg : holders)
        {
            HolderRun h;
            h.holder = lg.holder_id;
            if (lg.train_labels.empty())
            {
                h.skipped = true;
                h.reason = "no train labels";
            }
            else if (shared == nullptr && lg.graph.count(Split::Test) == 0)
            {
                h.skipped = true;
                h.reason = "no visible test nodes";
            }
            else
            {
                // Same seeds and mask order the protocol derives from train.seed.
                const auto order = universe_rows(lg.graph, salt_from_seed(train.seed));
                auto run = train_centralized(lg.graph, model, train, train.seed, train.seed + 1, &order);
                h.outcome = std::move(run.outcome);
                if (shared != nullptr)
                    h.outcome.test_at_best = evaluate_test(*shared, run.best_weights, model);
                acc += h.outcome.test_at_best.accuracy;
                f1 += h.outcome.test_at_best.macro_f1;
                epochs += h.outcome.epochs_run;
                ++trained;
            }
            r.holders.push_back(std::move(h));
        }
        if (trained == 0)
            throw std::runtime_error("train_sp: no holder could be trained");
        r.mean_test.accuracy = acc / static_cast<double>(trained);
        r.mean_test.macro_f1 = f1 / static_cast<double>(trained);
        r.mean_epochs = (epochs + trained / 2) / trained;
        return r;
    }

} // namespace sapgnn
