#include "sapgnn/harness.hpp"

#include <cmath>
#include <iomanip>

namespace sapgnn
{
    namespace
    {
        double max_abs(std::span<const double> a, std::span<const double> b)
        {
            if (a.size() != b.size())
                throw std::logic_error("equivalence: shape mismatch");
            double m = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i)
                m = std::max(m, std::abs(a[i] - b[i]));
            return m;
        }

        void keep_max(std::vector<Deviation>& acc, std::size_t i, const std::string& name, double v)
        {
            if (acc.size() <= i)
                acc.resize(i + 1);
            acc[i].name = name;
            acc[i].max_abs = std::max(acc[i].max_abs, v);
        }
    } // namespace

    void EquivalenceReport::print(std::ostream& out) const
    {
        out << std::scientific << std::setprecision(3);
        for (const auto& d : embeddings)
            out << "embedding " << d.name << "  max |dev| " << d.max_abs << '\n';
        for (const auto& d : gradients)
            out << "gradient  " << d.name << "  max |dev| " << d.max_abs << '\n';
        out << "loss      max |dev| " << loss_deviation << '\n';
        out << "steps " << steps << ", tolerances " << embedding_tolerance << " / " << gradient_tolerance << ": "
            << (pass ? "PASS" : "FAIL") << '\n';
        out << std::defaultfloat;
    }

    EquivalenceReport compare_equivalence(const Graph& g, std::vector<LocalGraph> holders, const ProtocolConfig& cfg,
                                          std::size_t steps)
    {
        if (!is_monotone(cfg.model.update))
        {
            throw PropositionViolation(std::string("update kind '") + to_string(cfg.model.update) +
                                       "' is not monotone in the aggregated message; pooled embeddings would differ "
                                       "from the combined-graph model");
        }
        const auto order = universe_rows(g, cfg.salt);

        // The oracle's loss runs over every owned label, with multiplicity under replication.
        const auto index = g.row_index();
        std::vector<LabelledRow> labelled;
        for (const auto& lg : holders)
            for (const auto& [id, label] : lg.train_labels)
                labelled.push_back({index.at(id), static_cast<std::size_t>(label)});

        auto parties = init_parties(cfg, std::move(holders));
        if (parties->server->universe_size() != g.num_nodes())
            throw std::invalid_argument("compare_equivalence: holders do not cover the graph's node set");

        EquivalenceReport rep;
        rep.gradient_tolerance = cfg.share_mode == ShareMode::Real ? 1e-9 : 1e-4;
        rep.steps = steps;
        for (std::size_t s = 0; s < steps; ++s)
        {
            const ModelWeights w{parties->holders.front().weights(), parties->server->weights()};
            const auto fwd = forward_pass(*parties, true);

            DropoutMasks masks;
            for (const auto& m : parties->server->dropout_masks())
            {
                Matrix graph_order;
                if (!m.empty())
                {
                    graph_order = Matrix(m.rows(), m.cols());
                    for (std::size_t u = 0; u < order.size(); ++u)
                        std::copy_n(m.row(u).begin(), m.cols(), graph_order.row(order[u]).begin());
                }
                masks.push_back(std::move(graph_order));
            }
            const auto ref = centralized_forward_backward(g, w, cfg.model, labelled, &masks);

            const auto emb = parties->server->embeddings();
            for (std::size_t l = 0; l < emb.size(); ++l)
            {
                double dev = 0.0;
                for (std::size_t u = 0; u < order.size(); ++u)
                    dev = std::max(dev, max_abs(emb[l].row(u), ref.embeddings[l + 1].row(order[u])));
                keep_max(rep.embeddings, l, "layer" + std::to_string(l), dev);
            }
            rep.loss_deviation = std::max(rep.loss_deviation, std::abs(fwd.total_loss() - ref.loss));

            const auto bwd = backward_pass(*parties);
            const auto aggregated = weight_update(*parties);
            LocalWeights local = w.local.zeros_like();
            local.unflatten(aggregated);
            const auto names = local.tensor_names();
            const auto mine = std::as_const(local).tensors();
            const auto theirs = ref.grads.local.tensors();
            for (std::size_t i = 0; i < mine.size(); ++i)
                keep_max(rep.gradients, i, names[i], max_abs(mine[i]->data(), theirs[i]->data()));
            for (std::size_t l = 0; l < bwd.global_grads.layers.size(); ++l)
                keep_max(rep.gradients, mine.size() + l, "global.layer" + std::to_string(l),
                         max_abs(bwd.global_grads.layers[l].data(), ref.grads.global.layers[l].data()));
        }

        rep.pass = true;
        for (const auto& d : rep.embeddings)
            rep.pass = rep.pass && d.max_abs < rep.embedding_tolerance;
        for (const auto& d : rep.gradients)
            rep.pass = rep.pass && d.max_abs < rep.gradient_tolerance;
        return rep;
    }

    EquivalenceReport compare_equivalence(const RunConfig& cfg, std::size_t steps)
    {
        const Graph g = load_run_dataset(cfg.dataset);
        return compare_equivalence(g, partition_graph(g, cfg.partition), protocol_config(cfg, g), steps);
    }

} // namespace sapgnn
