#include "sapgnn/graph.hpp"
#include "sapgnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sapgnn
{
    namespace
    {
        /// Copy of `g` restricted to `keep` rows (ascending) and the given edges.
        Graph subgraph(const Graph& g, const std::vector<std::size_t>& keep, std::vector<Edge> edges)
        {
            Graph out;
            out.num_classes = g.num_classes;
            out.features = Matrix(keep.size(), g.feature_dim());
            for (std::size_t k = 0; k < keep.size(); ++k)
            {
                const std::size_t r = keep[k];
                out.node_ids.push_back(g.node_ids[r]);
                out.labels.push_back(g.labels[r]);
                out.splits.push_back(g.splits[r]);
                std::copy(g.features.row(r).begin(), g.features.row(r).end(), out.features.row(k).begin());
            }
            out.edges = std::move(edges);
            return out;
        }

        /// Train rows owned by other holders lose their train mask and label in this holder's view.
        void restrict_train_labels(LocalGraph& lg)
        {
            auto& g = lg.graph;
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
            {
                if (g.splits[i] == Split::Train && !lg.train_labels.contains(g.node_ids[i]))
                {
                    g.splits[i] = Split::None;
                    g.labels[i] = kUnlabeled;
                }
            }
        }
    } // namespace

    std::size_t round_half_even(double x)
    {
        return static_cast<std::size_t>(std::nearbyint(x));
    }

    std::pair<std::size_t, std::size_t> class_block(std::size_t num_classes, std::size_t holders, std::size_t holder)
    {
        // First (C mod P) holders get one extra class, like numpy.array_split.
        const std::size_t base = num_classes / holders;
        const std::size_t extra = num_classes % holders;
        const std::size_t first = holder * base + std::min(holder, extra);
        const std::size_t size = base + (holder < extra ? 1 : 0);
        return {first, first + size};
    }

    std::vector<LocalGraph> split_edges_uniform(const Graph& g, const UniformSplitOptions& opts)
    {
        const std::size_t P = opts.holders;
        if (P == 0)
        {
            throw std::invalid_argument("split_edges_uniform: holder count must be >= 1");
        }
        if (!(opts.duplicate_fraction >= 0.0 && opts.duplicate_fraction <= 1.0))
        {
            throw std::invalid_argument("split_edges_uniform: duplicate_fraction must lie in [0, 1]");
        }
        g.validate();

        Rng edge_rng(opts.seed, 11);
        Rng label_rng(opts.seed, 12);

        std::vector<std::vector<Edge>> holder_edges(P);
        for (const auto& e : g.edges)
        {
            const auto owner = static_cast<std::size_t>(edge_rng.below(P));
            holder_edges[owner].push_back(e);
            if (P > 1 && opts.duplicate_fraction > 0.0 && edge_rng.bernoulli(opts.duplicate_fraction))
            {
                const auto other = (owner + 1 + static_cast<std::size_t>(edge_rng.below(P - 1))) % P;
                holder_edges[other].push_back(e);
            }
        }

        std::vector<std::size_t> train_rows = g.rows_in(Split::Train);
        std::shuffle(train_rows.begin(), train_rows.end(), label_rng.engine());
        std::vector<std::size_t> train_owner(g.num_nodes(), P);
        for (std::size_t k = 0; k < train_rows.size(); ++k)
        {
            train_owner[train_rows[k]] = k % P;
        }
        std::vector<std::size_t> eval_rows;
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
        {
            if (g.splits[i] == Split::Val || g.splits[i] == Split::Test)
            {
                eval_rows.push_back(i);
            }
        }
        std::shuffle(eval_rows.begin(), eval_rows.end(), label_rng.engine());
        std::vector<std::size_t> eval_owner(g.num_nodes(), P);
        for (std::size_t k = 0; k < eval_rows.size(); ++k)
        {
            eval_owner[eval_rows[k]] = k % P;
        }

        const auto index = g.row_index();
        std::vector<bool> incident(g.num_nodes(), false);
        for (const auto& e : g.edges)
        {
            incident[index.at(e.a)] = true;
            incident[index.at(e.b)] = true;
        }
        std::vector<LocalGraph> out(P);
        for (std::size_t p = 0; p < P; ++p)
        {
            std::vector<std::size_t> keep;
            if (opts.visibility == NodeVisibility::FullNodeSet)
            {
                keep.resize(g.num_nodes());
                std::iota(keep.begin(), keep.end(), std::size_t{0});
            }
            else
            {
                std::vector<bool> present(g.num_nodes(), false);
                for (const auto& e : holder_edges[p])
                {
                    present[index.at(e.a)] = true;
                    present[index.at(e.b)] = true;
                }
                for (std::size_t i = 0; i < g.num_nodes(); ++i)
                {
                    // Labelled nodes go with their label owner; edge-free nodes round-robin so
                    // that every node has at least one holder.
                    const bool owns_label = train_owner[i] == p || eval_owner[i] == p;
                    if (present[i] || owns_label || (!incident[i] && i % P == p))
                    {
                        keep.push_back(i);
                    }
                }
            }
            LocalGraph& lg = out[p];
            lg.holder_id = p;
            lg.graph = subgraph(g, keep, holder_edges[p]);
            for (const std::size_t r : keep)
            {
                if (g.splits[r] == Split::Train && (opts.labels == LabelPolicy::Replicate || train_owner[r] == p))
                {
                    lg.train_labels.emplace(g.node_ids[r], g.labels[r]);
                }
                if (eval_owner[r] == p)
                {
                    lg.eval_nodes.insert(g.node_ids[r]);
                }
            }
            restrict_train_labels(lg);
            lg.validate(g.feature_dim());
        }
        return out;
    }

    std::vector<LocalGraph> split_label_skew(const Graph& g, std::size_t holders, double q_percent, std::uint64_t seed)
    {
        const std::size_t P = holders;
        if (P == 0)
        {
            throw std::invalid_argument("split_label_skew: holder count must be >= 1");
        }
        if (!(q_percent >= 0.0 && q_percent <= 100.0))
        {
            throw std::invalid_argument("split_label_skew: q must lie in [0, 100]");
        }
        if (g.num_classes < P)
        {
            throw std::invalid_argument("split_label_skew: need at least as many classes as holders");
        }
        g.validate();

        Rng rng(seed, 21);
        std::vector<std::size_t> class_owner(g.num_classes);
        for (std::size_t p = 0; p < P; ++p)
        {
            const auto [first, last] = class_block(g.num_classes, P, p);
            for (std::size_t c = first; c < last; ++c)
            {
                class_owner[c] = p;
            }
        }

        std::vector<std::vector<std::size_t>> base(P);
        std::size_t unlabeled_turn = 0;
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
        {
            if (g.labels[i] == kUnlabeled)
            {
                base[unlabeled_turn++ % P].push_back(i);
            }
            else
            {
                base[class_owner[static_cast<std::size_t>(g.labels[i])]].push_back(i);
            }
        }

        std::vector<std::size_t> owner(g.num_nodes());
        for (std::size_t p = 0; p < P; ++p)
        {
            for (const std::size_t r : base[p])
            {
                owner[r] = p;
            }
        }
        if (P > 1)
        {
            for (std::size_t p = 0; p < P; ++p)
            {
                std::vector<std::size_t> pool = base[p];
                std::shuffle(pool.begin(), pool.end(), rng.engine());
                const std::size_t moves = round_half_even(q_percent / 100.0 * static_cast<double>(pool.size()));
                for (std::size_t k = 0; k < moves; ++k)
                {
                    owner[pool[k]] = (p + 1 + k % (P - 1)) % P;
                }
            }
        }

        const auto index = g.row_index();
        std::vector<LocalGraph> out(P);
        for (std::size_t p = 0; p < P; ++p)
        {
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
            {
                if (owner[i] == p)
                {
                    keep.push_back(i);
                }
            }
            std::vector<Edge> edges;
            for (const auto& e : g.edges)
            {
                if (owner[index.at(e.a)] == p && owner[index.at(e.b)] == p)
                {
                    edges.push_back(e);
                }
            }
            LocalGraph& lg = out[p];
            lg.holder_id = p;
            lg.graph = subgraph(g, keep, std::move(edges));
            for (const std::size_t r : keep)
            {
                if (g.splits[r] == Split::Train)
                {
                    lg.train_labels.emplace(g.node_ids[r], g.labels[r]);
                }
                else if (g.splits[r] == Split::Val || g.splits[r] == Split::Test)
                {
                    lg.eval_nodes.insert(g.node_ids[r]);
                }
            }
            lg.validate(g.feature_dim());
        }
        return out;
    }

} // namespace sapgnn
