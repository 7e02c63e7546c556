#include "sapgnn/graph.hpp"
#include "sapgnn/rng.hpp"

#include <algorithm>
#include <numeric>

namespace sapgnn
{
    Graph generate_synthetic(const SyntheticSpec& spec)
    {
        if (spec.n_nodes < 2)
        {
            throw std::invalid_argument("generate_synthetic: n_nodes must be >= 2");
        }
        if (spec.n_classes == 0 || spec.n_classes > spec.n_nodes)
        {
            throw std::invalid_argument("generate_synthetic: n_classes must be in [1, n_nodes]");
        }
        if (spec.feat_dim == 0)
        {
            throw std::invalid_argument("generate_synthetic: feat_dim must be >= 1");
        }
        for (const double p : {spec.intra_class_edge_prob, spec.inter_class_edge_prob})
        {
            if (!(p >= 0.0 && p <= 1.0))
            {
                throw std::invalid_argument("generate_synthetic: probabilities must lie in [0, 1]");
            }
        }

        const std::size_t n = spec.n_nodes;
        const std::size_t classes = spec.n_classes;
        Graph g;
        g.num_classes = classes;
        g.node_ids.resize(n);
        std::iota(g.node_ids.begin(), g.node_ids.end(), NodeId{0});
        g.labels.resize(n);
        if (spec.class_sizes.empty())
        {
            for (std::size_t i = 0; i < n; ++i)
            {
                g.labels[i] = static_cast<std::int32_t>(i % classes);
            }
        }
        else
        {
            if (spec.class_sizes.size() != classes ||
                std::accumulate(spec.class_sizes.begin(), spec.class_sizes.end(), std::size_t{0}) != n)
            {
                throw std::invalid_argument("generate_synthetic: class_sizes must have C entries summing to n_nodes");
            }
            std::size_t i = 0;
            for (std::size_t c = 0; c < classes; ++c)
            {
                for (std::size_t k = 0; k < spec.class_sizes[c]; ++k)
                {
                    g.labels[i++] = static_cast<std::int32_t>(c);
                }
            }
        }

        // Independent streams so that changing one knob does not reshuffle everything else.
        Rng feat_rng(spec.seed, 1);
        Rng edge_rng(spec.seed, 2);
        Rng mask_rng(spec.seed, 3);

        Matrix centroids(classes, spec.feat_dim);
        for (double& v : centroids.data())
        {
            v = spec.feature_signal * feat_rng.normal();
        }
        g.features = Matrix(n, spec.feat_dim);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto c = static_cast<std::size_t>(g.labels[i]);
            for (std::size_t k = 0; k < spec.feat_dim; ++k)
            {
                g.features(i, k) = centroids(c, k) + spec.feature_noise * feat_rng.normal();
            }
        }

        for (std::size_t i = 0; i < n; ++i)
        {
            for (std::size_t j = i + 1; j < n; ++j)
            {
                const double p = g.labels[i] == g.labels[j] ? spec.intra_class_edge_prob : spec.inter_class_edge_prob;
                // Always draw so the stream position does not depend on p.
                const double u = edge_rng.uniform();
                if (u < p)
                {
                    g.edges.push_back({g.node_ids[i], g.node_ids[j]});
                }
            }
        }

        g.splits.assign(n, Split::None);
        std::vector<std::size_t> rest;
        for (std::size_t c = 0; c < classes; ++c)
        {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
            {
                if (static_cast<std::size_t>(g.labels[i]) == c)
                {
                    members.push_back(i);
                }
            }
            std::shuffle(members.begin(), members.end(), mask_rng.engine());
            const std::size_t take = std::min(spec.train_per_class, std::max<std::size_t>(1, members.size() / 3));
            for (std::size_t k = 0; k < members.size(); ++k)
            {
                if (k < take)
                {
                    g.splits[members[k]] = Split::Train;
                }
                else
                {
                    rest.push_back(members[k]);
                }
            }
        }
        std::sort(rest.begin(), rest.end());
        std::shuffle(rest.begin(), rest.end(), mask_rng.engine());
        const auto n_val = static_cast<std::size_t>(spec.val_fraction * static_cast<double>(rest.size()));
        for (std::size_t k = 0; k < rest.size(); ++k)
        {
            g.splits[rest[k]] = k < n_val ? Split::Val : Split::Test;
        }

        g.validate();
        return g;
    }

    Graph generate_synthetic(std::size_t n_nodes, std::size_t n_classes, std::size_t feat_dim, double intra_class_edge_prob,
                             double inter_class_edge_prob, std::uint64_t seed)
    {
        SyntheticSpec spec;
        spec.n_nodes = n_nodes;
        spec.n_classes = n_classes;
        spec.feat_dim = feat_dim;
        spec.intra_class_edge_prob = intra_class_edge_prob;
        spec.inter_class_edge_prob = inter_class_edge_prob;
        spec.seed = seed;
        return generate_synthetic(spec);
    }

} // namespace sapgnn
