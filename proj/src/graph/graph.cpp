#include "sapgnn/graph.hpp"

#include <algorithm>

namespace sapgnn
{
    const char* to_string(Split s) noexcept
    {
        switch (s)
        {
        case Split::Train:
            return "train";
        case Split::Val:
            return "val";
        case Split::Test:
            return "test";
        case Split::None:
            break;
        }
        return "none";
    }

    Split split_from_string(const std::string& s)
    {
        if (s == "train")
            return Split::Train;
        if (s == "val")
            return Split::Val;
        if (s == "test")
            return Split::Test;
        if (s == "none")
            return Split::None;
        throw GraphError("unknown mask value '" + s + "'");
    }

    void Graph::validate() const
    {
        const std::size_t n = node_ids.size();
        if (features.rows() != n)
        {
            throw GraphError("feature rows (" + std::to_string(features.rows()) + ") do not match node count (" +
                             std::to_string(n) + ")");
        }
        if (labels.size() != n || splits.size() != n)
        {
            throw GraphError("label/mask arrays do not match node count");
        }
        const auto index = row_index();
        if (index.size() != n)
        {
            throw GraphError("duplicate node id");
        }
        for (const auto& e : edges)
        {
            if (!index.contains(e.a) || !index.contains(e.b))
            {
                throw GraphError("dangling edge endpoint (" + std::to_string(e.a) + ", " + std::to_string(e.b) + ")");
            }
        }
        for (std::size_t i = 0; i < n; ++i)
        {
            if (labels[i] != kUnlabeled && (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes))
            {
                throw GraphError("label out of range at node " + std::to_string(node_ids[i]));
            }
            if (splits[i] != Split::None && labels[i] == kUnlabeled)
            {
                throw GraphError("masked node " + std::to_string(node_ids[i]) + " has no label");
            }
        }
    }

    std::unordered_map<NodeId, std::size_t> Graph::row_index() const
    {
        std::unordered_map<NodeId, std::size_t> index;
        index.reserve(node_ids.size());
        for (std::size_t i = 0; i < node_ids.size(); ++i)
        {
            index.emplace(node_ids[i], i);
        }
        return index;
    }

    std::vector<std::vector<std::size_t>> Graph::adjacency() const
    {
        const auto index = row_index();
        std::vector<std::vector<std::size_t>> adj(node_ids.size());
        for (const auto& e : edges)
        {
            const std::size_t a = index.at(e.a);
            const std::size_t b = index.at(e.b);
            adj[a].push_back(b);
            if (a != b)
            {
                adj[b].push_back(a);
            }
        }
        for (auto& nbrs : adj)
        {
            std::sort(nbrs.begin(), nbrs.end());
            nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        }
        return adj;
    }

    std::vector<std::size_t> Graph::rows_in(Split s) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < splits.size(); ++i)
        {
            if (splits[i] == s)
            {
                out.push_back(i);
            }
        }
        return out;
    }

    std::size_t Graph::count(Split s) const
    {
        return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), s));
    }

    void LocalGraph::validate(std::size_t global_feature_dim) const
    {
        graph.validate();
        if (graph.feature_dim() != global_feature_dim)
        {
            throw GraphError("holder " + std::to_string(holder_id) + " feature dimension " +
                             std::to_string(graph.feature_dim()) + " differs from global " +
                             std::to_string(global_feature_dim));
        }
        const auto index = graph.row_index();
        for (const auto& [id, label] : train_labels)
        {
            const auto it = index.find(id);
            if (it == index.end())
            {
                throw GraphError("holder " + std::to_string(holder_id) + " owns a label for unknown node " +
                                 std::to_string(id));
            }
            if (graph.labels[it->second] != label)
            {
                throw GraphError("train label disagrees with graph label at node " + std::to_string(id));
            }
        }
        for (const NodeId id : eval_nodes)
        {
            if (!index.contains(id))
            {
                throw GraphError("holder " + std::to_string(holder_id) + " evaluates unknown node " + std::to_string(id));
            }
        }
    }

} // namespace sapgnn
