#pragma once

#include "sapgnn/matrix.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sapgnn
{
    using NodeId = std::uint64_t;

    inline constexpr std::int32_t kUnlabeled = -1;

    enum class Split : std::uint8_t
    {
        None,
        Train,
        Val,
        Test,
    };

    const char* to_string(Split s) noexcept;
    Split split_from_string(const std::string& s);

    struct Edge
    {
        NodeId a = 0;
        NodeId b = 0;

        friend auto operator<=>(const Edge&, const Edge&) = default;
    };

    class GraphError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Node-attributed undirected graph with a partial labelling and train/val/test masks.
    /// Row i of `features`, `labels` and `splits` belongs to `node_ids[i]`.
    struct Graph
    {
        std::vector<NodeId> node_ids;
        Matrix features;
        std::vector<Edge> edges;
        std::vector<std::int32_t> labels;
        std::vector<Split> splits;
        std::size_t num_classes = 0;

        std::size_t num_nodes() const noexcept { return node_ids.size(); }
        std::size_t feature_dim() const noexcept { return features.cols(); }

        /// Throws GraphError on any broken invariant (dangling edge, ragged rows, masked
        /// node without a label, label out of range, duplicate node id).
        void validate() const;

        std::unordered_map<NodeId, std::size_t> row_index() const;

        /// Neighbour rows per node: undirected, deduplicated, ascending.
        std::vector<std::vector<std::size_t>> adjacency() const;

        std::vector<std::size_t> rows_in(Split s) const;
        std::size_t count(Split s) const;

        friend bool operator==(const Graph&, const Graph&) = default;
    };

    /// One data holder's private view.
    struct LocalGraph
    {
        std::size_t holder_id = 0;
        Graph graph;
        /// Training labels owned by this holder; keys are a subset of graph.node_ids.
        std::map<NodeId, std::int32_t> train_labels;
        /// Val/test nodes this holder scores in joint evaluation. Disjoint across holders,
        /// so summing per-holder counts reproduces the centralized counts.
        std::set<NodeId> eval_nodes;

        void validate(std::size_t global_feature_dim) const;

        friend bool operator==(const LocalGraph&, const LocalGraph&) = default;
    };

    // ---- ingestion ------------------------------------------------------------------

    struct SyntheticSpec
    {
        std::size_t n_nodes = 20;
        std::size_t n_classes = 2;
        std::size_t feat_dim = 4;
        double intra_class_edge_prob = 0.5;
        double inter_class_edge_prob = 0.1;
        std::uint64_t seed = 0;
        /// Optional explicit class sizes (must sum to n_nodes); default is round-robin i % C.
        std::vector<std::size_t> class_sizes;
        std::size_t train_per_class = 20;
        /// Fraction of the non-train nodes placed in the validation split; the rest is test.
        double val_fraction = 0.4;
        double feature_signal = 1.0;
        double feature_noise = 1.0;
    };

    Graph generate_synthetic(const SyntheticSpec& spec);
    Graph generate_synthetic(std::size_t n_nodes, std::size_t n_classes, std::size_t feat_dim, double intra_class_edge_prob,
                             double inter_class_edge_prob, std::uint64_t seed);

    enum class DatasetFormat
    {
        EdgeListDir,
        SyntheticSpec,
    };

    DatasetFormat dataset_format_from_string(const std::string& s);

    /// edge-list-dir: nodes.tsv, features.tsv, edges.tsv, manifest.json (counts must match).
    /// synthetic-spec: a JSON file holding SyntheticSpec fields.
    Graph load_dataset(const std::filesystem::path& path, DatasetFormat format);
    void write_dataset(const std::filesystem::path& dir, const Graph& g);

    SyntheticSpec synthetic_spec_from_json_file(const std::filesystem::path& path);

    // ---- partitioning ---------------------------------------------------------------

    enum class LabelPolicy
    {
        /// Each train label goes to exactly one holder (seeded shuffle, then round-robin).
        Disjoint,
        /// Every holder owns every train label. Total loss is then P times the centralized loss.
        Replicate,
    };

    enum class NodeVisibility
    {
        FullNodeSet,
        EdgeIncident,
    };

    struct UniformSplitOptions
    {
        std::size_t holders = 1;
        LabelPolicy labels = LabelPolicy::Disjoint;
        std::uint64_t seed = 0;
        /// Fraction of edges copied to a second, distinct holder (overlapping edges).
        double duplicate_fraction = 0.0;
        NodeVisibility visibility = NodeVisibility::FullNodeSet;
    };

    std::vector<LocalGraph> split_edges_uniform(const Graph& g, const UniformSplitOptions& opts);

    /// Class-grouped partition: contiguous class blocks per holder, then q% of each holder's
    /// nodes moved round-robin to the other holders. Holders keep only internal edges.
    std::vector<LocalGraph> split_label_skew(const Graph& g, std::size_t holders, double q_percent, std::uint64_t seed);

    /// Class range [first, last) assigned to `holder` by the label-skew grouping.
    std::pair<std::size_t, std::size_t> class_block(std::size_t num_classes, std::size_t holders, std::size_t holder);

    std::size_t round_half_even(double x);

    // ---- hashed node index ----------------------------------------------------------

    using Digest = std::array<std::uint8_t, 16>;
    using Salt = std::array<std::uint8_t, 32>;

    class DigestCollision : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// truncate-128(SHA-256(salt || big-endian 8-byte node id)).
    Digest node_digest(const Salt& salt, NodeId id);

    std::string to_hex(const Digest& d);

    /// Salted node-id digests over the union of all holders' nodes. The salt stays with the
    /// holders; only digests are ever given to the server.
    class HashedIndex
    {
    public:
        using DigestFn = Digest (*)(const Salt&, NodeId);

        HashedIndex() = default;

        const Digest& digest(NodeId id) const;
        bool contains(NodeId id) const { return digests_.contains(id); }
        std::size_t size() const noexcept { return digests_.size(); }
        const std::map<NodeId, Digest>& entries() const noexcept { return digests_; }

        /// All digests in ascending order; this is the server's row order.
        std::vector<Digest> sorted_digests() const;

        friend HashedIndex build_hashed_index(const std::vector<LocalGraph>& holders, const Salt& salt, DigestFn fn);

    private:
        std::map<NodeId, Digest> digests_;
    };

    /// Throws DigestCollision if two distinct ids map to the same digest.
    HashedIndex build_hashed_index(const std::vector<LocalGraph>& holders, const Salt& salt,
                                   HashedIndex::DigestFn fn = &node_digest);

    Salt salt_from_seed(std::uint64_t seed);

    /// Row layout shared by everyone who sees the holders' digest lists: the universe is the
    /// sorted union, and row_of[p][i] is the universe row of holder p's i-th digest.
    struct UniverseLayout
    {
        std::vector<Digest> digests;
        std::vector<std::vector<std::size_t>> row_of;
    };

    UniverseLayout align_universe(const std::vector<std::vector<Digest>>& lists);

} // namespace sapgnn
