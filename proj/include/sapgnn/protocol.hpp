#pragma once

#include "sapgnn/gnn.hpp"
#include "sapgnn/graph.hpp"
#include "sapgnn/metrics.hpp"
#include "sapgnn/mpc.hpp"
#include "sapgnn/optim.hpp"

#include <compare>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace sapgnn
{
    class ProtocolError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class ReplicationError : public ProtocolError
    {
    public:
        using ProtocolError::ProtocolError;
    };

    // ---- wire schema ----------------------------------------------------------------
    // Row order is implicit everywhere: a holder's rows follow the HashedNodeList it
    // registered, the server's rows follow the sorted digest universe.

    struct HashedNodeList
    {
        std::uint32_t holder = 0;
        std::vector<Digest> digests;
    };

    struct LocalEmbedding
    {
        std::uint32_t layer = 0;
        std::uint32_t holder = 0;
        std::vector<RowState> state;
        Matrix t;
    };

    struct GlobalEmbedding
    {
        std::uint32_t layer = 0;
        std::uint32_t holder = 0;
        Matrix h;
    };

    struct PredGrad
    {
        std::uint32_t holder = 0;
        Matrix grad;
    };

    struct LocalEmbGrad
    {
        std::uint32_t layer = 0;
        std::uint32_t holder = 0;
        Matrix grad;
    };

    struct InputGrad
    {
        std::uint32_t layer = 0;
        std::uint32_t holder = 0;
        Matrix grad;
    };

    struct GradShare
    {
        std::uint32_t from = 0;
        std::uint32_t to = 0;
        std::vector<std::uint64_t> words;
    };

    struct PartialSum
    {
        std::uint32_t from = 0;
        std::uint32_t to = 0;
        std::vector<std::uint64_t> words;
    };

    /// Secure pooling input: additive shares of the order keys of t, one vector per share.
    struct EmbeddingShares
    {
        std::uint32_t layer = 0;
        std::uint32_t holder = 0;
        std::uint64_t cols = 0;
        std::vector<RowState> state;
        std::vector<std::vector<std::uint64_t>> shares;
    };

    struct PooledEmbedding
    {
        std::uint32_t layer = 0;
        Matrix m;
    };

    struct IndexShares
    {
        std::uint32_t layer = 0;
        std::uint32_t share = 0;
        std::vector<std::uint8_t> bits;
    };

    using ProtocolMessage = std::variant<HashedNodeList, LocalEmbedding, GlobalEmbedding, PredGrad, LocalEmbGrad, InputGrad,
                                         GradShare, PartialSum, EmbeddingShares, PooledEmbedding, IndexShares>;

    const char* kind_name(const ProtocolMessage& m) noexcept;
    /// Every kind the schema allows, in variant order.
    const std::vector<std::string>& schema_kinds();
    /// Short description of the field layout, recorded in the audit log.
    std::string schema_id(const ProtocolMessage& m);
    /// Whether the receiver sees embedding or gradient values in the clear.
    bool carries_plaintext(const ProtocolMessage& m) noexcept;
    /// Layer tag of the message, or -1.
    std::int64_t message_layer(const ProtocolMessage& m) noexcept;

    /// Length-prefixed, tagged, little-endian binary form. decode() throws ProtocolError
    /// on any malformed input.
    std::vector<std::uint8_t> encode(const ProtocolMessage& m);
    ProtocolMessage decode(std::span<const std::uint8_t> bytes);

    // ---- parties and transport ------------------------------------------------------

    struct PartyId
    {
        enum class Role : std::uint8_t
        {
            Server,
            Holder,
            SecureMax,
        };
        Role role = Role::Server;
        std::uint32_t index = 0;

        static PartyId server() { return {Role::Server, 0}; }
        static PartyId holder(std::size_t p) { return {Role::Holder, static_cast<std::uint32_t>(p)}; }
        static PartyId secure_max() { return {Role::SecureMax, 0}; }
        std::string name() const;

        friend auto operator<=>(const PartyId&, const PartyId&) = default;
    };

    struct CommKey
    {
        std::uint64_t epoch = 0;
        std::string kind;
        std::string direction; ///< up (holder to server side), down, peer (holder to holder), internal
        std::int64_t layer = -1;

        friend auto operator<=>(const CommKey&, const CommKey&) = default;
    };

    class CommStats
    {
    public:
        void add(const CommKey& key, std::size_t bytes);
        std::size_t total() const;
        std::size_t total_kind(const std::string& kind) const;
        std::size_t total_for_epoch(std::uint64_t epoch) const;
        std::size_t bytes(const CommKey& key) const;
        std::size_t messages() const noexcept { return messages_; }
        const std::map<CommKey, std::size_t>& entries() const noexcept { return bytes_; }

        /// Header `epoch,kind,direction,bytes`; layers are summed.
        void write_csv(std::ostream& out) const;

    private:
        std::map<CommKey, std::size_t> bytes_;
        std::size_t messages_ = 0;
    };

    /// In-process channel boundary. Every send is encoded to bytes, metered and audited,
    /// then queued FIFO per (from, to) pair.
    class Transport
    {
    public:
        Transport(AuditLog& audit, CommStats& comm) : audit_(audit), comm_(comm) {}

        void set_epoch(std::uint64_t e) noexcept { epoch_ = e; }
        std::uint64_t epoch() const noexcept { return epoch_; }

        void send(PartyId from, PartyId to, const ProtocolMessage& m);
        ProtocolMessage receive(PartyId to, PartyId from);

        template <class T>
        T receive_as(PartyId to, PartyId from)
        {
            ProtocolMessage m = receive(to, from);
            if (!std::holds_alternative<T>(m))
            {
                throw ProtocolError("protocol desync: " + to.name() + " expected " +
                                    kind_name(ProtocolMessage{T{}}) + " from " + from.name() + ", got " +
                                    kind_name(m));
            }
            return std::get<T>(std::move(m));
        }

        std::size_t pending() const;

        /// Test hook: record a transmission that bypassed the schema (fault injection).
        void inject(AuditRecord r);

    private:
        AuditLog& audit_;
        CommStats& comm_;
        std::uint64_t epoch_ = 0;
        mutable std::mutex mu_;
        std::map<std::pair<PartyId, PartyId>, std::deque<std::vector<std::uint8_t>>> queues_;
    };

    /// Routes secure_aggregate traffic between holders as GradShare / PartialSum messages.
    class TransportShareChannel : public ShareChannel
    {
    public:
        explicit TransportShareChannel(Transport& t) : transport_(t) {}
        void send(std::size_t from, std::size_t to, ShareStage stage, std::vector<std::uint64_t> words) override;
        std::vector<std::uint64_t> receive(std::size_t to, std::size_t from, ShareStage stage) override;

    private:
        Transport& transport_;
    };

    // ---- party state ----------------------------------------------------------------

    enum class PoolingMode
    {
        Naive,
        SecurePooling,
    };

    const char* to_string(PoolingMode m) noexcept;
    PoolingMode pooling_mode_from_string(const std::string& s);

    struct ProtocolConfig
    {
        ModelConfig model;
        PoolingMode mode = PoolingMode::Naive;
        ShareMode share_mode = ShareMode::Real;
        AdamHyper adam;
        std::uint64_t shared_seed = 0;
        std::uint64_t server_seed = 1;
        Salt salt{};
    };

    /// Per-holder evaluation counts for one split.
    struct SplitCounts
    {
        Confusion confusion;
        double loss = 0.0;
    };

    class DataHolder
    {
    public:
        DataHolder(LocalGraph g, const ProtocolConfig& cfg, std::size_t holders);

        std::size_t id() const noexcept { return graph_.holder_id; }
        const LocalGraph& local_graph() const noexcept { return graph_; }
        const LocalWeights& weights() const noexcept { return weights_; }
        /// Replace the weights (checkpoint restore); optimizer state is kept.
        void set_weights(const LocalWeights& w);
        HashedNodeList node_list() const;

        void begin_forward();
        LocalEmbedding compute_local(std::size_t layer);
        EmbeddingShares share_local(const LocalEmbedding& t);
        void accept_global(const GlobalEmbedding& g);
        /// Loss over owned train labels at the current final embedding.
        double compute_loss();

        PredGrad pred_grad();
        /// Consumes dL/dt for `layer`; returns dL/dh contribution for layer > 0.
        std::optional<InputGrad> accept_local_grad(const LocalEmbGrad& g);
        const LocalWeights& gradients() const noexcept { return grads_; }

        void apply_update(const std::vector<double>& aggregated);

        /// Embeddings after each layer in local row order (index 0 = features).
        const std::vector<Matrix>& embeddings() const noexcept { return h_; }
        Matrix probabilities() const;
        /// Counts on owned train labels and on the val/test nodes this holder scores.
        SplitCounts evaluate(Split s) const;

        Rng& share_rng() noexcept { return share_rng_; }

    private:
        LocalGraph graph_;
        ModelConfig cfg_;
        Salt salt_;
        std::size_t holders_;
        std::vector<std::vector<std::size_t>> adjacency_;
        LocalWeights weights_;
        LocalWeights grads_;
        std::vector<AdamState> adam_;
        std::vector<Matrix> h_;
        std::vector<LocalLayerTape> tapes_;
        std::vector<LabelledRow> train_rows_;
        PredictionResult prediction_;
        Rng share_rng_;
        Rng pooling_rng_;
    };

    class Server
    {
    public:
        Server(const ProtocolConfig& cfg, std::size_t holders);

        void register_holder(const HashedNodeList& list);
        std::size_t universe_size() const noexcept { return layout_.digests.size(); }
        const UniverseLayout& layout() const noexcept { return layout_; }
        const GlobalWeights& weights() const noexcept { return weights_; }
        void set_weights(const GlobalWeights& w);

        void begin_forward(bool train);
        /// Naive pooling over plaintext local embeddings (holder order).
        void pool_plain(std::size_t layer, const std::vector<LocalEmbedding>& locals);
        /// Secure pooling: pooled values plus reconstructed winner index.
        void pool_secure(std::size_t layer, const PooledEmbedding& pooled, const std::vector<IndexShares>& shares);
        GlobalEmbedding global_for(std::size_t layer, std::size_t holder) const;

        void begin_backward();
        void accept_pred_grads(const std::vector<PredGrad>& grads);
        /// Runs the global backward step for `layer` and returns per-holder dL/dt.
        std::vector<LocalEmbGrad> backward_layer(std::size_t layer);
        void accept_input_grads(std::size_t layer, const std::vector<InputGrad>& grads);
        const GlobalWeights& gradients() const noexcept { return grads_; }

        void apply_update();

        /// Output of each layer in universe order.
        std::vector<Matrix> embeddings() const;
        const DropoutMasks& dropout_masks() const noexcept { return masks_; }

    private:
        ModelConfig cfg_;
        std::size_t holders_;
        std::vector<std::vector<Digest>> lists_;
        UniverseLayout layout_;
        GlobalWeights weights_;
        GlobalWeights grads_;
        std::vector<AdamState> adam_;
        Rng dropout_rng_;
        DropoutMasks masks_;
        std::vector<GlobalLayerTape> tapes_;
        Matrix grad_h_;
    };

    /// Everything in one simulated deployment. Not movable: the transport refers to the
    /// audit log and counters it owns.
    struct Parties
    {
        explicit Parties(const ProtocolConfig& c);
        Parties(const Parties&) = delete;
        Parties& operator=(const Parties&) = delete;

        ProtocolConfig cfg;
        AuditLog audit;
        CommStats comm;
        Transport transport;
        std::vector<DataHolder> holders;
        std::unique_ptr<Server> server;
        std::unique_ptr<SecureMaxEvaluator> evaluator;
    };

    /// Holders draw identical local weights from the shared seed; the server draws global
    /// weights from its own seed. Holders register hashed node lists.
    std::unique_ptr<Parties> init_parties(const ProtocolConfig& cfg, std::vector<LocalGraph> holders);

    struct ForwardResult
    {
        std::vector<double> losses; ///< per holder, owned train labels (0 when !train)
        double total_loss() const;
    };

    ForwardResult forward_pass(Parties& parties, bool train);

    struct BackwardResult
    {
        std::vector<LocalWeights> local_grads; ///< per holder, before aggregation
        GlobalWeights global_grads;
    };

    BackwardResult backward_pass(Parties& parties);

    /// Server applies Adam to its weights; holders securely aggregate their gradients and
    /// apply the same Adam step. Returns the aggregated local gradient (flattened).
    /// Throws ReplicationError if holder weights diverge.
    std::vector<double> weight_update(Parties& parties);

    // ---- privacy audit --------------------------------------------------------------

    struct AuditFinding
    {
        std::string rule;
        std::string party;
        std::string kind;
        std::uint64_t seq = 0;

        std::string describe() const;
    };

    struct AuditReport
    {
        std::vector<AuditFinding> findings;
        std::size_t records = 0;
        std::size_t server_plaintext_embeddings = 0;
        bool clean() const noexcept { return findings.empty(); }
    };

    AuditReport verify_privacy_audit(const std::vector<AuditRecord>& log, PoolingMode mode);

    // ---- run configuration and training ---------------------------------------------

    enum class PartitionKind
    {
        Uniform,
        LabelSkew,
    };

    struct DatasetRef
    {
        /// Either a path (edge-list directory or synthetic-spec JSON) or an inline spec.
        std::filesystem::path path;
        std::optional<DatasetFormat> format;
        std::optional<SyntheticSpec> inline_spec;
    };

    struct PartitionConfig
    {
        PartitionKind kind = PartitionKind::Uniform;
        std::size_t holders = 2;
        double q = 0.0;
        double duplicate_fraction = 0.0;
        std::uint64_t seed = 0;
        LabelPolicy labels = LabelPolicy::Disjoint;
        NodeVisibility visibility = NodeVisibility::FullNodeSet;
    };

    struct TrainConfig
    {
        double lr = 0.01;
        std::size_t max_epochs = 300;
        std::size_t patience = 30;
        std::uint64_t seed = 0;
    };

    struct RunConfig
    {
        DatasetRef dataset;
        PartitionConfig partition;
        std::size_t layers = 2;
        std::size_t hidden = 16;
        UpdateKind update = UpdateKind::Sum;
        MessageKind message = MessageKind::Identity;
        bool relu = true;
        double dropout = 0.5;
        TrainConfig train;
        PoolingMode mode = PoolingMode::Naive;
        ShareMode share_mode = ShareMode::Real;
    };

    /// JSON document -> RunConfig. Unknown keys are rejected. `overrides` are dotted
    /// `key=value` assignments applied before parsing (value parsed as JSON, else string).
    RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
    RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});
    std::string run_config_to_json(const RunConfig& c);

    Graph load_run_dataset(const DatasetRef& d);
    std::vector<LocalGraph> partition_graph(const Graph& g, const PartitionConfig& p);
    ModelConfig model_config(const RunConfig& c, const Graph& g);
    ProtocolConfig protocol_config(const RunConfig& c, const Graph& g);

    struct EpochMetrics
    {
        std::size_t epoch = 0;
        Split split = Split::Train;
        ClassificationMetrics metrics;
        double loss = 0.0;
    };

    struct TrainingOutcome
    {
        std::vector<EpochMetrics> history;
        std::size_t epochs_run = 0;
        std::size_t best_epoch = 0;
        ClassificationMetrics best_val;
        ClassificationMetrics test_at_best;
    };

    /// Early stopping on validation accuracy; test metrics reported at the best epoch.
    class EarlyStopper
    {
    public:
        explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
        /// Returns true when training should stop.
        bool observe(std::size_t epoch, const ClassificationMetrics& val, const ClassificationMetrics& test);
        std::size_t best_epoch() const noexcept { return best_epoch_; }
        const ClassificationMetrics& best_val() const noexcept { return best_val_; }
        const ClassificationMetrics& test_at_best() const noexcept { return test_at_best_; }

    private:
        std::size_t patience_;
        std::size_t best_epoch_ = 0;
        std::size_t since_best_ = 0;
        bool seen_ = false;
        ClassificationMetrics best_val_;
        ClassificationMetrics test_at_best_;
    };

    struct TrainingResult
    {
        TrainingOutcome outcome;
        ModelWeights weights;
        CommStats comm;
        AuditLog audit;
        AuditReport audit_report;
    };

    /// Forward, backward and secure update per epoch over already partitioned holders.
    TrainingResult train_protocol(const ProtocolConfig& cfg, std::vector<LocalGraph> holders, const TrainConfig& train);

    /// Load, partition and train per the config.
    TrainingResult run_training(const RunConfig& cfg);

    void write_metrics_csv(std::ostream& out, const std::vector<EpochMetrics>& history);
    /// metrics.csv, comm.csv, audit.jsonl
    void write_run_outputs(const std::filesystem::path& dir, const TrainingResult& r);

} // namespace sapgnn
