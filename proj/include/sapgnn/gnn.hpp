#pragma once

#include "sapgnn/graph.hpp"
#include "sapgnn/matrix.hpp"
#include "sapgnn/optim.hpp"
#include "sapgnn/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sapgnn
{
    /// Local vertex update combining a node's own embedding h with its aggregated message m.
    enum class UpdateKind : std::uint8_t
    {
        Sum,        ///< h + m
        Concat,     ///< h || m
        Gated,      ///< ReLU(W h + b) * m  (element-wise)
        NegatedSum, ///< h - m; not monotone in m, kept as a negative control
    };

    enum class MessageKind : std::uint8_t
    {
        Identity, ///< message = h_u
        Linear,   ///< message = W_rho h_u
    };

    const char* to_string(UpdateKind k) noexcept;
    UpdateKind update_kind_from_string(const std::string& s);
    const char* to_string(MessageKind k) noexcept;
    MessageKind message_kind_from_string(const std::string& s);

    /// True for update kinds whose output is non-decreasing in every element of m.
    bool is_monotone(UpdateKind k) noexcept;

    class PropositionViolation : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    struct ModelConfig
    {
        std::size_t input_dim = 0;
        std::size_t hidden = 16;
        std::size_t num_classes = 0;
        std::size_t layers = 2;
        UpdateKind update = UpdateKind::Sum;
        MessageKind message = MessageKind::Identity;
        /// ReLU and dropout apply to every layer except the last.
        bool relu = true;
        double dropout = 0.0;

        std::size_t layer_in(std::size_t l) const noexcept { return l == 0 ? input_dim : hidden; }
        std::size_t layer_out(std::size_t) const noexcept { return hidden; }
        /// Width of the local embedding t for layer l.
        std::size_t local_dim(std::size_t l) const noexcept
        {
            return update == UpdateKind::Concat ? 2 * layer_in(l) : layer_in(l);
        }
        bool layer_relu(std::size_t l) const noexcept { return relu && l + 1 < layers; }
        double layer_dropout(std::size_t l) const noexcept { return l + 1 < layers ? dropout : 0.0; }

        void validate() const;
    };

    /// Parameters that live at the data holders (replicated, identical everywhere).
    struct LocalLayerWeights
    {
        Matrix message;     ///< in x in, only for MessageKind::Linear
        Matrix gate_weight; ///< in x in, only for UpdateKind::Gated
        Matrix gate_bias;   ///< 1 x in, only for UpdateKind::Gated

        friend bool operator==(const LocalLayerWeights&, const LocalLayerWeights&) = default;
    };

    struct LocalWeights
    {
        std::vector<LocalLayerWeights> layers;
        Matrix psi_weight; ///< C x hidden
        Matrix psi_bias;   ///< 1 x C

        /// Every tensor, in a fixed order. Empty (unused) tensors are skipped.
        std::vector<Matrix*> tensors();
        std::vector<const Matrix*> tensors() const;
        std::vector<std::string> tensor_names() const;
        std::size_t parameter_count() const;

        LocalWeights zeros_like() const;
        std::vector<double> flatten() const;
        void unflatten(std::span<const double> flat);

        friend bool operator==(const LocalWeights&, const LocalWeights&) = default;
    };

    /// Parameters that live at the server only: the linear map of each global update.
    struct GlobalWeights
    {
        std::vector<Matrix> layers; ///< out x local_dim(l)

        std::vector<Matrix*> tensors();
        std::vector<const Matrix*> tensors() const;
        std::size_t parameter_count() const;
        GlobalWeights zeros_like() const;

        friend bool operator==(const GlobalWeights&, const GlobalWeights&) = default;
    };

    struct ModelWeights
    {
        LocalWeights local;
        GlobalWeights global;

        std::vector<double> flatten() const;
        void unflatten(std::span<const double> flat);
        std::size_t parameter_count() const { return local.parameter_count() + global.parameter_count(); }

        friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
    };

    /// Stream id from which every holder draws the shared local weights.
    inline constexpr std::uint64_t kLocalInitStream = 0x10CA'1000ULL;

    LocalWeights init_local_weights(const ModelConfig& cfg, std::uint64_t shared_seed);
    GlobalWeights init_global_weights(const ModelConfig& cfg, std::uint64_t server_seed);
    ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t shared_seed, std::uint64_t server_seed);

    // ---- layer primitives -----------------------------------------------------------

    std::vector<double> message_construct(std::span<const double> h_v, std::span<const double> h_u,
                                          std::span<const double> h_edge, MessageKind kind, const Matrix& theta_rho);

    struct MaxResult
    {
        std::vector<double> value;
        /// Per element, position of the winning message; ties go to the lowest position.
        std::vector<std::size_t> argmax;
    };

    /// Element-wise max over a non-empty message set.
    MaxResult aggregate_max(std::span<const std::vector<double>> messages);

    /// phi(h, m) for one node. `gate_weight`/`gate_bias` are only read for Gated.
    std::vector<double> local_update(UpdateKind kind, std::span<const double> h, std::span<const double> m,
                                     const Matrix& gate_weight, const Matrix& gate_bias);

    /// How a node's local embedding row was produced.
    enum class RowState : std::uint8_t
    {
        Absent = 0,      ///< node not held here; row is the kNegInf sentinel
        NoNeighbors = 1, ///< node held but has no local neighbours; row is phi(h, 0)
        Aggregated = 2,  ///< phi(h, max over local messages)
    };

    /// Everything the local layer computation needs to replay its backward pass.
    struct LocalLayerTape
    {
        Matrix input;    ///< h, rows x in
        Matrix messages; ///< rho(h_u), rows x in
        Matrix aggregated;
        std::vector<std::uint32_t> argmax_neighbor; ///< rows x in; winning neighbour row
        Matrix gate_pre;                            ///< W h + b (Gated only)
        std::vector<RowState> state;
        Matrix t;
    };

    /// Local embedding over a graph view. `adjacency[v]` lists neighbour rows; rows with
    /// held[v] == false get the sentinel.
    LocalLayerTape local_embedding(const std::vector<std::vector<std::size_t>>& adjacency, const std::vector<bool>& held,
                                   const Matrix& h, const LocalLayerWeights& w, const ModelConfig& cfg, std::size_t layer);

    struct LocalLayerGrads
    {
        Matrix input; ///< dL/dh restricted to this computation graph
        LocalLayerWeights weights;
    };

    LocalLayerGrads local_embedding_backward(const std::vector<std::vector<std::size_t>>& adjacency,
                                             const LocalLayerTape& tape, const Matrix& grad_t,
                                             const LocalLayerWeights& w, const ModelConfig& cfg);

    /// One holder's contribution to the global pooling step.
    struct LocalStack
    {
        const Matrix* t = nullptr;
        const std::vector<RowState>* state = nullptr;
    };

    struct GlobalLayerTape
    {
        Matrix pooled;                            ///< m, rows x local_dim
        std::vector<std::uint32_t> argmax_holder; ///< rows x local_dim
        Matrix pre_activation;                    ///< W m
        Matrix dropout;                           ///< empty if no dropout
        Matrix output;
    };

    class PoolingError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Cross-holder pooling: Aggregated rows beat NoNeighbors rows, which beat Absent;
    /// within a class the larger value wins, ties to the lowest holder. Throws PoolingError
    /// if some row is Absent at every holder.
    void pool_max(std::span<const LocalStack> stacks, Matrix& pooled, std::vector<std::uint32_t>& argmax_holder);

    /// phi applied to already pooled rows: W m, then optional ReLU, then optional dropout.
    GlobalLayerTape global_update(Matrix pooled, std::vector<std::uint32_t> argmax_holder, const Matrix& weight, bool relu,
                                  const Matrix* dropout_mask);

    /// pool_max followed by global_update.
    GlobalLayerTape global_embedding(std::span<const LocalStack> stacks, const Matrix& weight, bool relu,
                                     const Matrix* dropout_mask);

    struct GlobalLayerGrads
    {
        Matrix weight;
        Matrix pooled; ///< dL/dm
    };

    GlobalLayerGrads global_embedding_backward(const GlobalLayerTape& tape, const Matrix& grad_out, const Matrix& weight,
                                               bool relu);

    /// dL/dt for holder p: the pooled gradient routed to the elements p won.
    Matrix route_to_holder(const Matrix& grad_pooled, const std::vector<std::uint32_t>& argmax_holder, std::size_t holder);

    inline constexpr double kProbabilityClamp = 1e-12;

    struct LabelledRow
    {
        std::size_t row = 0;
        std::size_t label = 0;
    };

    struct PredictionResult
    {
        Matrix probabilities;
        double loss = 0.0;
        Matrix grad_logits;
    };

    Matrix predict_logits(const Matrix& h_final, const Matrix& psi_weight, const Matrix& psi_bias);

    /// Softmax cross-entropy summed (not averaged) over `labelled`, in the given order.
    PredictionResult predict_and_loss(const Matrix& h_final, std::span<const LabelledRow> labelled,
                                      const Matrix& psi_weight, const Matrix& psi_bias);

    struct PredictorGrads
    {
        Matrix psi_weight;
        Matrix psi_bias;
        Matrix h_final;
    };

    PredictorGrads predictor_backward(const Matrix& h_final, const Matrix& grad_logits, const Matrix& psi_weight);

    // ---- centralized reference model ------------------------------------------------

    /// Dropout masks per (layer), rows in graph order. Empty entries mean no dropout.
    using DropoutMasks = std::vector<Matrix>;

    struct CentralizedResult
    {
        /// embeddings[0] = input features, embeddings[l+1] = output of layer l.
        std::vector<Matrix> embeddings;
        Matrix probabilities;
        double loss = 0.0;
        ModelWeights grads;
    };

    /// Full forward and reverse pass of the model on the combined graph. The loss sums over
    /// `labelled` (defaults to every train-masked row when empty and `use_train_mask`).
    CentralizedResult centralized_forward_backward(const Graph& g, const ModelWeights& w, const ModelConfig& cfg,
                                                   std::span<const LabelledRow> labelled,
                                                   const DropoutMasks* masks = nullptr);

    std::vector<LabelledRow> train_rows(const Graph& g);

    /// Draw one dropout mask per layer for an epoch (rows in the caller's row order).
    DropoutMasks draw_dropout_masks(Rng& rng, const ModelConfig& cfg, std::size_t rows);

    // ---- monotonicity check ---------------------------------------------------------

    struct MonotoneReport
    {
        std::size_t trials = 0;
        std::size_t holds = 0;
        /// Trials redrawn because every holder saw the same local maximum.
        std::size_t redrawn_degenerate = 0;
        double fraction() const { return trials == 0 ? 0.0 : static_cast<double>(holds) / static_cast<double>(trials); }
    };

    /// Samples h, a neighbour message set and a split of it over 2..4 holders (with overlap),
    /// then compares max_p phi(h, max S_p) against phi(h, max union S_p) at tolerance 1e-12.
    MonotoneReport check_monotone_update(UpdateKind kind, std::size_t trials, Rng& rng);

} // namespace sapgnn
