#pragma once

#include "sapgnn/protocol.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace sapgnn
{
    // ---- centralized trainer --------------------------------------------------------

    struct CentralizedRun
    {
        TrainingOutcome outcome;
        ModelWeights weights;
        ModelWeights best_weights; // snapshot at the best validation epoch
    };

    /// Full-batch Adam on one graph. Initial weights and the dropout stream come from the same
    /// seeds the protocol uses. `mask_order`, if given, lists the graph row for each mask row
    /// so the masks are drawn in the protocol's universe order.
    CentralizedRun train_centralized(const Graph& g, const ModelConfig& model, const TrainConfig& train,
                                     std::uint64_t shared_seed, std::uint64_t server_seed,
                                     const std::vector<std::size_t>* mask_order = nullptr);

    /// Convenience: seeds as protocol_config() derives them.
    CentralizedRun train_centralized(const RunConfig& cfg, const Graph& g);

    /// Universe row -> graph row for a salted digest layout.
    std::vector<std::size_t> universe_rows(const Graph& g, const Salt& salt);

    // ---- separate training baseline -------------------------------------------------

    struct HolderRun
    {
        std::size_t holder = 0;
        bool skipped = false;
        std::string reason;
        TrainingOutcome outcome;
    };

    struct SpResult
    {
        std::vector<HolderRun> holders;
        /// Mean over trained holders of test metrics at each holder's best epoch.
        ClassificationMetrics mean_test;
        std::size_t mean_epochs = 0;
    };

    /// Each holder trains alone on its own edges and train labels, early-stopping on its own
    /// validation nodes. With `shared`, the best-epoch model is scored on the test split of that
    /// graph; otherwise on the test nodes the holder can see. Holders without train labels are skipped.
    SpResult train_sp(const std::vector<LocalGraph>& holders, const ModelConfig& model, const TrainConfig& train,
                      const Graph* shared = nullptr);

    /// Test-split metrics of `w` applied to `g` without dropout.
    ClassificationMetrics evaluate_test(const Graph& g, const ModelWeights& w, const ModelConfig& model);

    // ---- equivalence report ---------------------------------------------------------

    struct Deviation
    {
        std::string name;
        double max_abs = 0.0;
    };

    struct EquivalenceReport
    {
        std::vector<Deviation> embeddings; ///< per layer
        std::vector<Deviation> gradients;  ///< per weight tensor
        double loss_deviation = 0.0;
        double embedding_tolerance = 1e-9;
        double gradient_tolerance = 1e-9;
        std::size_t steps = 0;
        bool pass = false;

        void print(std::ostream& out) const;
    };

    /// Runs the centralized oracle and the protocol side by side for `steps` training steps
    /// from the same weights and compares embeddings, loss and gradients at every step.
    /// Throws PropositionViolation for update kinds that are not monotone.
    EquivalenceReport compare_equivalence(const Graph& g, std::vector<LocalGraph> holders, const ProtocolConfig& cfg,
                                          std::size_t steps = 1);
    EquivalenceReport compare_equivalence(const RunConfig& cfg, std::size_t steps = 1);

    // ---- sweeps ---------------------------------------------------------------------

    enum class Method
    {
        Centralized,
        Sp,
        Sapgnn,
    };

    const char* to_string(Method m) noexcept;
    Method method_from_string(const std::string& s);

    struct ExperimentSpec
    {
        RunConfig base;
        std::string dataset_name;
        std::vector<std::size_t> holders{2};
        std::vector<double> q{0.0};
        std::size_t repeats = 1;
        std::uint64_t seed_base = 0;
        std::vector<Method> methods{Method::Centralized, Method::Sp, Method::Sapgnn};

        void validate() const;
    };

    /// JSON: the run config fields plus "sweep": {P, q, repeats, seed_base, methods, name}.
    ExperimentSpec parse_experiment_spec(const std::string& json_text, const std::vector<std::string>& overrides = {});
    ExperimentSpec load_experiment_spec(const std::filesystem::path& file,
                                        const std::vector<std::string>& overrides = {});

    struct SweepRow
    {
        std::string method;
        std::string dataset;
        std::size_t holders = 0;
        double q = 0.0;
        std::size_t repeat = 0;
        std::uint64_t seed = 0;
        double accuracy = 0.0;
        double macro_f1 = 0.0;
        std::size_t epochs = 0;
        std::int64_t wall_ms = 0;

        std::string key() const;
    };

    inline constexpr const char* kSweepHeader = "method,dataset,P,q,repeat,seed,accuracy,macro_f1,epochs,wall_ms";

    /// Seed of a cell. Depends on the dataset and repeat only, so every method, holder
    /// count and skew level of one repeat starts from the same weights.
    std::uint64_t cell_seed(std::uint64_t seed_base, const std::string& dataset, std::size_t repeat);

    struct SweepFailure
    {
        std::string key;
        std::string error;
    };

    struct SweepResult
    {
        std::vector<SweepRow> rows; ///< every row in the CSV after the run, file order
        std::size_t computed = 0;
        std::size_t resumed = 0;
        std::vector<SweepFailure> failures;
    };

    /// Appends one row per (method, P, q, repeat) cell to `csv`, skipping cells already in the
    /// file. Failed cells are reported and left out so a rerun retries them.
    SweepResult run_sweep(const ExperimentSpec& spec, const std::filesystem::path& csv,
                          const std::function<void(const SweepRow&)>& on_row = {});

    std::string format_sweep_row(const SweepRow& r);
    std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& csv);

    struct SummaryRow
    {
        std::string method;
        std::string dataset;
        std::size_t holders = 0;
        double q = 0.0;
        std::size_t n = 0;
        double accuracy_mean = 0.0;
        double accuracy_std = 0.0;
        double macro_f1_mean = 0.0;
        double macro_f1_std = 0.0;
    };

    /// Mean and sample standard deviation over repeats (std 0 for a single repeat).
    std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows);
    void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

    // ---- misc -----------------------------------------------------------------------

    std::vector<AuditRecord> read_audit_jsonl(std::istream& in);

    /// Ordinary least squares y = a x + b; returns the coefficient of determination.
    struct LinearFit
    {
        double slope = 0.0;
        double intercept = 0.0;
        double r2 = 0.0;
    };
    LinearFit fit_line(std::span<const double> x, std::span<const double> y);

} // namespace sapgnn
