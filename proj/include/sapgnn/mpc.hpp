#pragma once

#include "sapgnn/gnn.hpp"
#include "sapgnn/graph.hpp"
#include "sapgnn/rng.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace sapgnn
{
    // ---- ring and fixed point -------------------------------------------------------

    /// Z_{2^bits}; bits = 64 is the production ring, bits = 8 the exhaustive toy ring.
    struct Ring
    {
        unsigned bits = 64;

        std::uint64_t mask() const noexcept { return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1; }
        std::uint64_t reduce(std::uint64_t x) const noexcept { return x & mask(); }
    };

    inline constexpr unsigned kDefaultFracBits = 20;

    /// Two's-complement fixed point in Z_{2^64}.
    struct FixedPoint
    {
        std::uint64_t raw = 0;
        unsigned frac_bits = kDefaultFracBits;

        /// Round to nearest. Throws std::out_of_range unless |x| < 2^(63 - frac_bits).
        static FixedPoint encode(double x, unsigned frac_bits = kDefaultFracBits);
        double decode() const noexcept;
        std::int64_t signed_raw() const noexcept { return static_cast<std::int64_t>(raw); }

        friend bool operator==(const FixedPoint&, const FixedPoint&) = default;
    };

    // ---- shares ---------------------------------------------------------------------

    struct AdditiveShare
    {
        std::size_t party = 0;
        std::uint64_t value = 0;
    };

    struct RealShare
    {
        std::size_t party = 0;
        double value = 0.0;
    };

    struct BooleanShare
    {
        std::size_t party = 0;
        std::vector<std::uint8_t> bits; ///< one 0/1 entry per secret bit
    };

    class ShareError : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// First P-1 shares uniform in the ring, last = secret - sum(others). P >= 2.
    std::vector<AdditiveShare> share_additive(std::uint64_t secret, std::size_t parties, Rng& rng, Ring ring = {});
    std::vector<AdditiveShare> share_additive(const FixedPoint& x, std::size_t parties, Rng& rng);

    /// Modular sum. Throws ShareError on a missing, duplicate or out-of-range party id.
    std::uint64_t reconstruct_additive(std::span<const AdditiveShare> shares, std::size_t parties, Ring ring = {});
    FixedPoint reconstruct_fixed(std::span<const AdditiveShare> shares, std::size_t parties,
                                 unsigned frac_bits = kDefaultFracBits);

    /// Real-number test mode: shares are real offsets drawn from U(-1, 1).
    std::vector<RealShare> share_real(double x, std::size_t parties, Rng& rng);
    double reconstruct_real(std::span<const RealShare> shares, std::size_t parties);

    std::vector<BooleanShare> share_boolean(std::span<const std::uint8_t> bits, std::size_t parties, Rng& rng);
    std::vector<std::uint8_t> reconstruct_boolean(std::span<const BooleanShare> shares, std::size_t parties);

    /// Bijection double -> uint64 that preserves order (including kNegInf and signed zero).
    std::uint64_t order_key(double x) noexcept;
    double from_order_key(std::uint64_t k) noexcept;

    struct ChiSquare
    {
        double statistic = 0.0;
        double critical = 0.0; ///< upper alpha quantile for buckets - 1 degrees of freedom
        bool uniform = false;  ///< statistic <= critical
    };

    /// Pearson chi-square of bucket counts against the uniform distribution.
    ChiSquare chi_square_uniform(std::span<const std::size_t> counts, double alpha);

    // ---- audit ----------------------------------------------------------------------

    struct AuditRecord
    {
        std::uint64_t seq = 0; ///< logical timestamp, assigned by the log
        std::uint64_t epoch = 0;
        std::int64_t layer = -1;
        std::string from;
        std::string to;
        std::string kind;
        std::string schema;
        std::size_t bytes = 0;
        /// The receiver learns plaintext embedding or gradient values from this message.
        bool plaintext = false;

        friend bool operator==(const AuditRecord&, const AuditRecord&) = default;
    };

    /// Append-only, linearizable. Stores message metadata only, never payload values.
    class AuditLog
    {
    public:
        AuditLog() = default;
        AuditLog(const AuditLog& other);
        AuditLog& operator=(const AuditLog& other);

        void append(AuditRecord r);
        std::vector<AuditRecord> records() const;
        std::size_t size() const;

        /// One JSON object per line: timestamp, party, to, kind, schema_id, epoch, layer, bytes, plaintext.
        void write_jsonl(std::ostream& out) const;

    private:
        mutable std::mutex mu_;
        std::vector<AuditRecord> records_;
    };

    std::string holder_party(std::size_t p);
    inline const std::string kServerParty = "server";
    inline const std::string kSecureMaxParty = "secure-max";

    // ---- secure aggregation ---------------------------------------------------------

    enum class ShareMode
    {
        Real,
        FixedPoint,
    };

    const char* to_string(ShareMode m) noexcept;
    ShareMode share_mode_from_string(const std::string& s);

    enum class ShareStage
    {
        GradShare,
        PartialSum,
    };

    /// Holder-to-holder channel used by secure_aggregate. Payloads are ring words (fixed
    /// point) or bit-cast doubles (real mode).
    class ShareChannel
    {
    public:
        virtual ~ShareChannel() = default;
        virtual void send(std::size_t from, std::size_t to, ShareStage stage, std::vector<std::uint64_t> words) = 0;
        virtual std::vector<std::uint64_t> receive(std::size_t to, std::size_t from, ShareStage stage) = 0;
    };

    /// In-memory mailbox that records one audit entry per transmission.
    class MemoryShareChannel : public ShareChannel
    {
    public:
        explicit MemoryShareChannel(AuditLog* log = nullptr) : log_(log) {}
        void send(std::size_t from, std::size_t to, ShareStage stage, std::vector<std::uint64_t> words) override;
        std::vector<std::uint64_t> receive(std::size_t to, std::size_t from, ShareStage stage) override;
        std::size_t words_sent() const noexcept { return words_sent_; }

    private:
        AuditLog* log_;
        std::map<std::tuple<std::size_t, std::size_t, ShareStage>, std::deque<std::vector<std::uint64_t>>> boxes_;
        std::size_t words_sent_ = 0;
    };

    struct AggregateOptions
    {
        ShareMode mode = ShareMode::FixedPoint;
        unsigned frac_bits = kDefaultFracBits;
    };

    /// n-out-of-n aggregation: holder i splits its vector into P shares and sends share j
    /// to holder j; each holder sums what it holds into a partial sum and broadcasts it;
    /// every holder adds the P partial sums. Returns each holder's reconstructed total;
    /// the totals are bitwise identical across holders. `holder_rngs` has one entry per holder.
    std::vector<std::vector<double>> secure_aggregate(std::span<const std::vector<double>> local_values,
                                                      std::span<Rng> holder_rngs, ShareChannel& channel,
                                                      const AggregateOptions& opts = {});

    struct AggregateResult
    {
        std::vector<std::vector<double>> totals; ///< one per holder
        AuditLog log;
        std::size_t words_sent = 0;
    };

    /// Convenience form over an in-memory channel; holder streams are forked from `rng`.
    AggregateResult secure_aggregate(std::span<const std::vector<double>> local_values, Rng& rng,
                                     const AggregateOptions& opts = {});

    // ---- secure maximum (ideal functionality) ---------------------------------------

    /// Element-wise argmax over P parties' fixed-point scalars. Inputs enter the sealed
    /// evaluator as additive shares; it returns P boolean shares of the one-hot winner
    /// vector (ties to the lowest party). Only share-carrying records reach the log.
    std::vector<BooleanShare> secure_argmax(std::span<const FixedPoint> values, Rng& rng, AuditLog& log);

    /// One holder's input to secure pooling: its held rows in registration order.
    struct PoolingInput
    {
        std::size_t holder = 0;
        std::vector<RowState> state;
        /// Additive shares (P of them) of order_key(t) for every element, row-major.
        std::vector<std::vector<std::uint64_t>> key_shares;
    };

    struct PoolingOutput
    {
        Matrix pooled; ///< universe rows x cols
        /// P boolean shares of the one-hot winning holder per element, layout
        /// ((row * cols + col) * P + holder).
        std::vector<BooleanShare> index_shares;
    };

    /// Sealed evaluator for cross-holder max pooling. It learns the holders' digest lists
    /// at setup so it can align rows exactly as the server does.
    class SecureMaxEvaluator
    {
    public:
        SecureMaxEvaluator(std::uint64_t seed, std::size_t holders);

        void register_holder(std::size_t holder, std::vector<Digest> digests);
        std::size_t universe_size() const noexcept { return universe_.size(); }

        /// Reconstructs inside the boundary, pools with the same precedence rules as the
        /// plaintext path, and re-shares the winner index.
        PoolingOutput pool(std::span<const PoolingInput> inputs, std::size_t cols);

    private:
        void build_universe();

        std::size_t holders_;
        Rng rng_;
        std::vector<std::vector<Digest>> lists_;
        std::vector<Digest> universe_;
        std::vector<std::vector<std::size_t>> row_of_; ///< holder list position -> universe row
    };

    /// Helper for holders: additive shares of order_key(t) for every element.
    std::vector<std::vector<std::uint64_t>> share_order_keys(const Matrix& t, std::size_t parties, Rng& rng);

} // namespace sapgnn
