#include "sapgnn/protocol.hpp"

#include <bit>
#include <cstring>

namespace sapgnn
{
    namespace
    {
        class Writer
        {
        public:
            void u8(std::uint8_t v) { out_.push_back(v); }
            void u32(std::uint32_t v) { le(v, 4); }
            void u64(std::uint64_t v) { le(v, 8); }
            void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

            void matrix(const Matrix& m)
            {
                u64(m.rows());
                u64(m.cols());
                for (const double v : m.data())
                    f64(v);
            }
            void states(const std::vector<RowState>& s)
            {
                u64(s.size());
                for (const auto v : s)
                    u8(static_cast<std::uint8_t>(v));
            }
            void words(const std::vector<std::uint64_t>& w)
            {
                u64(w.size());
                for (const auto v : w)
                    u64(v);
            }
            void bits(const std::vector<std::uint8_t>& b)
            {
                u64(b.size());
                std::uint8_t acc = 0;
                for (std::size_t i = 0; i < b.size(); ++i)
                {
                    acc |= static_cast<std::uint8_t>((b[i] & 1U) << (i % 8));
                    if (i % 8 == 7 || i + 1 == b.size())
                    {
                        u8(acc);
                        acc = 0;
                    }
                }
            }

            std::vector<std::uint8_t> take() { return std::move(out_); }
            std::vector<std::uint8_t>& raw() { return out_; }

        private:
            void le(std::uint64_t v, int n)
            {
                for (int i = 0; i < n; ++i)
                    out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
            std::vector<std::uint8_t> out_;
        };

        class Reader
        {
        public:
            explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

            std::uint8_t u8()
            {
                need(1);
                return in_[pos_++];
            }
            std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
            std::uint64_t u64() { return le(8); }
            double f64() { return std::bit_cast<double>(u64()); }

            std::size_t count(std::size_t unit_bytes)
            {
                const std::uint64_t n = u64();
                if (unit_bytes != 0 && n > (in_.size() - pos_) / unit_bytes)
                    throw ProtocolError("wire: element count exceeds payload");
                return static_cast<std::size_t>(n);
            }
            Matrix matrix()
            {
                const std::uint64_t r = u64();
                const std::uint64_t c = u64();
                if (c != 0 && r > (in_.size() - pos_) / 8 / c)
                    throw ProtocolError("wire: matrix larger than payload");
                Matrix m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                for (double& v : m.data())
                    v = f64();
                return m;
            }
            std::vector<RowState> states()
            {
                std::vector<RowState> s(count(1));
                for (auto& v : s)
                {
                    const std::uint8_t b = u8();
                    if (b > 2)
                        throw ProtocolError("wire: bad row state");
                    v = static_cast<RowState>(b);
                }
                return s;
            }
            std::vector<std::uint64_t> words()
            {
                std::vector<std::uint64_t> w(count(8));
                for (auto& v : w)
                    v = u64();
                return w;
            }
            std::vector<std::uint8_t> bits()
            {
                const std::uint64_t n = u64();
                if ((n + 7) / 8 > in_.size() - pos_)
                    throw ProtocolError("wire: bit vector larger than payload");
                std::vector<std::uint8_t> b(static_cast<std::size_t>(n));
                std::uint8_t acc = 0;
                for (std::size_t i = 0; i < b.size(); ++i)
                {
                    if (i % 8 == 0)
                        acc = u8();
                    b[i] = static_cast<std::uint8_t>((acc >> (i % 8)) & 1U);
                }
                return b;
            }
            Digest digest()
            {
                need(16);
                Digest d{};
                std::memcpy(d.data(), in_.data() + pos_, 16);
                pos_ += 16;
                return d;
            }
            bool done() const { return pos_ == in_.size(); }

        private:
            void need(std::size_t n) const
            {
                if (in_.size() - pos_ < n)
                    throw ProtocolError("wire: truncated message");
            }
            std::uint64_t le(int n)
            {
                need(static_cast<std::size_t>(n));
                std::uint64_t v = 0;
                for (int i = 0; i < n; ++i)
                    v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
                return v;
            }
            std::span<const std::uint8_t> in_;
            std::size_t pos_ = 0;
        };

        struct Encoder
        {
            Writer& w;
            void operator()(const HashedNodeList& m)
            {
                w.u32(m.holder);
                w.u64(m.digests.size());
                for (const auto& d : m.digests)
                    for (const auto b : d)
                        w.u8(b);
            }
            void operator()(const LocalEmbedding& m)
            {
                w.u32(m.layer);
                w.u32(m.holder);
                w.states(m.state);
                w.matrix(m.t);
            }
            void operator()(const GlobalEmbedding& m)
            {
                w.u32(m.layer);
                w.u32(m.holder);
                w.matrix(m.h);
            }
            void operator()(const PredGrad& m)
            {
                w.u32(m.holder);
                w.matrix(m.grad);
            }
            void operator()(const LocalEmbGrad& m)
            {
                w.u32(m.layer);
                w.u32(m.holder);
                w.matrix(m.grad);
            }
            void operator()(const InputGrad& m)
            {
                w.u32(m.layer);
                w.u32(m.holder);
                w.matrix(m.grad);
            }
            void operator()(const GradShare& m)
            {
                w.u32(m.from);
                w.u32(m.to);
                w.words(m.words);
            }
            void operator()(const PartialSum& m)
            {
                w.u32(m.from);
                w.u32(m.to);
                w.words(m.words);
            }
            void operator()(const EmbeddingShares& m)
            {
                w.u32(m.layer);
                w.u32(m.holder);
                w.u64(m.cols);
                w.states(m.state);
                w.u64(m.shares.size());
                for (const auto& s : m.shares)
                    w.words(s);
            }
            void operator()(const PooledEmbedding& m)
            {
                w.u32(m.layer);
                w.matrix(m.m);
            }
            void operator()(const IndexShares& m)
            {
                w.u32(m.layer);
                w.u32(m.share);
                w.bits(m.bits);
            }
        };

        ProtocolMessage decode_body(std::uint8_t tag, Reader& r)
        {
            switch (tag)
            {
            case 0: {
                HashedNodeList m;
                m.holder = r.u32();
                m.digests.resize(r.count(16));
                for (auto& d : m.digests)
                    d = r.digest();
                return m;
            }
            case 1: {
                LocalEmbedding m;
                m.layer = r.u32();
                m.holder = r.u32();
                m.state = r.states();
                m.t = r.matrix();
                return m;
            }
            case 2: {
                GlobalEmbedding m;
                m.layer = r.u32();
                m.holder = r.u32();
                m.h = r.matrix();
                return m;
            }
            case 3: {
                PredGrad m;
                m.holder = r.u32();
                m.grad = r.matrix();
                return m;
            }
            case 4: {
                LocalEmbGrad m;
                m.layer = r.u32();
                m.holder = r.u32();
                m.grad = r.matrix();
                return m;
            }
            case 5: {
                InputGrad m;
                m.layer = r.u32();
                m.holder = r.u32();
                m.grad = r.matrix();
                return m;
            }
            case 6: {
                GradShare m;
                m.from = r.u32();
                m.to = r.u32();
                m.words = r.words();
                return m;
            }
            case 7: {
                PartialSum m;
                m.from = r.u32();
                m.to = r.u32();
                m.words = r.words();
                return m;
            }
            case 8: {
                EmbeddingShares m;
                m.layer = r.u32();
                m.holder = r.u32();
                m.cols = r.u64();
                m.state = r.states();
                m.shares.resize(r.count(8));
                for (auto& s : m.shares)
                    s = r.words();
                return m;
            }
            case 9: {
                PooledEmbedding m;
                m.layer = r.u32();
                m.m = r.matrix();
                return m;
            }
            case 10: {
                IndexShares m;
                m.layer = r.u32();
                m.share = r.u32();
                m.bits = r.bits();
                return m;
            }
            default:
                throw ProtocolError("wire: unknown message tag " + std::to_string(tag));
            }
        }
    } // namespace

    const std::vector<std::string>& schema_kinds()
    {
        static const std::vector<std::string> kinds{"HashedNodeList", "LocalEmbedding", "GlobalEmbedding", "PredGrad",
                                                    "LocalEmbGrad",   "InputGrad",      "GradShare",       "PartialSum",
                                                    "EmbeddingShares", "PooledEmbedding", "IndexShares"};
        return kinds;
    }

    const char* kind_name(const ProtocolMessage& m) noexcept
    {
        return schema_kinds()[m.index()].c_str();
    }

    std::string schema_id(const ProtocolMessage& m)
    {
        return std::visit(
            [](const auto& v) -> std::string {
                using T = std::decay_t<decltype(v)>;
                auto dims = [](const Matrix& x) { return std::to_string(x.rows()) + "x" + std::to_string(x.cols()); };
                if constexpr (std::is_same_v<T, HashedNodeList>)
                    return "digest128[" + std::to_string(v.digests.size()) + "]";
                else if constexpr (std::is_same_v<T, LocalEmbedding>)
                    return "state[" + std::to_string(v.state.size()) + "],f64[" + dims(v.t) + "]";
                else if constexpr (std::is_same_v<T, GlobalEmbedding>)
                    return "f64[" + dims(v.h) + "]";
                else if constexpr (std::is_same_v<T, PooledEmbedding>)
                    return "f64[" + dims(v.m) + "]";
                else if constexpr (std::is_same_v<T, PredGrad> || std::is_same_v<T, LocalEmbGrad> ||
                                   std::is_same_v<T, InputGrad>)
                    return "f64[" + dims(v.grad) + "]";
                else if constexpr (std::is_same_v<T, GradShare> || std::is_same_v<T, PartialSum>)
                    return "u64[" + std::to_string(v.words.size()) + "]";
                else if constexpr (std::is_same_v<T, EmbeddingShares>)
                    return "state[" + std::to_string(v.state.size()) + "],u64[" + std::to_string(v.shares.size()) +
                           "x" + std::to_string(v.shares.empty() ? 0 : v.shares.front().size()) + "]";
                else
                    return "bit[" + std::to_string(v.bits.size()) + "]";
            },
            m);
    }

    bool carries_plaintext(const ProtocolMessage& m) noexcept
    {
        return std::holds_alternative<LocalEmbedding>(m) || std::holds_alternative<GlobalEmbedding>(m) ||
               std::holds_alternative<PredGrad>(m) || std::holds_alternative<LocalEmbGrad>(m) ||
               std::holds_alternative<InputGrad>(m) || std::holds_alternative<PooledEmbedding>(m);
    }

    std::int64_t message_layer(const ProtocolMessage& m) noexcept
    {
        return std::visit(
            [](const auto& v) -> std::int64_t {
                if constexpr (requires { v.layer; })
                    return static_cast<std::int64_t>(v.layer);
                else
                    return -1;
            },
            m);
    }

    std::vector<std::uint8_t> encode(const ProtocolMessage& m)
    {
        Writer w;
        w.u8(static_cast<std::uint8_t>(m.index()));
        w.u64(0);
        std::visit(Encoder{w}, m);
        auto out = w.take();
        const std::uint64_t len = out.size() - 9;
        for (int i = 0; i < 8; ++i)
            out[1 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
        return out;
    }

    ProtocolMessage decode(std::span<const std::uint8_t> bytes)
    {
        Reader head(bytes);
        const std::uint8_t tag = head.u8();
        const std::uint64_t len = head.u64();
        if (len != bytes.size() - 9)
        {
            throw ProtocolError("wire: length prefix does not match payload");
        }
        Reader body(bytes.subspan(9));
        ProtocolMessage m = decode_body(tag, body);
        if (!body.done())
        {
            throw ProtocolError("wire: trailing bytes after message");
        }
        return m;
    }

} // namespace sapgnn
