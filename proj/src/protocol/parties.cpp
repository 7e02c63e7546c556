#include "sapgnn/protocol.hpp"

#include <algorithm>

namespace sapgnn
{
    namespace
    {
        std::vector<AdamState> adam_states(const std::vector<const Matrix*>& tensors, const AdamHyper& h)
        {
            std::vector<AdamState> out;
            out.reserve(tensors.size());
            for (const Matrix* m : tensors)
                out.emplace_back(h, m->rows(), m->cols());
            return out;
        }

        Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& rows)
        {
            Matrix out(rows.size(), src.cols());
            for (std::size_t i = 0; i < rows.size(); ++i)
                std::copy_n(src.row(rows[i]).begin(), src.cols(), out.row(i).begin());
            return out;
        }

        void scatter_add(Matrix& dst, const Matrix& src, const std::vector<std::size_t>& rows)
        {
            if (src.rows() != rows.size() || src.cols() != dst.cols())
                throw ProtocolError("gradient shape does not match the holder's row list");
            for (std::size_t i = 0; i < rows.size(); ++i)
            {
                auto d = dst.row(rows[i]);
                const auto s = src.row(i);
                for (std::size_t c = 0; c < d.size(); ++c)
                    d[c] += s[c];
            }
        }

        std::size_t argmax_row(std::span<const double> p)
        {
            return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        }
    } // namespace

    const char* to_string(PoolingMode m) noexcept
    {
        return m == PoolingMode::Naive ? "naive" : "secure-pooling";
    }

    PoolingMode pooling_mode_from_string(const std::string& s)
    {
        if (s == "naive")
            return PoolingMode::Naive;
        if (s == "secure-pooling" || s == "secure")
            return PoolingMode::SecurePooling;
        throw std::invalid_argument("unknown pooling mode: " + s);
    }

    // ---- DataHolder -----------------------------------------------------------------

    DataHolder::DataHolder(LocalGraph g, const ProtocolConfig& cfg, std::size_t holders)
        : graph_(std::move(g)), cfg_(cfg.model), salt_(cfg.salt), holders_(holders),
          share_rng_(cfg.shared_seed, stable_hash("shares") + graph_.holder_id),
          pooling_rng_(share_rng_.fork("pooling"))
    {
        cfg_.validate();
        graph_.validate(cfg_.input_dim);
        if (graph_.graph.num_classes != cfg_.num_classes)
            throw ProtocolError(holder_party(graph_.holder_id) + ": class count does not match the model");
        adjacency_ = graph_.graph.adjacency();
        weights_ = init_local_weights(cfg_, cfg.shared_seed);
        adam_ = adam_states(std::as_const(weights_).tensors(), cfg.adam);

        const auto index = graph_.graph.row_index();
        for (const auto& [id, label] : graph_.train_labels)
        {
            if (label < 0 || static_cast<std::size_t>(label) >= cfg_.num_classes)
                throw ProtocolError(holder_party(graph_.holder_id) + ": train label out of range");
            train_rows_.push_back({index.at(id), static_cast<std::size_t>(label)});
        }
        std::sort(train_rows_.begin(), train_rows_.end(),
                  [](const LabelledRow& a, const LabelledRow& b) { return a.row < b.row; });
    }

    void DataHolder::set_weights(const LocalWeights& w)
    {
        if (w.flatten().size() != weights_.parameter_count() || w.tensor_names() != weights_.tensor_names())
            throw ProtocolError(holder_party(id()) + ": weights do not match the model");
        weights_ = w;
    }

    HashedNodeList DataHolder::node_list() const
    {
        HashedNodeList l;
        l.holder = static_cast<std::uint32_t>(id());
        l.digests.reserve(graph_.graph.num_nodes());
        for (const NodeId n : graph_.graph.node_ids)
            l.digests.push_back(node_digest(salt_, n));
        return l;
    }

    void DataHolder::begin_forward()
    {
        h_.assign(1, graph_.graph.features);
        tapes_.clear();
    }

    LocalEmbedding DataHolder::compute_local(std::size_t layer)
    {
        if (layer != tapes_.size() || h_.size() != layer + 1)
            throw ProtocolError(holder_party(id()) + ": local layer computed out of order");
        const std::vector<bool> held(graph_.graph.num_nodes(), true);
        tapes_.push_back(local_embedding(adjacency_, held, h_.back(), weights_.layers[layer], cfg_, layer));
        const auto& tape = tapes_.back();
        return {static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(id()), tape.state, tape.t};
    }

    EmbeddingShares DataHolder::share_local(const LocalEmbedding& t)
    {
        EmbeddingShares s;
        s.layer = t.layer;
        s.holder = t.holder;
        s.cols = t.t.cols();
        s.state = t.state;
        s.shares = share_order_keys(t.t, holders_, pooling_rng_);
        return s;
    }

    void DataHolder::accept_global(const GlobalEmbedding& g)
    {
        if (g.layer + 1 != h_.size() || g.holder != id() || g.h.rows() != graph_.graph.num_nodes() ||
            g.h.cols() != cfg_.layer_out(g.layer))
            throw ProtocolError(holder_party(id()) + ": unexpected global embedding");
        h_.push_back(g.h);
    }

    double DataHolder::compute_loss()
    {
        if (h_.size() != cfg_.layers + 1)
            throw ProtocolError(holder_party(id()) + ": forward pass incomplete");
        prediction_ = predict_and_loss(h_.back(), train_rows_, weights_.psi_weight, weights_.psi_bias);
        return prediction_.loss;
    }

    PredGrad DataHolder::pred_grad()
    {
        if (prediction_.grad_logits.rows() != graph_.graph.num_nodes())
            throw ProtocolError(holder_party(id()) + ": no loss computed before backward");
        grads_ = weights_.zeros_like();
        auto pg = predictor_backward(h_.back(), prediction_.grad_logits, weights_.psi_weight);
        grads_.psi_weight = std::move(pg.psi_weight);
        grads_.psi_bias = std::move(pg.psi_bias);
        return {static_cast<std::uint32_t>(id()), std::move(pg.h_final)};
    }

    std::optional<InputGrad> DataHolder::accept_local_grad(const LocalEmbGrad& g)
    {
        if (g.layer >= tapes_.size() || g.holder != id())
            throw ProtocolError(holder_party(id()) + ": unexpected local embedding gradient");
        const auto& tape = tapes_[g.layer];
        if (g.grad.rows() != tape.t.rows() || g.grad.cols() != tape.t.cols())
            throw ProtocolError(holder_party(id()) + ": local embedding gradient has the wrong shape");
        auto lg = local_embedding_backward(adjacency_, tape, g.grad, weights_.layers[g.layer], cfg_);
        grads_.layers[g.layer] = std::move(lg.weights);
        if (g.layer == 0)
            return std::nullopt;
        return InputGrad{g.layer, g.holder, std::move(lg.input)};
    }

    void DataHolder::apply_update(const std::vector<double>& aggregated)
    {
        LocalWeights g = weights_.zeros_like();
        g.unflatten(aggregated);
        auto params = weights_.tensors();
        const auto grads = std::as_const(g).tensors();
        for (std::size_t i = 0; i < params.size(); ++i)
            adam_step(adam_[i], *params[i], *grads[i]);
    }

    Matrix DataHolder::probabilities() const
    {
        if (h_.size() != cfg_.layers + 1)
            throw ProtocolError(holder_party(id()) + ": forward pass incomplete");
        return predict_and_loss(h_.back(), {}, weights_.psi_weight, weights_.psi_bias).probabilities;
    }

    SplitCounts DataHolder::evaluate(Split s) const
    {
        const Matrix p = probabilities();
        SplitCounts out{Confusion(cfg_.num_classes), 0.0};
        auto score = [&](std::size_t row, std::size_t label) {
            const auto pr = p.row(row);
            out.confusion.add(label, argmax_row(pr));
            out.loss -= std::log(std::max(pr[label], kProbabilityClamp));
        };
        if (s == Split::Train)
        {
            for (const auto& r : train_rows_)
                score(r.row, r.label);
            return out;
        }
        const auto& g = graph_.graph;
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
        {
            if (g.splits[i] == s && graph_.eval_nodes.contains(g.node_ids[i]))
                score(i, static_cast<std::size_t>(g.labels[i]));
        }
        return out;
    }

    // ---- Server ---------------------------------------------------------------------

    Server::Server(const ProtocolConfig& cfg, std::size_t holders)
        : cfg_(cfg.model), holders_(holders), lists_(holders), weights_(init_global_weights(cfg.model, cfg.server_seed)),
          dropout_rng_(Rng(cfg.server_seed, kServerStream).fork("dropout"))
    {
        if (holders == 0)
            throw ProtocolError("server: need at least one data holder");
        adam_ = adam_states(std::as_const(weights_).tensors(), cfg.adam);
    }

    void Server::register_holder(const HashedNodeList& list)
    {
        if (list.holder >= holders_)
            throw ProtocolError("server: holder id out of range");
        lists_[list.holder] = list.digests;
        layout_ = align_universe(lists_);
    }

    void Server::set_weights(const GlobalWeights& w)
    {
        if (w.layers.size() != weights_.layers.size())
            throw ProtocolError("server: weights do not match the model");
        for (std::size_t l = 0; l < w.layers.size(); ++l)
            if (w.layers[l].rows() != weights_.layers[l].rows() || w.layers[l].cols() != weights_.layers[l].cols())
                throw ProtocolError("server: weights do not match the model");
        weights_ = w;
    }

    void Server::begin_forward(bool train)
    {
        tapes_.clear();
        if (train && cfg_.dropout > 0.0)
            masks_ = draw_dropout_masks(dropout_rng_, cfg_, universe_size());
        else
            masks_.assign(cfg_.layers, Matrix());
    }

    void Server::pool_plain(std::size_t layer, const std::vector<LocalEmbedding>& locals)
    {
        if (layer != tapes_.size() || locals.size() != holders_)
            throw ProtocolError("server: pooling out of order");
        const std::size_t N = universe_size();
        const std::size_t d = cfg_.local_dim(layer);
        std::vector<Matrix> t(holders_, Matrix(N, d, kNegInf));
        std::vector<std::vector<RowState>> state(holders_, std::vector<RowState>(N, RowState::Absent));
        std::vector<LocalStack> stacks;
        for (std::size_t p = 0; p < holders_; ++p)
        {
            const auto& m = locals[p];
            const auto& rows = layout_.row_of[p];
            if (m.layer != layer || m.holder != p || m.t.rows() != rows.size() || m.t.cols() != d ||
                m.state.size() != rows.size())
                throw ProtocolError("server: malformed local embedding from " + holder_party(p));
            for (std::size_t i = 0; i < rows.size(); ++i)
            {
                state[p][rows[i]] = m.state[i];
                std::copy_n(m.t.row(i).begin(), d, t[p].row(rows[i]).begin());
            }
            stacks.push_back({&t[p], &state[p]});
        }
        tapes_.push_back(global_embedding(stacks, weights_.layers[layer], cfg_.layer_relu(layer), &masks_[layer]));
    }

    void Server::pool_secure(std::size_t layer, const PooledEmbedding& pooled, const std::vector<IndexShares>& shares)
    {
        const std::size_t N = universe_size();
        const std::size_t d = cfg_.local_dim(layer);
        if (layer != tapes_.size() || pooled.layer != layer || pooled.m.rows() != N || pooled.m.cols() != d ||
            shares.size() != holders_)
            throw ProtocolError("server: malformed secure pooling output");
        std::vector<BooleanShare> bs;
        for (const auto& s : shares)
        {
            if (s.layer != layer || s.bits.size() != N * d * holders_)
                throw ProtocolError("server: malformed index share");
            bs.push_back({s.share, s.bits});
        }
        const auto onehot = reconstruct_boolean(bs, holders_);
        std::vector<std::uint32_t> argmax(N * d);
        for (std::size_t e = 0; e < argmax.size(); ++e)
        {
            std::size_t winners = 0;
            for (std::size_t p = 0; p < holders_; ++p)
            {
                if (onehot[e * holders_ + p] != 0)
                {
                    argmax[e] = static_cast<std::uint32_t>(p);
                    ++winners;
                }
            }
            if (winners != 1)
                throw ProtocolError("server: reconstructed winner index is not one-hot");
        }
        tapes_.push_back(global_update(pooled.m, std::move(argmax), weights_.layers[layer], cfg_.layer_relu(layer),
                                       &masks_[layer]));
    }

    GlobalEmbedding Server::global_for(std::size_t layer, std::size_t holder) const
    {
        return {static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(holder),
                gather_rows(tapes_.at(layer).output, layout_.row_of.at(holder))};
    }

    void Server::begin_backward()
    {
        if (tapes_.size() != cfg_.layers)
            throw ProtocolError("server: forward pass incomplete");
        grads_ = weights_.zeros_like();
        grad_h_ = Matrix(universe_size(), cfg_.hidden);
    }

    void Server::accept_pred_grads(const std::vector<PredGrad>& grads)
    {
        if (grads.size() != holders_)
            throw ProtocolError("server: expected one prediction gradient per holder");
        for (std::size_t p = 0; p < holders_; ++p)
        {
            if (grads[p].holder != p)
                throw ProtocolError("server: prediction gradient out of order");
            scatter_add(grad_h_, grads[p].grad, layout_.row_of[p]);
        }
    }

    std::vector<LocalEmbGrad> Server::backward_layer(std::size_t layer)
    {
        const auto& tape = tapes_.at(layer);
        auto gg = global_embedding_backward(tape, grad_h_, weights_.layers[layer], cfg_.layer_relu(layer));
        grads_.layers[layer] = std::move(gg.weight);
        std::vector<LocalEmbGrad> out;
        for (std::size_t p = 0; p < holders_; ++p)
        {
            const Matrix full = route_to_holder(gg.pooled, tape.argmax_holder, p);
            out.push_back({static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(p),
                           gather_rows(full, layout_.row_of[p])});
        }
        grad_h_ = Matrix(universe_size(), cfg_.layer_in(layer));
        return out;
    }

    void Server::accept_input_grads(std::size_t layer, const std::vector<InputGrad>& grads)
    {
        if (grads.size() != holders_)
            throw ProtocolError("server: expected one input gradient per holder");
        for (std::size_t p = 0; p < holders_; ++p)
        {
            if (grads[p].holder != p || grads[p].layer != layer)
                throw ProtocolError("server: input gradient out of order");
            scatter_add(grad_h_, grads[p].grad, layout_.row_of[p]);
        }
    }

    void Server::apply_update()
    {
        for (std::size_t l = 0; l < weights_.layers.size(); ++l)
            adam_step(adam_[l], weights_.layers[l], grads_.layers[l]);
    }

    std::vector<Matrix> Server::embeddings() const
    {
        std::vector<Matrix> out;
        for (const auto& t : tapes_)
            out.push_back(t.output);
        return out;
    }

} // namespace sapgnn
