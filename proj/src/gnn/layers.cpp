#include "sapgnn/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sapgnn
{
    namespace
    {
        constexpr std::uint32_t kNoArgmax = std::numeric_limits<std::uint32_t>::max();

        int state_rank(RowState s) noexcept
        {
            return static_cast<int>(s);
        }
    } // namespace

    std::vector<double> message_construct(std::span<const double> h_v, std::span<const double> h_u,
                                          std::span<const double> h_edge, MessageKind kind, const Matrix& theta_rho)
    {
        (void)h_v;
        (void)h_edge;
        if (kind == MessageKind::Identity)
        {
            return {h_u.begin(), h_u.end()};
        }
        if (theta_rho.cols() != h_u.size())
        {
            throw std::invalid_argument("message_construct: dimension mismatch");
        }
        std::vector<double> out(theta_rho.rows(), 0.0);
        for (std::size_t i = 0; i < theta_rho.rows(); ++i)
        {
            for (std::size_t k = 0; k < h_u.size(); ++k)
            {
                out[i] += theta_rho(i, k) * h_u[k];
            }
        }
        return out;
    }

    MaxResult aggregate_max(std::span<const std::vector<double>> messages)
    {
        if (messages.empty())
        {
            throw std::invalid_argument("aggregate_max: empty message set");
        }
        const std::size_t d = messages.front().size();
        MaxResult r{messages.front(), std::vector<std::size_t>(d, 0)};
        for (std::size_t i = 1; i < messages.size(); ++i)
        {
            if (messages[i].size() != d)
            {
                throw std::invalid_argument("aggregate_max: messages differ in dimension");
            }
            for (std::size_t k = 0; k < d; ++k)
            {
                if (messages[i][k] > r.value[k])
                {
                    r.value[k] = messages[i][k];
                    r.argmax[k] = i;
                }
            }
        }
        return r;
    }

    std::vector<double> local_update(UpdateKind kind, std::span<const double> h, std::span<const double> m,
                                     const Matrix& gate_weight, const Matrix& gate_bias)
    {
        if (h.size() != m.size())
        {
            throw std::invalid_argument("local_update: h and m differ in dimension");
        }
        const std::size_t d = h.size();
        std::vector<double> t;
        switch (kind)
        {
        case UpdateKind::Sum:
            t.resize(d);
            for (std::size_t k = 0; k < d; ++k)
                t[k] = h[k] + m[k];
            break;
        case UpdateKind::NegatedSum:
            t.resize(d);
            for (std::size_t k = 0; k < d; ++k)
                t[k] = h[k] - m[k];
            break;
        case UpdateKind::Concat:
            t.assign(h.begin(), h.end());
            t.insert(t.end(), m.begin(), m.end());
            break;
        case UpdateKind::Gated:
            if (gate_weight.rows() != d || gate_weight.cols() != d || gate_bias.size() != d)
            {
                throw std::invalid_argument("local_update: gate parameters have the wrong shape");
            }
            t.resize(d);
            for (std::size_t i = 0; i < d; ++i)
            {
                double pre = gate_bias.data()[i];
                for (std::size_t k = 0; k < d; ++k)
                    pre += gate_weight(i, k) * h[k];
                t[i] = (pre > 0.0 ? pre : 0.0) * m[i];
            }
            break;
        }
        return t;
    }

    LocalLayerTape local_embedding(const std::vector<std::vector<std::size_t>>& adjacency, const std::vector<bool>& held,
                                   const Matrix& h, const LocalLayerWeights& w, const ModelConfig& cfg, std::size_t layer)
    {
        const std::size_t n = h.rows();
        const std::size_t d = h.cols();
        if (adjacency.size() != n || held.size() != n)
        {
            throw std::invalid_argument("local_embedding: adjacency/held do not cover every row");
        }
        if (d != cfg.layer_in(layer))
        {
            throw std::invalid_argument("local_embedding: input width does not match the layer");
        }

        LocalLayerTape tape;
        tape.input = h;
        tape.messages = cfg.message == MessageKind::Linear ? matmul_transposed(h, w.message) : h;
        tape.aggregated = Matrix(n, d);
        tape.argmax_neighbor.assign(n * d, kNoArgmax);
        tape.state.assign(n, RowState::Absent);
        if (cfg.update == UpdateKind::Gated)
        {
            tape.gate_pre = matmul_transposed(h, w.gate_weight);
            for (std::size_t v = 0; v < n; ++v)
            {
                for (std::size_t k = 0; k < d; ++k)
                {
                    tape.gate_pre(v, k) += w.gate_bias.data()[k];
                }
            }
        }

        const std::size_t td = cfg.local_dim(layer);
        tape.t = Matrix(n, td, kNegInf);
        for (std::size_t v = 0; v < n; ++v)
        {
            if (!held[v])
            {
                continue;
            }
            auto agg = tape.aggregated.row(v);
            const auto& nbrs = adjacency[v];
            if (nbrs.empty())
            {
                tape.state[v] = RowState::NoNeighbors;
            }
            else
            {
                tape.state[v] = RowState::Aggregated;
                for (std::size_t k = 0; k < d; ++k)
                {
                    agg[k] = kNegInf;
                }
                for (const std::size_t u : nbrs)
                {
                    if (u >= n || !held[u])
                    {
                        throw GraphError("local_embedding: neighbour row " + std::to_string(u) + " is not held here");
                    }
                    const auto msg = tape.messages.row(u);
                    for (std::size_t k = 0; k < d; ++k)
                    {
                        // Strict comparison keeps the lowest neighbour row on ties.
                        if (msg[k] > agg[k] || tape.argmax_neighbor[v * d + k] == kNoArgmax)
                        {
                            agg[k] = msg[k];
                            tape.argmax_neighbor[v * d + k] = static_cast<std::uint32_t>(u);
                        }
                    }
                }
            }

            const auto hv = h.row(v);
            auto tv = tape.t.row(v);
            switch (cfg.update)
            {
            case UpdateKind::Sum:
                for (std::size_t k = 0; k < d; ++k)
                    tv[k] = hv[k] + agg[k];
                break;
            case UpdateKind::NegatedSum:
                for (std::size_t k = 0; k < d; ++k)
                    tv[k] = hv[k] - agg[k];
                break;
            case UpdateKind::Concat:
                for (std::size_t k = 0; k < d; ++k)
                {
                    tv[k] = hv[k];
                    tv[d + k] = agg[k];
                }
                break;
            case UpdateKind::Gated:
                for (std::size_t k = 0; k < d; ++k)
                {
                    const double pre = tape.gate_pre(v, k);
                    tv[k] = (pre > 0.0 ? pre : 0.0) * agg[k];
                }
                break;
            }
        }
        return tape;
    }

    LocalLayerGrads local_embedding_backward(const std::vector<std::vector<std::size_t>>& adjacency,
                                             const LocalLayerTape& tape, const Matrix& grad_t,
                                             const LocalLayerWeights& w, const ModelConfig& cfg)
    {
        const std::size_t n = tape.input.rows();
        const std::size_t d = tape.input.cols();
        if (grad_t.rows() != n || grad_t.cols() != tape.t.cols())
        {
            throw std::invalid_argument("local_embedding_backward: gradient shape does not match the tape");
        }
        (void)adjacency;

        LocalLayerGrads g;
        g.input = Matrix(n, d);
        Matrix grad_agg(n, d);
        if (cfg.update == UpdateKind::Gated)
        {
            g.weights.gate_weight = Matrix(d, d);
            g.weights.gate_bias = Matrix(1, d);
        }

        std::vector<double> grad_pre(d);
        for (std::size_t v = 0; v < n; ++v)
        {
            if (tape.state[v] == RowState::Absent)
            {
                continue;
            }
            const auto gt = grad_t.row(v);
            auto gh = g.input.row(v);
            auto ga = grad_agg.row(v);
            switch (cfg.update)
            {
            case UpdateKind::Sum:
                for (std::size_t k = 0; k < d; ++k)
                {
                    gh[k] += gt[k];
                    ga[k] = gt[k];
                }
                break;
            case UpdateKind::NegatedSum:
                for (std::size_t k = 0; k < d; ++k)
                {
                    gh[k] += gt[k];
                    ga[k] = -gt[k];
                }
                break;
            case UpdateKind::Concat:
                for (std::size_t k = 0; k < d; ++k)
                {
                    gh[k] += gt[k];
                    ga[k] = gt[d + k];
                }
                break;
            case UpdateKind::Gated: {
                const auto agg = tape.aggregated.row(v);
                const auto hv = tape.input.row(v);
                for (std::size_t k = 0; k < d; ++k)
                {
                    const double pre = tape.gate_pre(v, k);
                    ga[k] = gt[k] * (pre > 0.0 ? pre : 0.0);
                    grad_pre[k] = pre > 0.0 ? gt[k] * agg[k] : 0.0;
                }
                for (std::size_t i = 0; i < d; ++i)
                {
                    if (grad_pre[i] == 0.0)
                        continue;
                    g.weights.gate_bias.data()[i] += grad_pre[i];
                    for (std::size_t k = 0; k < d; ++k)
                    {
                        g.weights.gate_weight(i, k) += grad_pre[i] * hv[k];
                        gh[k] += grad_pre[i] * w.gate_weight(i, k);
                    }
                }
                break;
            }
            }
        }

        // Route aggregated-message gradients to the winning neighbour's message.
        Matrix grad_msg(n, d);
        for (std::size_t v = 0; v < n; ++v)
        {
            if (tape.state[v] != RowState::Aggregated)
            {
                continue;
            }
            for (std::size_t k = 0; k < d; ++k)
            {
                const std::uint32_t u = tape.argmax_neighbor[v * d + k];
                grad_msg(u, k) += grad_agg(v, k);
            }
        }

        if (cfg.message == MessageKind::Linear)
        {
            g.weights.message = transposed_matmul(grad_msg, tape.input);
            add_inplace(g.input, matmul(grad_msg, w.message));
        }
        else
        {
            add_inplace(g.input, grad_msg);
        }
        return g;
    }

    void pool_max(std::span<const LocalStack> stacks, Matrix& pooled, std::vector<std::uint32_t>& argmax_holder)
    {
        if (stacks.empty())
        {
            throw std::invalid_argument("pool_max: no holders");
        }
        const std::size_t n = stacks.front().t->rows();
        const std::size_t d = stacks.front().t->cols();
        for (const auto& s : stacks)
        {
            if (s.t->rows() != n || s.t->cols() != d || s.state->size() != n)
            {
                throw std::invalid_argument("pool_max: holder stacks differ in shape");
            }
        }
        pooled = Matrix(n, d);
        argmax_holder.assign(n * d, 0);
        for (std::size_t v = 0; v < n; ++v)
        {
            int best_rank = -1;
            std::size_t best_holder = 0;
            for (std::size_t p = 0; p < stacks.size(); ++p)
            {
                const int rank = state_rank((*stacks[p].state)[v]);
                if (rank > best_rank)
                {
                    best_rank = rank;
                    best_holder = p;
                }
            }
            if (best_rank == state_rank(RowState::Absent))
            {
                throw PoolingError("pool_max: row " + std::to_string(v) + " is unknown to every holder");
            }
            for (std::size_t k = 0; k < d; ++k)
            {
                std::size_t win = best_holder;
                double best = (*stacks[best_holder].t)(v, k);
                for (std::size_t p = best_holder + 1; p < stacks.size(); ++p)
                {
                    if (state_rank((*stacks[p].state)[v]) != best_rank)
                        continue;
                    const double x = (*stacks[p].t)(v, k);
                    if (x > best)
                    {
                        best = x;
                        win = p;
                    }
                }
                pooled(v, k) = best;
                argmax_holder[v * d + k] = static_cast<std::uint32_t>(win);
            }
        }
    }

    GlobalLayerTape global_update(Matrix pooled, std::vector<std::uint32_t> argmax_holder, const Matrix& weight, bool relu,
                                  const Matrix* dropout_mask)
    {
        if (weight.cols() != pooled.cols())
        {
            throw std::invalid_argument("global_update: weight does not match pooled width");
        }
        GlobalLayerTape tape;
        tape.pre_activation = matmul_transposed(pooled, weight);
        tape.output = relu ? sapgnn::relu(tape.pre_activation) : tape.pre_activation;
        if (dropout_mask != nullptr && !dropout_mask->empty())
        {
            tape.dropout = *dropout_mask;
            tape.output = hadamard(tape.output, tape.dropout);
        }
        tape.pooled = std::move(pooled);
        tape.argmax_holder = std::move(argmax_holder);
        return tape;
    }

    GlobalLayerTape global_embedding(std::span<const LocalStack> stacks, const Matrix& weight, bool relu,
                                     const Matrix* dropout_mask)
    {
        Matrix pooled;
        std::vector<std::uint32_t> argmax;
        pool_max(stacks, pooled, argmax);
        return global_update(std::move(pooled), std::move(argmax), weight, relu, dropout_mask);
    }

    GlobalLayerGrads global_embedding_backward(const GlobalLayerTape& tape, const Matrix& grad_out, const Matrix& weight,
                                               bool relu)
    {
        Matrix g = grad_out;
        if (!tape.dropout.empty())
        {
            g = hadamard(g, tape.dropout);
        }
        if (relu)
        {
            g = hadamard(g, relu_grad(tape.pre_activation));
        }
        return {transposed_matmul(g, tape.pooled), matmul(g, weight)};
    }

    Matrix route_to_holder(const Matrix& grad_pooled, const std::vector<std::uint32_t>& argmax_holder, std::size_t holder)
    {
        Matrix out(grad_pooled.rows(), grad_pooled.cols());
        for (std::size_t i = 0; i < out.size(); ++i)
        {
            if (argmax_holder[i] == holder)
            {
                out.data()[i] = grad_pooled.data()[i];
            }
        }
        return out;
    }

    Matrix predict_logits(const Matrix& h_final, const Matrix& psi_weight, const Matrix& psi_bias)
    {
        Matrix logits = matmul_transposed(h_final, psi_weight);
        for (std::size_t r = 0; r < logits.rows(); ++r)
        {
            for (std::size_t c = 0; c < logits.cols(); ++c)
            {
                logits(r, c) += psi_bias.data()[c];
            }
        }
        return logits;
    }

    PredictionResult predict_and_loss(const Matrix& h_final, std::span<const LabelledRow> labelled,
                                      const Matrix& psi_weight, const Matrix& psi_bias)
    {
        PredictionResult r;
        r.probabilities = softmax_rows(predict_logits(h_final, psi_weight, psi_bias));
        r.grad_logits = Matrix(r.probabilities.rows(), r.probabilities.cols());
        const std::size_t classes = r.probabilities.cols();
        for (const auto& lr : labelled)
        {
            if (lr.label >= classes)
            {
                throw std::invalid_argument("predict_and_loss: label " + std::to_string(lr.label) + " >= C");
            }
            if (lr.row >= r.probabilities.rows())
            {
                throw std::invalid_argument("predict_and_loss: labelled row out of range");
            }
            const double p = r.probabilities(lr.row, lr.label);
            r.loss += -std::log(std::max(p, kProbabilityClamp));
            if (p >= kProbabilityClamp)
            {
                for (std::size_t c = 0; c < classes; ++c)
                {
                    r.grad_logits(lr.row, c) += r.probabilities(lr.row, c) - (c == lr.label ? 1.0 : 0.0);
                }
            }
        }
        return r;
    }

    PredictorGrads predictor_backward(const Matrix& h_final, const Matrix& grad_logits, const Matrix& psi_weight)
    {
        PredictorGrads g;
        g.psi_weight = transposed_matmul(grad_logits, h_final);
        const auto sums = column_sums(grad_logits);
        g.psi_bias = Matrix(1, sums.size(), sums);
        g.h_final = matmul(grad_logits, psi_weight);
        return g;
    }

} // namespace sapgnn
