#include "sapgnn/gnn.hpp"

namespace sapgnn
{
    std::vector<LabelledRow> train_rows(const Graph& g)
    {
        std::vector<LabelledRow> out;
        for (std::size_t i = 0; i < g.num_nodes(); ++i)
        {
            if (g.splits[i] == Split::Train)
            {
                out.push_back({i, static_cast<std::size_t>(g.labels[i])});
            }
        }
        return out;
    }

    DropoutMasks draw_dropout_masks(Rng& rng, const ModelConfig& cfg, std::size_t rows)
    {
        DropoutMasks masks(cfg.layers);
        for (std::size_t l = 0; l < cfg.layers; ++l)
        {
            const double rate = cfg.layer_dropout(l);
            if (rate > 0.0)
            {
                masks[l] = dropout_mask(rng, rate, rows, cfg.layer_out(l));
            }
        }
        return masks;
    }

    CentralizedResult centralized_forward_backward(const Graph& g, const ModelWeights& w, const ModelConfig& cfg,
                                                   std::span<const LabelledRow> labelled, const DropoutMasks* masks)
    {
        cfg.validate();
        if (g.feature_dim() != cfg.input_dim)
        {
            throw std::invalid_argument("centralized_forward_backward: feature width does not match the model");
        }
        if (w.local.layers.size() != cfg.layers || w.global.layers.size() != cfg.layers)
        {
            throw std::invalid_argument("centralized_forward_backward: weights do not match the layer count");
        }

        const auto adjacency = g.adjacency();
        const std::vector<bool> held(g.num_nodes(), true);

        CentralizedResult r;
        r.embeddings.push_back(g.features);
        std::vector<LocalLayerTape> local_tapes;
        std::vector<GlobalLayerTape> global_tapes;
        for (std::size_t l = 0; l < cfg.layers; ++l)
        {
            local_tapes.push_back(local_embedding(adjacency, held, r.embeddings.back(), w.local.layers[l], cfg, l));
            const LocalStack stack{&local_tapes.back().t, &local_tapes.back().state};
            const Matrix* mask = masks != nullptr && l < masks->size() ? &(*masks)[l] : nullptr;
            global_tapes.push_back(
                global_embedding(std::span(&stack, 1), w.global.layers[l], cfg.layer_relu(l), mask));
            r.embeddings.push_back(global_tapes.back().output);
        }

        const auto pred = predict_and_loss(r.embeddings.back(), labelled, w.local.psi_weight, w.local.psi_bias);
        r.probabilities = pred.probabilities;
        r.loss = pred.loss;

        r.grads.local = w.local.zeros_like();
        r.grads.global = w.global.zeros_like();
        const auto pg = predictor_backward(r.embeddings.back(), pred.grad_logits, w.local.psi_weight);
        r.grads.local.psi_weight = pg.psi_weight;
        r.grads.local.psi_bias = pg.psi_bias;
        Matrix grad_h = pg.h_final;
        for (std::size_t l = cfg.layers; l-- > 0;)
        {
            const auto gg = global_embedding_backward(global_tapes[l], grad_h, w.global.layers[l], cfg.layer_relu(l));
            r.grads.global.layers[l] = gg.weight;
            const auto lg = local_embedding_backward(adjacency, local_tapes[l], gg.pooled, w.local.layers[l], cfg);
            r.grads.local.layers[l] = lg.weights;
            grad_h = lg.input;
        }
        return r;
    }

} // namespace sapgnn
