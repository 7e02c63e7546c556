#include "sapgnn/gnn.hpp"

#include <algorithm>

namespace sapgnn
{
    const char* to_string(UpdateKind k) noexcept
    {
        switch (k)
        {
        case UpdateKind::Sum:
            return "sum";
        case UpdateKind::Concat:
            return "concat";
        case UpdateKind::Gated:
            return "gated";
        case UpdateKind::NegatedSum:
            return "negated-sum";
        }
        return "?";
    }

    UpdateKind update_kind_from_string(const std::string& s)
    {
        if (s == "sum")
            return UpdateKind::Sum;
        if (s == "concat")
            return UpdateKind::Concat;
        if (s == "gated")
            return UpdateKind::Gated;
        if (s == "negated-sum")
            return UpdateKind::NegatedSum;
        throw std::invalid_argument("unknown update kind '" + s + "'");
    }

    const char* to_string(MessageKind k) noexcept
    {
        return k == MessageKind::Linear ? "linear" : "identity";
    }

    MessageKind message_kind_from_string(const std::string& s)
    {
        if (s == "identity")
            return MessageKind::Identity;
        if (s == "linear")
            return MessageKind::Linear;
        throw std::invalid_argument("unknown message kind '" + s + "'");
    }

    bool is_monotone(UpdateKind k) noexcept
    {
        return k != UpdateKind::NegatedSum;
    }

    void ModelConfig::validate() const
    {
        if (input_dim == 0 || hidden == 0 || num_classes == 0 || layers == 0)
        {
            throw std::invalid_argument("ModelConfig: input_dim, hidden, num_classes and layers must be >= 1");
        }
        if (dropout < 0.0 || dropout >= 1.0)
        {
            throw std::invalid_argument("ModelConfig: dropout must be in [0, 1)");
        }
    }

    std::vector<Matrix*> LocalWeights::tensors()
    {
        std::vector<Matrix*> out;
        for (auto& l : layers)
        {
            for (Matrix* m : {&l.message, &l.gate_weight, &l.gate_bias})
            {
                if (!m->empty())
                {
                    out.push_back(m);
                }
            }
        }
        out.push_back(&psi_weight);
        out.push_back(&psi_bias);
        return out;
    }

    std::vector<const Matrix*> LocalWeights::tensors() const
    {
        auto mut = const_cast<LocalWeights*>(this)->tensors();
        return {mut.begin(), mut.end()};
    }

    std::vector<std::string> LocalWeights::tensor_names() const
    {
        std::vector<std::string> out;
        for (std::size_t l = 0; l < layers.size(); ++l)
        {
            const auto& lw = layers[l];
            const std::string p = "layer" + std::to_string(l) + ".";
            if (!lw.message.empty())
                out.push_back(p + "message");
            if (!lw.gate_weight.empty())
                out.push_back(p + "gate_weight");
            if (!lw.gate_bias.empty())
                out.push_back(p + "gate_bias");
        }
        out.emplace_back("psi_weight");
        out.emplace_back("psi_bias");
        return out;
    }

    std::size_t LocalWeights::parameter_count() const
    {
        std::size_t n = 0;
        for (const Matrix* m : tensors())
        {
            n += m->size();
        }
        return n;
    }

    LocalWeights LocalWeights::zeros_like() const
    {
        LocalWeights z = *this;
        for (Matrix* m : z.tensors())
        {
            std::fill(m->data().begin(), m->data().end(), 0.0);
        }
        return z;
    }

    std::vector<double> LocalWeights::flatten() const
    {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (const Matrix* m : tensors())
        {
            out.insert(out.end(), m->data().begin(), m->data().end());
        }
        return out;
    }

    void LocalWeights::unflatten(std::span<const double> flat)
    {
        if (flat.size() != parameter_count())
        {
            throw std::invalid_argument("LocalWeights::unflatten: length mismatch");
        }
        std::size_t off = 0;
        for (Matrix* m : tensors())
        {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m->size(), m->data().begin());
            off += m->size();
        }
    }

    std::vector<Matrix*> GlobalWeights::tensors()
    {
        std::vector<Matrix*> out;
        for (auto& m : layers)
        {
            out.push_back(&m);
        }
        return out;
    }

    std::vector<const Matrix*> GlobalWeights::tensors() const
    {
        std::vector<const Matrix*> out;
        for (const auto& m : layers)
        {
            out.push_back(&m);
        }
        return out;
    }

    std::size_t GlobalWeights::parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& m : layers)
        {
            n += m.size();
        }
        return n;
    }

    GlobalWeights GlobalWeights::zeros_like() const
    {
        GlobalWeights z;
        for (const auto& m : layers)
        {
            z.layers.emplace_back(m.rows(), m.cols());
        }
        return z;
    }

    std::vector<double> ModelWeights::flatten() const
    {
        std::vector<double> out = local.flatten();
        for (const auto& m : global.layers)
        {
            out.insert(out.end(), m.data().begin(), m.data().end());
        }
        return out;
    }

    void ModelWeights::unflatten(std::span<const double> flat)
    {
        if (flat.size() != parameter_count())
        {
            throw std::invalid_argument("ModelWeights::unflatten: length mismatch");
        }
        const std::size_t n_local = local.parameter_count();
        local.unflatten(flat.first(n_local));
        std::size_t off = n_local;
        for (auto& m : global.layers)
        {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m.size(), m.data().begin());
            off += m.size();
        }
    }

    LocalWeights init_local_weights(const ModelConfig& cfg, std::uint64_t shared_seed)
    {
        cfg.validate();
        Rng rng(shared_seed, kLocalInitStream);
        LocalWeights w;
        for (std::size_t l = 0; l < cfg.layers; ++l)
        {
            LocalLayerWeights lw;
            const std::size_t in = cfg.layer_in(l);
            if (cfg.message == MessageKind::Linear)
            {
                lw.message = glorot_init(rng, in, in);
            }
            if (cfg.update == UpdateKind::Gated)
            {
                lw.gate_weight = glorot_init(rng, in, in);
                lw.gate_bias = Matrix(1, in);
            }
            w.layers.push_back(std::move(lw));
        }
        w.psi_weight = glorot_init(rng, cfg.num_classes, cfg.layer_out(cfg.layers - 1));
        w.psi_bias = Matrix(1, cfg.num_classes);
        return w;
    }

    GlobalWeights init_global_weights(const ModelConfig& cfg, std::uint64_t server_seed)
    {
        cfg.validate();
        Rng rng(server_seed, kServerStream);
        GlobalWeights w;
        for (std::size_t l = 0; l < cfg.layers; ++l)
        {
            w.layers.push_back(glorot_init(rng, cfg.layer_out(l), cfg.local_dim(l)));
        }
        return w;
    }

    ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t shared_seed, std::uint64_t server_seed)
    {
        return {init_local_weights(cfg, shared_seed), init_global_weights(cfg, server_seed)};
    }

} // namespace sapgnn
