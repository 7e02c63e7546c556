#include "sapgnn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sapgnn
{
    Matrix glorot_init(Rng& rng, std::size_t rows, std::size_t cols)
    {
        if (rows == 0 || cols == 0)
        {
            throw std::invalid_argument("glorot_init: zero dimension");
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Matrix m(rows, cols);
        for (double& v : m.data())
        {
            v = rng.uniform(-bound, bound);
        }
        return m;
    }

    Matrix dropout_mask(Rng& rng, double rate, std::size_t rows, std::size_t cols)
    {
        if (rate < 0.0 || rate >= 1.0)
        {
            throw std::invalid_argument("dropout_mask: rate must be in [0, 1)");
        }
        Matrix m(rows, cols, 1.0);
        if (rate == 0.0)
        {
            return m;
        }
        const double keep_scale = 1.0 / (1.0 - rate);
        for (double& v : m.data())
        {
            v = rng.uniform() < rate ? 0.0 : keep_scale;
        }
        return m;
    }

    void adam_step(AdamState& state, Matrix& params, const Matrix& grads)
    {
        if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
            !params.same_shape(state.second_moment))
        {
            throw std::invalid_argument("adam_step: shape mismatch");
        }
        if (!all_finite(grads))
        {
            throw std::invalid_argument("adam_step: non-finite gradient entry");
        }
        const auto& h = state.hyper;
        state.step += 1;
        const double t = static_cast<double>(state.step);
        const double bias1 = 1.0 - std::pow(h.beta1, t);
        const double bias2 = 1.0 - std::pow(h.beta2, t);
        auto& m = state.first_moment.data();
        auto& v = state.second_moment.data();
        auto& p = params.data();
        const auto& g = grads.data();
        for (std::size_t i = 0; i < p.size(); ++i)
        {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        }
    }

    std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> at, double eps)
    {
        if (!(eps > 0.0))
        {
            throw std::invalid_argument("finite_diff_grad: eps must be positive");
        }
        std::vector<double> x(at.begin(), at.end());
        std::vector<double> grad(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            const double orig = x[i];
            x[i] = orig + eps;
            const double fp = f(x);
            x[i] = orig - eps;
            const double fm = f(x);
            x[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
            {
                throw std::domain_error("finite_diff_grad: non-finite function value");
            }
            grad[i] = (fp - fm) / (2.0 * eps);
        }
        return grad;
    }

} // namespace sapgnn
