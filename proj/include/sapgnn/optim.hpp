#pragma once

#include "sapgnn/matrix.hpp"
#include "sapgnn/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sapgnn
{
    /// Glorot/Xavier uniform: entries ~ U(-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))).
    Matrix glorot_init(Rng& rng, std::size_t rows, std::size_t cols);

    /// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise 1/(1-rate).
    Matrix dropout_mask(Rng& rng, double rate, std::size_t rows, std::size_t cols);

    struct AdamHyper
    {
        double lr = 0.01;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;

        friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
    };

    /// Moment accumulators for one parameter tensor. Caller owns and threads it through.
    struct AdamState
    {
        AdamHyper hyper;
        Matrix first_moment;
        Matrix second_moment;
        std::uint64_t step = 0;

        AdamState() = default;
        AdamState(AdamHyper h, std::size_t rows, std::size_t cols)
            : hyper(h), first_moment(rows, cols), second_moment(rows, cols)
        {
        }

        friend bool operator==(const AdamState&, const AdamState&) = default;
    };

    /// One bias-corrected Adam update applied in place. Throws on shape mismatch or a
    /// non-finite gradient entry (params and state are left untouched in that case).
    void adam_step(AdamState& state, Matrix& params, const Matrix& grads);

    /// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) for every coordinate.
    std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> at, double eps);

} // namespace sapgnn
