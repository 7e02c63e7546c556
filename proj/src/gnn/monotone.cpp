#include "sapgnn/gnn.hpp"

#include <algorithm>
#include <cmath>

namespace sapgnn
{
    namespace
    {
        constexpr double kEquality = 1e-12;

        std::vector<double> elementwise_max_of(const std::vector<std::vector<double>>& vs)
        {
            return aggregate_max(vs).value;
        }
    } // namespace

    MonotoneReport check_monotone_update(UpdateKind kind, std::size_t trials, Rng& rng)
    {
        if (trials == 0)
        {
            throw std::invalid_argument("check_monotone_update: trials must be >= 1");
        }
        MonotoneReport report;
        while (report.trials < trials)
        {
            const std::size_t d = 2 + rng.below(5);
            const std::size_t holders = 2 + rng.below(3);
            const std::size_t n_msgs = holders + rng.below(6);

            std::vector<double> h(d);
            for (double& x : h)
                x = rng.normal();
            Matrix gate_w(d, d);
            Matrix gate_b(1, d);
            if (kind == UpdateKind::Gated)
            {
                for (double& x : gate_w.data())
                    x = rng.normal();
                for (double& x : gate_b.data())
                    x = rng.normal();
            }
            std::vector<std::vector<double>> msgs(n_msgs, std::vector<double>(d));
            for (auto& m : msgs)
                for (double& x : m)
                    x = rng.normal();

            // Every holder gets at least one message; the rest land anywhere, and some are
            // copied to a second holder to model overlapping edges.
            std::vector<std::vector<std::vector<double>>> local(holders);
            for (std::size_t i = 0; i < n_msgs; ++i)
            {
                const std::size_t p = i < holders ? i : rng.below(holders);
                local[p].push_back(msgs[i]);
                if (rng.bernoulli(0.25))
                {
                    local[(p + 1 + rng.below(holders - 1)) % holders].push_back(msgs[i]);
                }
            }

            std::vector<std::vector<double>> local_max;
            for (const auto& s : local)
                local_max.push_back(elementwise_max_of(s));
            const bool degenerate =
                std::all_of(local_max.begin(), local_max.end(), [&](const auto& m) { return m == local_max.front(); });
            if (degenerate)
            {
                ++report.redrawn_degenerate;
                continue;
            }

            std::vector<std::vector<double>> per_holder;
            for (const auto& m : local_max)
                per_holder.push_back(local_update(kind, h, m, gate_w, gate_b));
            const auto lhs = elementwise_max_of(per_holder);
            const auto rhs = local_update(kind, h, elementwise_max_of(msgs), gate_w, gate_b);

            double dev = 0.0;
            for (std::size_t k = 0; k < lhs.size(); ++k)
                dev = std::max(dev, std::abs(lhs[k] - rhs[k]));
            ++report.trials;
            if (dev <= kEquality)
                ++report.holds;
        }
        return report;
    }

} // namespace sapgnn
