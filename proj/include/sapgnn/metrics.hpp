#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sapgnn
{
    /// Square C x C count matrix, counts[truth][predicted].
    struct Confusion
    {
        std::size_t classes = 0;
        std::vector<std::size_t> counts;

        explicit Confusion(std::size_t c = 0) : classes(c), counts(c * c, 0) {}

        void add(std::size_t truth, std::size_t predicted);
        Confusion& operator+=(const Confusion& other);
        std::size_t total() const;
        std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
    };

    struct ClassificationMetrics
    {
        double accuracy = 0.0;
        double macro_f1 = 0.0;
        std::size_t total = 0;
    };

    /// Per-class F1 = 2tp / (2tp + fp + fn). A class enters the macro mean unless it has
    /// neither true instances nor predictions. Throws std::invalid_argument when empty.
    ClassificationMetrics metrics(const Confusion& c);
    ClassificationMetrics metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                  std::size_t num_classes);

} // namespace sapgnn
