#include "sapgnn/metrics.hpp"

#include <stdexcept>

namespace sapgnn
{
    void Confusion::add(std::size_t truth, std::size_t predicted)
    {
        if (truth >= classes || predicted >= classes)
        {
            throw std::out_of_range("Confusion::add: class index out of range");
        }
        ++counts[truth * classes + predicted];
    }

    Confusion& Confusion::operator+=(const Confusion& other)
    {
        if (other.classes != classes)
        {
            throw std::invalid_argument("Confusion: class counts differ");
        }
        for (std::size_t i = 0; i < counts.size(); ++i)
        {
            counts[i] += other.counts[i];
        }
        return *this;
    }

    std::size_t Confusion::total() const
    {
        std::size_t n = 0;
        for (const auto c : counts)
        {
            n += c;
        }
        return n;
    }

    ClassificationMetrics metrics(const Confusion& c)
    {
        ClassificationMetrics m;
        m.total = c.total();
        if (m.total == 0)
        {
            throw std::invalid_argument("metrics: empty label set");
        }
        std::size_t correct = 0;
        double f1_sum = 0.0;
        std::size_t f1_classes = 0;
        for (std::size_t k = 0; k < c.classes; ++k)
        {
            const std::size_t tp = c.at(k, k);
            std::size_t fp = 0;
            std::size_t fn = 0;
            for (std::size_t j = 0; j < c.classes; ++j)
            {
                if (j != k)
                {
                    fp += c.at(j, k);
                    fn += c.at(k, j);
                }
            }
            correct += tp;
            const std::size_t denom = 2 * tp + fp + fn;
            if (denom == 0)
            {
                continue;
            }
            f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
            ++f1_classes;
        }
        m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
        m.macro_f1 = f1_classes == 0 ? 0.0 : f1_sum / static_cast<double>(f1_classes);
        return m;
    }

    ClassificationMetrics metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                  std::size_t num_classes)
    {
        if (predictions.size() != labels.size())
        {
            throw std::invalid_argument("metrics: predictions and labels differ in length");
        }
        Confusion c(num_classes);
        for (std::size_t i = 0; i < labels.size(); ++i)
        {
            c.add(labels[i], predictions[i]);
        }
        return metrics(c);
    }

} // namespace sapgnn
