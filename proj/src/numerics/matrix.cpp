#include "sapgnn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sapgnn
{
    namespace
    {
        void require_same_shape(const Matrix& a, const Matrix& b, const char* what)
        {
            if (!a.same_shape(b))
            {
                throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                            std::to_string(b.cols()) + ")");
            }
        }
    } // namespace

    Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows_ * cols_)
        {
            throw std::invalid_argument("Matrix: data length does not match rows*cols");
        }
    }

    Matrix Matrix::identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
        {
            m(i, i) = 1.0;
        }
        return m;
    }

    Matrix matmul(const Matrix& a, const Matrix& b)
    {
        if (a.cols() != b.rows())
        {
            throw std::invalid_argument("matmul: inner dimensions differ");
        }
        Matrix out(a.rows(), b.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
        {
            for (std::size_t k = 0; k < a.cols(); ++k)
            {
                const double aik = a(i, k);
                if (aik == 0.0)
                {
                    continue;
                }
                for (std::size_t j = 0; j < b.cols(); ++j)
                {
                    out(i, j) += aik * b(k, j);
                }
            }
        }
        return out;
    }

    Matrix matmul_transposed(const Matrix& a, const Matrix& b)
    {
        if (a.cols() != b.cols())
        {
            throw std::invalid_argument("matmul_transposed: column counts differ");
        }
        Matrix out(a.rows(), b.rows());
        for (std::size_t i = 0; i < a.rows(); ++i)
        {
            const auto ar = a.row(i);
            for (std::size_t j = 0; j < b.rows(); ++j)
            {
                const auto br = b.row(j);
                double s = 0.0;
                for (std::size_t k = 0; k < ar.size(); ++k)
                {
                    s += ar[k] * br[k];
                }
                out(i, j) = s;
            }
        }
        return out;
    }

    Matrix transposed_matmul(const Matrix& a, const Matrix& b)
    {
        if (a.rows() != b.rows())
        {
            throw std::invalid_argument("transposed_matmul: row counts differ");
        }
        Matrix out(a.cols(), b.cols());
        for (std::size_t r = 0; r < a.rows(); ++r)
        {
            for (std::size_t i = 0; i < a.cols(); ++i)
            {
                const double ari = a(r, i);
                if (ari == 0.0)
                {
                    continue;
                }
                for (std::size_t j = 0; j < b.cols(); ++j)
                {
                    out(i, j) += ari * b(r, j);
                }
            }
        }
        return out;
    }

    Matrix transpose(const Matrix& a)
    {
        Matrix out(a.cols(), a.rows());
        for (std::size_t i = 0; i < a.rows(); ++i)
        {
            for (std::size_t j = 0; j < a.cols(); ++j)
            {
                out(j, i) = a(i, j);
            }
        }
        return out;
    }

    Matrix add(const Matrix& a, const Matrix& b)
    {
        Matrix out = a;
        add_inplace(out, b);
        return out;
    }

    void add_inplace(Matrix& acc, const Matrix& b)
    {
        require_same_shape(acc, b, "add");
        auto& d = acc.data();
        const auto& s = b.data();
        for (std::size_t i = 0; i < d.size(); ++i)
        {
            d[i] += s[i];
        }
    }

    Matrix hadamard(const Matrix& a, const Matrix& b)
    {
        require_same_shape(a, b, "hadamard");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i)
        {
            out.data()[i] *= b.data()[i];
        }
        return out;
    }

    Matrix elementwise_max(const Matrix& a, const Matrix& b)
    {
        require_same_shape(a, b, "elementwise_max");
        Matrix out = a;
        for (std::size_t i = 0; i < out.size(); ++i)
        {
            out.data()[i] = std::max(a.data()[i], b.data()[i]);
        }
        return out;
    }

    Matrix relu(const Matrix& x)
    {
        Matrix out = x;
        for (double& v : out.data())
        {
            v = v > 0.0 ? v : 0.0;
        }
        return out;
    }

    Matrix relu_grad(const Matrix& x)
    {
        Matrix out(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            out.data()[i] = x.data()[i] > 0.0 ? 1.0 : 0.0;
        }
        return out;
    }

    Matrix softmax_rows(const Matrix& logits)
    {
        Matrix out(logits.rows(), logits.cols());
        for (std::size_t r = 0; r < logits.rows(); ++r)
        {
            const auto in = logits.row(r);
            auto o = out.row(r);
            const double mx = *std::max_element(in.begin(), in.end());
            double z = 0.0;
            for (std::size_t c = 0; c < in.size(); ++c)
            {
                o[c] = std::exp(in[c] - mx);
                z += o[c];
            }
            for (double& v : o)
            {
                v /= z;
            }
        }
        return out;
    }

    std::vector<double> column_sums(const Matrix& a)
    {
        std::vector<double> out(a.cols(), 0.0);
        for (std::size_t r = 0; r < a.rows(); ++r)
        {
            for (std::size_t c = 0; c < a.cols(); ++c)
            {
                out[c] += a(r, c);
            }
        }
        return out;
    }

    double max_abs_diff(const Matrix& a, const Matrix& b)
    {
        require_same_shape(a, b, "max_abs_diff");
        double m = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
        }
        return m;
    }

    bool all_finite(const Matrix& a) noexcept
    {
        return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
    }

} // namespace sapgnn
