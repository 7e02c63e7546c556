#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace sapgnn
{
    /// Stand-in for "minus infinity" in max aggregation. Finite so that arithmetic on
    /// rows that carry it never produces inf/nan.
    inline constexpr double kNegInf = std::numeric_limits<double>::lowest();

    /// Dense row-major float64 matrix.
    class Matrix
    {
    public:
        Matrix() = default;
        Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
        Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

        static Matrix identity(std::size_t n);

        std::size_t rows() const noexcept { return rows_; }
        std::size_t cols() const noexcept { return cols_; }
        std::size_t size() const noexcept { return data_.size(); }
        bool empty() const noexcept { return data_.empty(); }

        double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
        double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

        std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
        std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

        std::vector<double>& data() noexcept { return data_; }
        const std::vector<double>& data() const noexcept { return data_; }

        bool same_shape(const Matrix& other) const noexcept
        {
            return rows_ == other.rows_ && cols_ == other.cols_;
        }

        friend bool operator==(const Matrix&, const Matrix&) = default;

    private:
        std::size_t rows_ = 0;
        std::size_t cols_ = 0;
        std::vector<double> data_;
    };

    Matrix matmul(const Matrix& a, const Matrix& b);
    /// a * b^T without materializing the transpose.
    Matrix matmul_transposed(const Matrix& a, const Matrix& b);
    /// a^T * b, reducing over rows in ascending order.
    Matrix transposed_matmul(const Matrix& a, const Matrix& b);
    Matrix transpose(const Matrix& a);
    Matrix add(const Matrix& a, const Matrix& b);
    void add_inplace(Matrix& acc, const Matrix& b);
    Matrix hadamard(const Matrix& a, const Matrix& b);
    Matrix elementwise_max(const Matrix& a, const Matrix& b);
    Matrix relu(const Matrix& x);
    /// 1 where x > 0, else 0. The kink at exactly 0 gets derivative 0.
    Matrix relu_grad(const Matrix& x);
    Matrix softmax_rows(const Matrix& logits);
    /// Column sums, ascending row order.
    std::vector<double> column_sums(const Matrix& a);

    double max_abs_diff(const Matrix& a, const Matrix& b);
    bool all_finite(const Matrix& a) noexcept;

} // namespace sapgnn
