#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tedl {

/// Dense row-major matrix of doubles. The only numeric container used by the
/// network, the losses and the metrics.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const noexcept;
    void fill(double v) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices);

// Index of the largest entry of each row (first one on ties).
std::vector<std::size_t> row_argmax(const Matrix& m);

} // namespace tedl
