#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace couplegen {

/// Raised when operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a scalar argument lies outside its admissible domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when softmax meets a row with no finite entry.
class DegenerateRowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
///
/// Entries are expected to be finite; the one exception is attention score
/// matrices, where -inf marks a masked key column.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Token sequences (text embeddings, image hidden states) are tokens x d_model.
using TokenSeq = Matrix;

// OpenMP kernels. Every output element is reduced in a fixed order, so results
// are bit-identical to the serial reference regardless of thread count.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double factor);
Matrix tanh_elementwise(const Matrix& m);

/// Stack matrices along the token (row) axis.
Matrix vstack(std::span<const Matrix* const> parts);
Matrix vstack(const Matrix& top, const Matrix& bottom);
/// Rows [first, first + count).
Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count);

namespace reference {

// Single-threaded triple loops kept as the oracle for the OpenMP kernels.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& m);

} // namespace reference

/// splitmix64 generator.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Top 53 bits mapped to [0, 1).
    double next_unit_real();
    double uniform(double lo, double hi);

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

/// splitmix64 output finalizer, usable as a standalone 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes);

Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

} // namespace couplegen
