#include "couplegen/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

namespace couplegen {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

void require_inner(const Matrix& a, std::size_t b_rows, const Matrix& b, const char* op)
{
    if (a.cols() != b_rows) {
        throw ShapeError(std::string(op) + ": cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
    }
}

// Shared by the parallel and reference kernels so both reduce in one order.
void softmax_row(std::span<const double> in, std::span<double> out, std::size_t row_index)
{
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : in) {
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
            throw DomainError("softmax_rows: row " + std::to_string(row_index) +
                              " contains NaN or +inf");
        }
        peak = std::max(peak, v);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
        throw DegenerateRowError("softmax_rows: row " + std::to_string(row_index) +
                                 " is entirely -inf");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = std::exp(in[j] - peak);
        total += out[j];
    }
    for (double& v : out) {
        v /= total;
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0)
{
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

bool Matrix::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const
{
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    require_inner(a, b.rows(), b, "matmul");
    const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
    Matrix out(n, m);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * inner * m > kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        auto dst = out.row(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a(static_cast<std::size_t>(i), k);
            const auto src = b.row(k);
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] += aik * src[j];
            }
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: cannot multiply " + a.shape_string() +
                         " by transpose of " + b.shape_string());
    }
    const std::size_t n = a.rows(), inner = a.cols(), m = b.rows();
    Matrix out(n, m);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * inner * m > kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto ai = a.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < m; ++j) {
            const auto bj = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += ai[k] * bj[k];
            }
            out(static_cast<std::size_t>(i), j) = acc;
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m)
{
    Matrix out(m.rows(), m.cols());
    const auto rows = static_cast<std::ptrdiff_t>(m.rows());
    // Exceptions must not escape an OpenMP region; capture the first one.
    std::exception_ptr failure;
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        try {
            softmax_row(m.row(static_cast<std::size_t>(i)), out.row(static_cast<std::size_t>(i)),
                        static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(couplegen_softmax_error)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b, "add");
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return out;
}

Matrix scaled(const Matrix& m, double factor)
{
    Matrix out = m;
    for (double& v : out.data()) {
        v *= factor;
    }
    return out;
}

Matrix tanh_elementwise(const Matrix& m)
{
    Matrix out = m;
    for (double& v : out.data()) {
        v = std::tanh(v);
    }
    return out;
}

Matrix vstack(std::span<const Matrix* const> parts)
{
    if (parts.empty()) {
        return {};
    }
    const std::size_t cols = parts.front()->cols();
    std::size_t rows = 0;
    for (const Matrix* p : parts) {
        if (p->cols() != cols) {
            throw ShapeError("vstack: feature width mismatch " + parts.front()->shape_string() +
                             " vs " + p->shape_string());
        }
        rows += p->rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Matrix* p : parts) {
        data.insert(data.end(), p->data().begin(), p->data().end());
    }
    return Matrix(rows, cols, std::move(data));
}

Matrix vstack(const Matrix& top, const Matrix& bottom)
{
    const Matrix* parts[] = {&top, &bottom};
    return vstack(parts);
}

Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count)
{
    if (first + count > m.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + m.shape_string());
    }
    auto begin = m.data().begin() + static_cast<std::ptrdiff_t>(first * m.cols());
    return Matrix(count, m.cols(),
                  std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * m.cols())));
}

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b)
{
    require_inner(a, b.rows(), b, "reference::matmul");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.cols()) {
        throw ShapeError("reference::matmul_transposed: cannot multiply " + a.shape_string() +
                         " by transpose of " + b.shape_string());
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(j, k);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m)
{
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        softmax_row(m.row(i), out.row(i), i);
    }
    return out;
}

} // namespace reference

std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64()
{
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
}

double Rng::next_unit_real()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi)
{
    return lo + (hi - lo) * next_unit_real();
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng)
{
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

} // namespace couplegen
