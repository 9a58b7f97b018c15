// matrix.hpp - dense row-major f64 matrices and the elementwise/multiplicative
// kernels every other header builds on.
//
// All operations are pure value-to-value functions. Accumulation order in
// matmul is fixed (row-major, inner loop over the shared dimension) so that
// repeated runs are bit-reproducible.

#ifndef SARA_MATRIX_HPP
#define SARA_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sara {

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " does not equal " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_));
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw std::invalid_argument("Matrix: ragged initializer rows");
            }
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix diag(const std::vector<double>& values) {
        Matrix m(values.size(), values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            m(i, i) = values[i];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double& at(std::size_t i, std::size_t j) {
        check_index(i, j);
        return data_[i * cols_ + j];
    }
    double at(std::size_t i, std::size_t j) const {
        check_index(i, j);
        return data_[i * cols_ + j];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    void check_index(std::size_t i, std::size_t j) const {
        if (i >= rows_ || j >= cols_) {
            throw std::out_of_range("Matrix index (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") out of range for " + shape_str());
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ============================================================================
// shape checks
// ============================================================================

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

// ============================================================================
// elementwise operations
// ============================================================================

inline Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.data()[i] += b.data()[i];
    }
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.data()[i] -= b.data()[i];
    }
    return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.data()[i] *= b.data()[i];
    }
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& x : c.data()) {
        x *= s;
    }
    return c;
}

// C = A * diag(v); column j of A scaled by v[j].
inline Matrix scale_cols(const Matrix& a, const std::vector<double>& v) {
    if (v.size() != a.cols()) {
        throw std::invalid_argument("scale_cols: vector length " + std::to_string(v.size()) +
                                    " does not match cols of " + a.shape_str());
    }
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            c(i, j) *= v[j];
        }
    }
    return c;
}

// C = diag(v) * A; row i of A scaled by v[i].
inline Matrix scale_rows(const Matrix& a, const std::vector<double>& v) {
    if (v.size() != a.rows()) {
        throw std::invalid_argument("scale_rows: vector length " + std::to_string(v.size()) +
                                    " does not match rows of " + a.shape_str());
    }
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            c(i, j) *= v[i];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

// ============================================================================
// matmul
// ============================================================================

// Standard product with a pinned accumulation order: for each (i, j) the sum
// over the shared dimension runs in ascending k. The transposed copy of b
// only changes memory layout, not the order of additions.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() + " x " +
                                    b.shape_str());
    }
    const Matrix bt = transpose(b);
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data().data() + i * a.cols();
        for (std::size_t j = 0; j < b.cols(); ++j) {
            const double* brow = bt.data().data() + j * bt.cols();
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += arow[k] * brow[k];
            }
            c(i, j) = acc;
        }
    }
    return c;
}

// ============================================================================
// norms and predicates
// ============================================================================

inline double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double x : a.data()) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data()) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

inline bool all_finite(const Matrix& a) {
    for (double x : a.data()) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

inline void require_finite(const Matrix& a, const char* what) {
    if (!all_finite(a)) {
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
    }
}

// ============================================================================
// softmax
// ============================================================================

// Row-wise softmax with per-row max subtraction; each output row is a
// probability vector even for inputs around +-1e3.
inline Matrix softmax_rows(const Matrix& m) {
    require_finite(m, "softmax_rows");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double rowmax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m.cols(); ++j) {
            rowmax = std::max(rowmax, m(i, j));
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const double e = std::exp(m(i, j) - rowmax);
            out(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) /= denom;
        }
    }
    return out;
}

} // namespace sara

#endif // SARA_MATRIX_HPP
