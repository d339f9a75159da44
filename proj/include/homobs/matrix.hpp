#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace homobs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
    using Error::Error;
};
struct SingularityError : Error {
    using Error::Error;
};
struct DefinitenessError : Error {
    using Error::Error;
};
struct MonotonicityError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct ParameterError : Error {
    using Error::Error;
};

/// Dense column vector, double precision.
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double value = 0.0) : data_(n, value) {}
    Vector(std::initializer_list<double> init) : data_(init) {}

    std::size_t size() const { return data_.size(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    Vector& operator+=(const Vector& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] += o[i];
        return *this;
    }
    Vector& operator-=(const Vector& o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] -= o[i];
        return *this;
    }
    Vector& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Vector operator+(Vector a, const Vector& b) { return a += b; }
    friend Vector operator-(Vector a, const Vector& b) { return a -= b; }
    friend Vector operator*(Vector a, double s) { return a *= s; }
    friend Vector operator*(double s, Vector a) { return a *= s; }
    friend Vector operator-(Vector a) { return a *= -1.0; }

    double norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }
    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    void check_same(const Vector& o) const {
        if (o.size() != size()) throw DimensionError("vector size mismatch");
    }
    std::vector<double> data_;
};

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Dense row-major matrix, double precision.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw DimensionError("ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
    static Matrix diag(const Vector& d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool square() const { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    Matrix& operator+=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator-(Matrix a) { return a *= -1.0; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) throw DimensionError("matmul: inner dimension mismatch");
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t l = 0; l < a.cols_; ++l) {
                const double ail = a(i, l);
                if (ail == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += ail * b(l, j);
            }
        return out;
    }
    friend Vector operator*(const Matrix& a, const Vector& x) {
        if (a.cols_ != x.size()) throw DimensionError("matvec: dimension mismatch");
        Vector out(a.rows_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < a.cols_; ++j) s += a(i, j) * x[j];
            out[i] = s;
        }
        return out;
    }

    Matrix transpose() const {
        Matrix out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

    double trace() const {
        if (!square()) throw DimensionError("trace: matrix not square");
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) s += (*this)(i, i);
        return s;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Matrix block(std::size_t i0, std::size_t j0, std::size_t r, std::size_t c) const {
        if (i0 + r > rows_ || j0 + c > cols_) throw DimensionError("block out of range");
        Matrix out(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out(i, j) = (*this)(i0 + i, j0 + j);
        return out;
    }

    void set_block(std::size_t i0, std::size_t j0, const Matrix& m) {
        if (i0 + m.rows_ > rows_ || j0 + m.cols_ > cols_) throw DimensionError("set_block out of range");
        for (std::size_t i = 0; i < m.rows_; ++i)
            for (std::size_t j = 0; j < m.cols_; ++j) (*this)(i0 + i, j0 + j) = m(i, j);
    }

    Vector col(std::size_t j) const {
        Vector out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }
    Vector row(std::size_t i) const {
        Vector out(cols_);
        for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
        return out;
    }

private:
    void check_same(const Matrix& o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_) throw DimensionError("matrix shape mismatch");
    }
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// M + M^T
inline Matrix sym2(const Matrix& m) {
    if (!m.square()) throw DimensionError("sym2: matrix not square");
    return m + m.transpose();
}

/// (M + M^T)/2
inline Matrix symmetrize(const Matrix& m) { return sym2(m) * 0.5; }

inline Matrix outer(const Vector& a, const Vector& b) {
    Matrix out(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = a[i] * b[j];
    return out;
}

inline Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("hstack: row mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    out.set_block(0, 0, a);
    out.set_block(0, a.cols(), b);
    return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionError("vstack: column mismatch");
    Matrix out(a.rows() + b.rows(), a.cols());
    out.set_block(0, 0, a);
    out.set_block(a.rows(), 0, b);
    return out;
}

inline Matrix as_column(const Vector& v) {
    Matrix out(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) out(i, 0) = v[i];
    return out;
}

inline Vector concat(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[a.size() + i] = b[i];
    return out;
}

}  // namespace homobs
