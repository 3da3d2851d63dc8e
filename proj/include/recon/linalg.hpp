#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace recon {

using Vec = std::vector<double>;

// Dense row-major matrix, just enough surface for this project.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }

    bool operator==(const Matrix& o) const { return rows == o.rows && cols == o.cols && a == o.a; }
};

inline double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

inline double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("dot: size mismatch");
    return dot(x.data(), y.data(), x.size());
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x.data(), x.data(), x.size())); }

inline double sum_sq(const Vec& x) { return dot(x.data(), x.data(), x.size()); }

// y += a*x
inline void axpy(double a, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// out = M x
inline void matvec(const Matrix& m, const double* x, double* out) {
    for (std::size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), x, m.cols);
}

inline Vec matvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.cols) throw std::invalid_argument("matvec: size mismatch");
    Vec out(m.rows);
    matvec(m, x.data(), out.data());
    return out;
}

// out = M^T x
inline void matTvec(const Matrix& m, const double* x, double* out) {
    for (std::size_t j = 0; j < m.cols; ++j) out[j] = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += xi * r[j];
    }
}

inline Vec matTvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.rows) throw std::invalid_argument("matTvec: size mismatch");
    Vec out(m.cols);
    matTvec(m, x.data(), out.data());
    return out;
}

inline bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline double cosine_similarity(const double* u, const double* v, std::size_t n) {
    const double nu = std::sqrt(dot(u, u, n));
    const double nv = std::sqrt(dot(v, v, n));
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero vector");
    return dot(u, v, n) / (nu * nv);
}

inline double cosine_similarity(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: size mismatch");
    return cosine_similarity(u.data(), v.data(), u.size());
}

}  // namespace recon
