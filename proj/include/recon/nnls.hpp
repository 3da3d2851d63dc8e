#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "recon/linalg.hpp"

namespace recon {

struct NnlsResult {
    Vec x;          // nonnegative coefficients
    double rnorm;   // ||A x - b||
};

namespace detail {

// Solve G z = f for the index subset P via Cholesky on the submatrix.
inline std::vector<double> solve_subset(const Matrix& g, const Vec& f, const std::vector<std::size_t>& idx) {
    const std::size_t k = idx.size();
    std::vector<double> l(k * k, 0.0);
    std::vector<double> z(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = g(idx[i], idx[j]);
            for (std::size_t t = 0; t < j; ++t) s -= l[i * k + t] * l[j * k + t];
            if (i == j) {
                if (s <= 0.0) s = 1e-300;  // ill-conditioned subset; keep going
                l[i * k + i] = std::sqrt(s);
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        double s = f[idx[i]];
        for (std::size_t t = 0; t < i; ++t) s -= l[i * k + t] * z[t];
        z[i] = s / l[i * k + i];
    }
    for (std::size_t ii = k; ii-- > 0;) {
        double s = z[ii];
        for (std::size_t t = ii + 1; t < k; ++t) s -= l[t * k + ii] * z[t];
        z[ii] = s / l[ii * k + ii];
    }
    return z;
}

}  // namespace detail

// Lawson-Hanson active-set NNLS on the normal equations:
//   min ||A x - b||  s.t.  x >= 0
// A is p x n with columns as the fit vectors; works off G = A^T A and
// f = A^T b, so large p costs one Gram assembly.
inline NnlsResult nnls(const Matrix& a, const Vec& b, std::size_t max_outer = 0) {
    if (a.rows != b.size()) throw std::invalid_argument("nnls: dimension mismatch");
    const std::size_t n = a.cols;
    if (max_outer == 0) max_outer = 10 * n + 50;

    Matrix g(n, n);
    Vec f(n, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* r = a.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            f[j] += r[j] * b[i];
            for (std::size_t k = j; k < n; ++k) g(j, k) += r[j] * r[k];
        }
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < j; ++k) g(j, k) = g(k, j);

    double gmax = 0.0;
    for (std::size_t j = 0; j < n; ++j) gmax = std::max(gmax, std::abs(g(j, j)));
    const double tol = 10.0 * 2.220446049250313e-16 * gmax * static_cast<double>(n);

    Vec x(n, 0.0);
    std::vector<bool> passive(n, false);
    std::vector<std::size_t> pset;

    for (std::size_t outer = 0; outer < max_outer; ++outer) {
        // w = f - G x, restricted to the active (zero) set
        std::size_t best = n;
        double wbest = tol;
        for (std::size_t j = 0; j < n; ++j) {
            if (passive[j]) continue;
            double w = f[j];
            for (std::size_t k = 0; k < n; ++k) w -= g(j, k) * x[k];
            if (w > wbest) {
                wbest = w;
                best = j;
            }
        }
        if (best == n) break;
        passive[best] = true;
        pset.push_back(best);

        for (std::size_t inner = 0; inner < max_outer; ++inner) {
            std::vector<double> z = detail::solve_subset(g, f, pset);
            bool feasible = true;
            for (double v : z)
                if (v <= 0.0) feasible = false;
            if (feasible) {
                for (std::size_t t = 0; t < pset.size(); ++t) x[pset[t]] = z[t];
                break;
            }
            double amin = 1.0;
            for (std::size_t t = 0; t < pset.size(); ++t) {
                if (z[t] <= 0.0) {
                    const double xi = x[pset[t]];
                    const double step = xi / (xi - z[t]);
                    amin = std::min(amin, step);
                }
            }
            for (std::size_t t = 0; t < pset.size(); ++t)
                x[pset[t]] += amin * (z[t] - x[pset[t]]);
            std::vector<std::size_t> keep;
            for (std::size_t t = 0; t < pset.size(); ++t) {
                if (x[pset[t]] > tol) {
                    keep.push_back(pset[t]);
                } else {
                    x[pset[t]] = 0.0;
                    passive[pset[t]] = false;
                }
            }
            pset = std::move(keep);
            if (pset.empty()) break;
        }
    }

    double r2 = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double ri = b[i];
        const double* row = a.row(i);
        for (std::size_t j = 0; j < n; ++j)
            if (x[j] != 0.0) ri -= row[j] * x[j];
        r2 += ri * ri;
    }
    return {std::move(x), std::sqrt(r2)};
}

}  // namespace recon
