#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recon/linalg.hpp"
#include "recon/rng.hpp"

namespace recon {

struct NormStats {
    Vec mu;
    Vec sigma;  // strictly positive
};

struct EmbeddingDataset {
    Matrix x;                       // n x d
    std::vector<int> y;             // +-1 binary, 0..C-1 multiclass
    std::optional<NormStats> norm;  // stats the data was normalized with

    std::size_t n() const { return x.rows; }
    std::size_t d() const { return x.cols; }
};

struct ImageShape {
    std::size_t ch = 0, h = 0, w = 0;
    std::size_t pixels() const { return ch * h * w; }
};

struct ImageDataset {
    Matrix s;  // n x (ch*h*w), values in [0,1]
    std::vector<int> y;
    ImageShape shape;
};

// Unit class means: vertices of a regular simplex embedded in the first
// C coordinates (C=2 gives an antipodal pair, pairwise angles >= 90 deg).
inline std::vector<Vec> simplex_means(std::size_t c, std::size_t d) {
    if (c < 2) throw std::invalid_argument("simplex_means: need C >= 2");
    if (c > d) throw std::invalid_argument("simplex_means: need C <= d");
    const double cc = static_cast<double>(c);
    const double scale = 1.0 / std::sqrt(1.0 - 1.0 / cc);
    std::vector<Vec> means(c, Vec(d, 0.0));
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t j = 0; j < c; ++j)
            means[k][j] = scale * ((j == k ? 1.0 : 0.0) - 1.0 / cc);
    }
    return means;
}

inline int class_to_label(std::size_t k, std::size_t c) {
    if (c == 2) return k == 0 ? 1 : -1;
    return static_cast<int>(k);
}

// Class k ~ N(class_sep * m_k, I) with unit means m_k at pairwise angle >= 60 deg.
inline EmbeddingDataset gen_gaussian_mixture(std::size_t n, std::size_t d, std::size_t c,
                                             double class_sep, std::uint64_t seed) {
    if (c < 2 || n % c != 0) throw std::invalid_argument("gen_gaussian_mixture: n must be divisible by C");
    if (!(class_sep > 0.0)) throw std::invalid_argument("gen_gaussian_mixture: class_sep must be > 0");
    const auto means = simplex_means(c, d);
    EmbeddingDataset ds;
    ds.x = Matrix(n, d);
    ds.y.resize(n);
    Rng rng(seed);
    const std::size_t per = n / c;
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < per; ++i) {
            const std::size_t row = k * per + i;
            double* xr = ds.x.row(row);
            for (std::size_t j = 0; j < d; ++j) xr[j] = class_sep * means[k][j] + rng.normal();
            ds.y[row] = class_to_label(k, c);
        }
    }
    return ds;
}

// Class-dependent oriented intensity ramp plus a class-colored blob, with
// per-sample jitter and pixel noise, clipped to [0,1].
inline ImageDataset gen_toy_images(std::size_t n, ImageShape shape, std::size_t c, std::uint64_t seed) {
    if (shape.pixels() == 0) throw std::invalid_argument("gen_toy_images: zero image dimensions");
    if (c < 2 || n % c != 0) throw std::invalid_argument("gen_toy_images: n must be divisible by C");
    ImageDataset ds;
    ds.shape = shape;
    ds.s = Matrix(n, shape.pixels());
    ds.y.resize(n);
    Rng rng(seed);
    const std::size_t per = n / c;
    const double pi = 3.14159265358979323846;
    for (std::size_t k = 0; k < c; ++k) {
        const double ang = pi * static_cast<double>(k) / static_cast<double>(c);
        const double gx = std::cos(ang), gy = std::sin(ang);
        const double cx0 = 0.25 + 0.5 * (static_cast<double>(k) / static_cast<double>(c));
        for (std::size_t i = 0; i < per; ++i) {
            const std::size_t row = k * per + i;
            double* img = ds.s.row(row);
            const double jx = 0.1 * rng.normal();
            const double jy = 0.1 * rng.normal();
            const double amp = 0.5 + 0.15 * rng.normal();
            for (std::size_t chn = 0; chn < shape.ch; ++chn) {
                // each class lights up its own channel strongest
                const double chw = (chn % c == k) ? 1.0 : 0.35;
                for (std::size_t yy = 0; yy < shape.h; ++yy) {
                    for (std::size_t xx = 0; xx < shape.w; ++xx) {
                        const double u = shape.w > 1 ? static_cast<double>(xx) / (shape.w - 1) : 0.5;
                        const double v = shape.h > 1 ? static_cast<double>(yy) / (shape.h - 1) : 0.5;
                        const double ramp = 0.5 + 0.4 * (gx * (u - 0.5) + gy * (v - 0.5));
                        const double dx = u - (cx0 + jx), dy = v - (0.5 + jy);
                        const double blob = amp * chw * std::exp(-(dx * dx + dy * dy) / 0.02);
                        double val = 0.5 * ramp + blob + 0.05 * rng.normal();
                        img[(chn * shape.h + yy) * shape.w + xx] = std::clamp(val, 0.0, 1.0);
                    }
                }
            }
            ds.y[row] = class_to_label(k, c);
        }
    }
    return ds;
}

// Column-wise (x - mu) / sigma with the n-1 std denominator. Errors on a
// zero-variance coordinate rather than clamping.
inline std::pair<Matrix, NormStats> normalize(const Matrix& x) {
    if (x.rows < 2) throw std::invalid_argument("normalize: need n >= 2");
    const std::size_t n = x.rows, d = x.cols;
    NormStats st;
    st.mu.assign(d, 0.0);
    st.sigma.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) st.mu[j] += r[j];
    }
    for (std::size_t j = 0; j < d; ++j) st.mu[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dlt = r[j] - st.mu[j];
            st.sigma[j] += dlt * dlt;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        st.sigma[j] = std::sqrt(st.sigma[j] / static_cast<double>(n - 1));
        if (st.sigma[j] <= 0.0)
            throw std::runtime_error("normalize: zero-variance coordinate " + std::to_string(j));
    }
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = x.row(i);
        double* o = out.row(i);
        for (std::size_t j = 0; j < d; ++j) o[j] = (r[j] - st.mu[j]) / st.sigma[j];
    }
    return {std::move(out), std::move(st)};
}

inline Matrix apply_normalization(const Matrix& x, const NormStats& st) {
    if (x.cols != st.mu.size()) throw std::invalid_argument("apply_normalization: dim mismatch");
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = (x(i, j) - st.mu[j]) / st.sigma[j];
    return out;
}

inline Matrix undo_normalization(const Matrix& x, const NormStats& st) {
    if (x.cols != st.mu.size()) throw std::invalid_argument("undo_normalization: dim mismatch");
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = x(i, j) * st.sigma[j] + st.mu[j];
    return out;
}

inline std::size_t num_classes(const EmbeddingDataset& ds) {
    bool binary = true;
    int maxl = 0;
    for (int y : ds.y) {
        if (y != 1 && y != -1) binary = false;
        maxl = std::max(maxl, y);
    }
    return binary ? 2 : static_cast<std::size_t>(maxl) + 1;
}

}  // namespace recon
